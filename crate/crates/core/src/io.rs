//! Config documents (TOML) and result files (CSV, JSON).
//!
//! Config documents carry a `schema_version` and reject unknown keys. Every
//! physics parameter must be given explicitly; only `grid`, `dt` and
//! `frame_stride` have defaults, and they are written back out in full by
//! [`write_config`] and in every archive.

use std::fs;
use std::io::Write;
use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::dynamics::{MemoryParams, NoiseSpec, PlanningParams, Trajectory};
use crate::error::{Error, Result};
use crate::field::Grid;
use crate::protocol::{BlockKind, ExperimentResult, ExperimentScenario, ScenarioInputs};
use crate::sweep::{SeedSummary, SweepAxis, SweepResult, SweepRow, SweepSpec};

pub const SCHEMA_VERSION: u32 = 1;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepSection {
    pub parameter: String,
    pub values: Vec<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub parameter2: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub values2: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub seeds: Vec<u64>,
}

/// On-disk form of a scenario (plus an optional sweep).
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ConfigDocument {
    pub schema_version: u32,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub name: Option<String>,
    pub block_duration: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub dt: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub frame_stride: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub grid: Option<Grid>,
    pub planning: PlanningParams,
    pub memory: MemoryParams,
    pub noise: NoiseSpec,
    pub inputs: ScenarioInputs,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sweep: Option<SweepSection>,
}

impl ConfigDocument {
    pub fn from_scenario(scenario: &ExperimentScenario) -> Self {
        ConfigDocument {
            schema_version: SCHEMA_VERSION,
            name: Some(scenario.name.clone()),
            block_duration: scenario.block_duration,
            dt: Some(scenario.dt),
            frame_stride: Some(scenario.frame_stride),
            grid: Some(scenario.grid),
            planning: scenario.planning,
            memory: scenario.memory,
            noise: scenario.noise,
            inputs: scenario.inputs,
            sweep: None,
        }
    }

    pub fn with_sweep(mut self, spec: &SweepSpec) -> Self {
        let second = spec.axes.get(1);
        self.sweep = Some(SweepSection {
            parameter: spec.axes[0].parameter.clone(),
            values: spec.axes[0].values.clone(),
            parameter2: second.map(|a| a.parameter.clone()),
            values2: second.map(|a| a.values.clone()),
            seeds: spec.seeds.clone(),
        });
        self
    }

    pub fn scenario(&self) -> Result<ExperimentScenario> {
        if self.schema_version != SCHEMA_VERSION {
            return Err(Error::param(
                "schema_version",
                format!(
                    "unsupported version {} (expected {SCHEMA_VERSION})",
                    self.schema_version
                ),
            ));
        }
        let dt = self.dt.unwrap_or(ExperimentScenario::DEFAULT_DT);
        let scenario = ExperimentScenario {
            name: self.name.clone().unwrap_or_else(|| "custom".to_string()),
            grid: self.grid.unwrap_or_default(),
            planning: self.planning,
            memory: self.memory,
            noise: self.noise,
            inputs: self.inputs,
            block_duration: self.block_duration,
            dt,
            frame_stride: self
                .frame_stride
                .unwrap_or_else(|| ExperimentScenario::default_frame_stride(dt)),
        };
        scenario.validate()?;
        Ok(scenario)
    }

    pub fn sweep_spec(&self) -> Result<Option<SweepSpec>> {
        let Some(section) = &self.sweep else {
            return Ok(None);
        };
        let mut axes = vec![SweepAxis {
            parameter: section.parameter.clone(),
            values: section.values.clone(),
        }];
        match (&section.parameter2, &section.values2) {
            (Some(p), Some(v)) => axes.push(SweepAxis {
                parameter: p.clone(),
                values: v.clone(),
            }),
            (None, None) => {}
            _ => {
                return Err(Error::Config(
                    "sweep.parameter2 and sweep.values2 must be given together".into(),
                ))
            }
        }
        let spec = SweepSpec {
            base: self.scenario()?,
            axes,
            seeds: section.seeds.clone(),
        };
        spec.validate()?;
        Ok(Some(spec))
    }
}

/// Parses and validates a config document.
pub fn parse_config(text: &str) -> Result<(ExperimentScenario, Option<SweepSpec>)> {
    let doc: ConfigDocument = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
    let scenario = doc.scenario()?;
    let sweep = doc.sweep_spec()?;
    Ok((scenario, sweep))
}

pub fn read_config(path: &Path) -> Result<(ExperimentScenario, Option<SweepSpec>)> {
    let text = fs::read_to_string(path).map_err(|source| Error::Io {
        path: path.to_path_buf(),
        source,
    })?;
    parse_config(&text)
}

/// Serialises a scenario (and optional sweep) as a complete config document.
pub fn write_config(scenario: &ExperimentScenario, sweep: Option<&SweepSpec>) -> String {
    let mut doc = ConfigDocument::from_scenario(scenario);
    if let Some(spec) = sweep {
        doc = doc.with_sweep(spec);
    }
    toml::to_string(&doc).expect("config documents always serialise")
}

/// SHA-256 of the normalised config text, hex encoded.
pub fn config_hash(scenario: &ExperimentScenario) -> String {
    Sha256::digest(write_config(scenario, None).as_bytes())
        .iter()
        .map(|b| format!("{b:02x}"))
        .collect()
}

/// Seventeen significant digits, enough to reproduce any f64 exactly.
pub fn fmt_f64(x: f64) -> String {
    format!("{x:.16e}")
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ArchiveMetadata {
    /// `preset:<name>` or `config:<path>`.
    pub source: String,
    pub config_hash: String,
    pub seed: u64,
    pub q: f64,
    pub dt: f64,
    pub grid: Grid,
    /// Command-line overrides applied on top of the source, as `key=value`.
    #[serde(default)]
    pub overrides: Vec<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub created_unix: Option<u64>,
}

impl ArchiveMetadata {
    pub fn new(source: impl Into<String>, scenario: &ExperimentScenario) -> Self {
        ArchiveMetadata {
            source: source.into(),
            config_hash: config_hash(scenario),
            seed: scenario.noise.seed,
            q: scenario.noise.q,
            dt: scenario.dt,
            grid: scenario.grid,
            overrides: Vec::new(),
            created_unix: None,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BlockRecord {
    pub block: BlockKind,
    pub peak_t: f64,
    pub peak_x: f64,
    pub peak_u: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub trajectory: Option<Trajectory>,
}

/// JSON form of one experiment: enough to rerun it and to check its numbers.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ResultArchive {
    pub schema_version: u32,
    pub metadata: ArchiveMetadata,
    pub scenario: ExperimentScenario,
    pub blocks: Vec<BlockRecord>,
    pub x_diff: f64,
    pub seeded_memory: Vec<f64>,
    pub final_memory: Vec<f64>,
}

impl ResultArchive {
    pub fn new(
        metadata: ArchiveMetadata,
        scenario: &ExperimentScenario,
        result: &ExperimentResult,
    ) -> Self {
        ResultArchive {
            schema_version: SCHEMA_VERSION,
            metadata,
            scenario: scenario.clone(),
            blocks: result
                .trials
                .iter()
                .map(|t| BlockRecord {
                    block: t.block,
                    peak_t: t.peak.t,
                    peak_x: t.peak.x,
                    peak_u: t.peak.u,
                    trajectory: t.trajectory.clone(),
                })
                .collect(),
            x_diff: result.x_diff,
            seeded_memory: result.seeded_memory.clone(),
            final_memory: result.final_memory().to_vec(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SweepArchive {
    pub schema_version: u32,
    pub metadata: ArchiveMetadata,
    pub scenario: ExperimentScenario,
    pub sweep: SweepSection,
    pub rows: Vec<SweepRow>,
    pub summary: Vec<SeedSummary>,
}

impl SweepArchive {
    pub fn new(metadata: ArchiveMetadata, spec: &SweepSpec, result: &SweepResult) -> Self {
        let section = ConfigDocument::from_scenario(&spec.base)
            .with_sweep(spec)
            .sweep
            .expect("sweep section was just set");
        SweepArchive {
            schema_version: SCHEMA_VERSION,
            metadata,
            scenario: spec.base.clone(),
            sweep: section,
            rows: result.rows.clone(),
            summary: result.summary(),
        }
    }
}

/// Metadata written next to a CSV result, which has no room for it.
///
/// Together with the CSV it makes the run self-describing: the scenario is
/// the one actually simulated, after any command-line overrides.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub schema_version: u32,
    pub metadata: ArchiveMetadata,
    pub scenario: ExperimentScenario,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sweep: Option<SweepSection>,
}

impl RunManifest {
    pub fn new(
        metadata: ArchiveMetadata,
        scenario: &ExperimentScenario,
        sweep: Option<&SweepSpec>,
    ) -> Self {
        RunManifest {
            schema_version: SCHEMA_VERSION,
            metadata,
            scenario: scenario.clone(),
            sweep: sweep.and_then(|spec| {
                ConfigDocument::from_scenario(&spec.base)
                    .with_sweep(spec)
                    .sweep
            }),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Format {
    Csv,
    Json,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum FieldKind {
    Planning,
    Memory,
}

pub const EXPERIMENT_CSV_HEADER: [&str; 5] = ["block", "peak_t", "peak_x", "peak_u", "x_diff"];

pub fn write_experiment_csv<W: Write>(result: &ExperimentResult, out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(EXPERIMENT_CSV_HEADER)?;
    let x_diff = fmt_f64(result.x_diff);
    for t in &result.trials {
        w.write_record([
            t.block.as_str(),
            &fmt_f64(t.peak.t),
            &fmt_f64(t.peak.x),
            &fmt_f64(t.peak.u),
            &x_diff,
        ])?;
    }
    w.flush().map_err(csv::Error::from)?;
    Ok(())
}

/// One row per sweep row: the swept values, the seed (blank when the base
/// seed was used), peak locations, `x_diff`, and the error message of a
/// failed row.
pub fn write_sweep_csv<W: Write>(result: &SweepResult, out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    let mut header = result.parameters.clone();
    header.extend(
        [
            "seed",
            "baseline_peak_x",
            "shadowing_peak_x",
            "post_peak_x",
            "x_diff",
            "error",
        ]
        .map(String::from),
    );
    w.write_record(&header)?;
    for row in &result.rows {
        let mut rec: Vec<String> = row.params.iter().map(|(_, v)| fmt_f64(*v)).collect();
        rec.push(row.seed.map(|s| s.to_string()).unwrap_or_default());
        match &row.outcome {
            Ok(m) => {
                rec.extend(
                    [m.baseline_peak_x, m.shadowing_peak_x, m.post_peak_x, m.x_diff].map(fmt_f64),
                );
                rec.push(String::new());
            }
            Err(e) => {
                rec.extend(std::iter::repeat_n(String::new(), 4));
                rec.push(e.clone());
            }
        }
        w.write_record(&rec)?;
    }
    w.flush().map_err(csv::Error::from)?;
    Ok(())
}

pub fn write_json<T: Serialize, W: Write>(value: &T, mut out: W) -> Result<()> {
    serde_json::to_writer_pretty(&mut out, value)?;
    out.write_all(b"\n").map_err(csv::Error::from)?;
    Ok(())
}

pub fn read_archive(text: &str) -> Result<ResultArchive> {
    Ok(serde_json::from_str(text)?)
}

/// Long-format `t,x,value` rows, one per frame and grid point.
pub fn export_trajectory<W: Write>(
    trajectory: &Trajectory,
    which: FieldKind,
    grid: &Grid,
    out: W,
) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["t", "x", "value"])?;
    write_frames(&mut w, None, trajectory, which, grid)?;
    w.flush().map_err(csv::Error::from)?;
    Ok(())
}

/// Like [`export_trajectory`] for every block of an experiment, with a
/// leading `block` column.
pub fn export_experiment_trajectories<W: Write>(
    result: &ExperimentResult,
    which: FieldKind,
    grid: &Grid,
    out: W,
) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["block", "t", "x", "value"])?;
    for trial in &result.trials {
        let traj = trial.trajectory.as_ref().ok_or(Error::EmptyTrajectory)?;
        write_frames(&mut w, Some(trial.block), traj, which, grid)?;
    }
    w.flush().map_err(csv::Error::from)?;
    Ok(())
}

fn write_frames<W: Write>(
    w: &mut csv::Writer<W>,
    block: Option<BlockKind>,
    trajectory: &Trajectory,
    which: FieldKind,
    grid: &Grid,
) -> Result<()> {
    if trajectory.is_empty() {
        return Err(Error::EmptyTrajectory);
    }
    let frames = match which {
        FieldKind::Planning => &trajectory.u_frames,
        FieldKind::Memory => &trajectory.u_mem_frames,
    };
    let xs: Vec<String> = grid.points().into_iter().map(fmt_f64).collect();
    for (t, frame) in trajectory.times.iter().zip(frames) {
        if frame.len() != grid.len() {
            return Err(Error::LengthMismatch {
                what: "trajectory frame",
                got: frame.len(),
                expected: grid.len(),
            });
        }
        let t = fmt_f64(*t);
        for (x, v) in xs.iter().zip(frame) {
            let v = fmt_f64(*v);
            match block {
                Some(b) => w.write_record([b.as_str(), &t, x, &v])?,
                None => w.write_record([t.as_str(), x, &v])?,
            }
        }
    }
    Ok(())
}

/// Writes `bytes` to `path`, reporting the path on failure.
pub fn write_file(path: &Path, bytes: &[u8]) -> Result<()> {
    fs::write(path, bytes).map_err(|source| Error::Io {
        path: path.to_path_buf(),
        source,
    })
}
