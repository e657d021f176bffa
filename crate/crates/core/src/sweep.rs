//! Parameter sweeps over one or two scenario parameters, optionally
//! replicated over noise seeds.
//!
//! Parameters are addressed by dotted paths into the scenario schema, the
//! same names used in config files, e.g. `memory.kernel.c_inhibit` or
//! `inputs.auditory.centroid`.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::error::{Error, Result};
use crate::protocol::{BlockKind, ExperimentScenario, Simulator};

/// Returns a copy of `scenario` with the numeric parameter at `path` set to
/// `value`. Unknown or non-numeric paths are rejected.
pub fn set_parameter(
    scenario: &ExperimentScenario,
    path: &str,
    value: f64,
) -> Result<ExperimentScenario> {
    let mut doc = serde_json::to_value(scenario)?;
    let mut node = &mut doc;
    for key in path.split('.') {
        node = node
            .as_object_mut()
            .and_then(|o| o.get_mut(key))
            .ok_or_else(|| Error::UnknownPath(path.to_string()))?;
    }
    *node = match node {
        Value::Number(n) if n.is_u64() => {
            if value.fract() != 0.0 || value < 0.0 || !value.is_finite() {
                return Err(Error::param(
                    path,
                    format!("expects a non-negative integer, got {value}"),
                ));
            }
            Value::from(value as u64)
        }
        Value::Number(_) => serde_json::Number::from_f64(value)
            .map(Value::Number)
            .ok_or_else(|| Error::param(path, format!("must be finite, got {value}")))?,
        _ => return Err(Error::UnknownPath(path.to_string())),
    };
    let out: ExperimentScenario =
        serde_json::from_value(doc).map_err(|e| Error::param(path, e.to_string()))?;
    Ok(out)
}

/// Reads the numeric parameter at `path`.
pub fn get_parameter(scenario: &ExperimentScenario, path: &str) -> Result<f64> {
    let doc = serde_json::to_value(scenario)?;
    let mut node = &doc;
    for key in path.split('.') {
        node = node
            .get(key)
            .ok_or_else(|| Error::UnknownPath(path.to_string()))?;
    }
    node.as_f64()
        .ok_or_else(|| Error::UnknownPath(path.to_string()))
}

/// Parameter paths and the values assigned to them in one sweep row.
pub type Assignment = Vec<(String, f64)>;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepAxis {
    pub parameter: String,
    pub values: Vec<f64>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct SweepSpec {
    pub base: ExperimentScenario,
    pub axes: Vec<SweepAxis>,
    /// Noise seeds to replicate each combination over; empty means the
    /// base scenario's own seed.
    pub seeds: Vec<u64>,
}

impl SweepSpec {
    pub fn new(base: ExperimentScenario, parameter: &str, values: Vec<f64>) -> Self {
        SweepSpec {
            base,
            axes: vec![SweepAxis {
                parameter: parameter.to_string(),
                values,
            }],
            seeds: Vec::new(),
        }
    }

    pub fn with_axis(mut self, parameter: &str, values: Vec<f64>) -> Self {
        self.axes.push(SweepAxis {
            parameter: parameter.to_string(),
            values,
        });
        self
    }

    pub fn with_seeds(mut self, seeds: Vec<u64>) -> Self {
        self.seeds = seeds;
        self
    }

    /// Checks the axes up front so bad paths fail before any row runs.
    pub fn validate(&self) -> Result<()> {
        self.base.validate()?;
        if self.axes.is_empty() || self.axes.len() > 2 {
            return Err(Error::Config(format!(
                "a sweep needs one or two parameters, got {}",
                self.axes.len()
            )));
        }
        for axis in &self.axes {
            let first = axis.values.first().ok_or_else(|| {
                Error::Config(format!("sweep over `{}` has no values", axis.parameter))
            })?;
            set_parameter(&self.base, &axis.parameter, *first)?;
        }
        Ok(())
    }

    /// Parameter combinations in specification order (first axis outermost).
    pub fn combinations(&self) -> Vec<Assignment> {
        let mut combos: Vec<Assignment> = vec![Vec::new()];
        for axis in &self.axes {
            combos = combos
                .into_iter()
                .flat_map(|prefix| {
                    axis.values.iter().map(move |&v| {
                        let mut c = prefix.clone();
                        c.push((axis.parameter.clone(), v));
                        c
                    })
                })
                .collect();
        }
        combos
    }

    pub fn scenario_for(&self, params: &[(String, f64)], seed: Option<u64>) -> Result<ExperimentScenario> {
        let mut s = self.base.clone();
        for (path, value) in params {
            s = set_parameter(&s, path, *value)?;
        }
        if let Some(seed) = seed {
            s.noise.seed = seed;
        }
        s.validate()?;
        Ok(s)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct RowMetrics {
    pub baseline_peak_x: f64,
    pub shadowing_peak_x: f64,
    pub post_peak_x: f64,
    pub x_diff: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub params: Assignment,
    pub seed: Option<u64>,
    #[serde(with = "outcome")]
    pub outcome: std::result::Result<RowMetrics, String>,
}

mod outcome {
    use super::RowMetrics;
    use serde::{Deserialize, Deserializer, Serialize, Serializer};

    #[derive(Serialize, Deserialize)]
    #[serde(rename_all = "lowercase")]
    enum Repr {
        Ok(RowMetrics),
        Error(String),
    }

    pub fn serialize<S: Serializer>(
        v: &Result<RowMetrics, String>,
        s: S,
    ) -> Result<S::Ok, S::Error> {
        match v {
            Ok(m) => Repr::Ok(*m),
            Err(e) => Repr::Error(e.clone()),
        }
        .serialize(s)
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<Result<RowMetrics, String>, D::Error> {
        Ok(match Repr::deserialize(d)? {
            Repr::Ok(m) => Ok(m),
            Repr::Error(e) => Err(e),
        })
    }
}

/// Mean and standard deviation of a metric over replicate seeds.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Spread {
    pub mean: f64,
    pub std: f64,
}

impl Spread {
    fn of(values: &[f64]) -> Option<Spread> {
        if values.is_empty() {
            return None;
        }
        let n = values.len() as f64;
        let mean = values.iter().sum::<f64>() / n;
        let var = if values.len() > 1 {
            values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0)
        } else {
            0.0
        };
        Some(Spread {
            mean,
            std: var.sqrt(),
        })
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SeedSummary {
    pub params: Assignment,
    pub n_ok: usize,
    pub n_failed: usize,
    pub baseline_peak_x: Option<Spread>,
    pub shadowing_peak_x: Option<Spread>,
    pub post_peak_x: Option<Spread>,
    pub x_diff: Option<Spread>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SweepResult {
    pub parameters: Vec<String>,
    pub rows: Vec<SweepRow>,
}

impl SweepResult {
    /// Per-combination statistics over replicate seeds, in row order.
    pub fn summary(&self) -> Vec<SeedSummary> {
        let mut groups: Vec<(Assignment, Vec<&SweepRow>)> = Vec::new();
        for row in &self.rows {
            match groups.last_mut() {
                Some((params, rows)) if *params == row.params => rows.push(row),
                _ => groups.push((row.params.clone(), vec![row])),
            }
        }
        groups
            .into_iter()
            .map(|(params, rows)| {
                let ok: Vec<RowMetrics> =
                    rows.iter().filter_map(|r| r.outcome.as_ref().ok().copied()).collect();
                let pick = |f: fn(&RowMetrics) -> f64| {
                    Spread::of(&ok.iter().map(f).collect::<Vec<_>>())
                };
                SeedSummary {
                    params,
                    n_ok: ok.len(),
                    n_failed: rows.len() - ok.len(),
                    baseline_peak_x: pick(|m| m.baseline_peak_x),
                    shadowing_peak_x: pick(|m| m.shadowing_peak_x),
                    post_peak_x: pick(|m| m.post_peak_x),
                    x_diff: pick(|m| m.x_diff),
                }
            })
            .collect()
    }
}

fn run_row(spec: &SweepSpec, params: Assignment, seed: Option<u64>) -> SweepRow {
    let outcome = spec
        .scenario_for(&params, seed)
        .and_then(|s| Simulator::new(s)?.run_experiment(false))
        .map(|r| RowMetrics {
            baseline_peak_x: r.peak_x(BlockKind::Baseline),
            shadowing_peak_x: r.peak_x(BlockKind::Shadowing),
            post_peak_x: r.peak_x(BlockKind::Post),
            x_diff: r.x_diff,
        })
        .map_err(|e| e.to_string());
    SweepRow {
        params,
        seed,
        outcome,
    }
}

/// Runs every combination (times every seed). Rows come back in
/// specification order whatever `jobs` is; failures are recorded inline.
pub fn run_sweep(spec: &SweepSpec, jobs: usize) -> Result<SweepResult> {
    spec.validate()?;
    let seeds: Vec<Option<u64>> = if spec.seeds.is_empty() {
        vec![None]
    } else {
        spec.seeds.iter().copied().map(Some).collect()
    };
    let tasks: Vec<(Assignment, Option<u64>)> = spec
        .combinations()
        .into_iter()
        .flat_map(|c| seeds.iter().map(move |&s| (c.clone(), s)))
        .collect();

    let rows = if jobs <= 1 {
        tasks
            .into_iter()
            .map(|(p, s)| run_row(spec, p, s))
            .collect()
    } else {
        let pool = rayon::ThreadPoolBuilder::new()
            .num_threads(jobs)
            .build()
            .map_err(|e| Error::Config(format!("cannot start {jobs} workers: {e}")))?;
        pool.install(|| {
            tasks
                .into_par_iter()
                .map(|(p, s)| run_row(spec, p, s))
                .collect()
        })
    };
    Ok(SweepResult {
        parameters: spec.axes.iter().map(|a| a.parameter.clone()).collect(),
        rows,
    })
}
