//! The three-block trial protocol: memory seeding, then baseline, shadowing
//! and post-shadowing blocks with the memory field threaded through.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::dynamics::{
    BlockInputs, FieldModel, MemoryParams, NoiseSpec, PlanningParams, SystemState, Trajectory,
};
use crate::error::{Error, Result};
use crate::field::{sample_input, GaussianInputSpec, Grid};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum BlockKind {
    Baseline,
    Shadowing,
    Post,
}

impl BlockKind {
    pub const ALL: [BlockKind; 3] = [BlockKind::Baseline, BlockKind::Shadowing, BlockKind::Post];

    pub fn as_str(self) -> &'static str {
        match self {
            BlockKind::Baseline => "baseline",
            BlockKind::Shadowing => "shadowing",
            BlockKind::Post => "post",
        }
    }

    /// Only the shadowing block hears the model talker.
    pub fn has_auditory_input(self) -> bool {
        matches!(self, BlockKind::Shadowing)
    }

    fn noise_stream(self) -> u64 {
        match self {
            BlockKind::Baseline => 1,
            BlockKind::Shadowing => 2,
            BlockKind::Post => 3,
        }
    }
}

impl fmt::Display for BlockKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for BlockKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "baseline" => Ok(BlockKind::Baseline),
            "shadowing" => Ok(BlockKind::Shadowing),
            "post" => Ok(BlockKind::Post),
            other => Err(Error::Config(format!("unknown block `{other}`"))),
        }
    }
}

const SEED_STREAM: u64 = 0;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioInputs {
    /// Retrieval of the speaker's own target, present in every block.
    pub response: GaussianInputSpec,
    /// The model talker, present only while shadowing.
    pub auditory: GaussianInputSpec,
    /// Strong input used once to lay down the initial memory trace.
    pub seed: GaussianInputSpec,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentScenario {
    pub name: String,
    pub grid: Grid,
    pub planning: PlanningParams,
    pub memory: MemoryParams,
    pub noise: NoiseSpec,
    pub inputs: ScenarioInputs,
    /// Duration of each block (ms).
    pub block_duration: f64,
    /// Integration step (ms).
    pub dt: f64,
    /// Keep every `frame_stride`-th step when frames are retained.
    pub frame_stride: usize,
}

impl ExperimentScenario {
    pub const DEFAULT_DT: f64 = 0.5;
    /// Spacing of retained frames, in ms.
    pub const DEFAULT_FRAME_INTERVAL: f64 = 2.0;

    pub fn default_frame_stride(dt: f64) -> usize {
        ((Self::DEFAULT_FRAME_INTERVAL / dt).round() as usize).max(1)
    }

    pub fn validate(&self) -> Result<()> {
        self.planning.validate()?;
        self.memory.validate()?;
        self.noise.validate()?;
        if self.memory.tau_mem <= self.planning.tau {
            return Err(Error::param(
                "memory.tau_mem",
                format!(
                    "memory must evolve more slowly than planning: tau_mem ({}) must exceed tau ({})",
                    self.memory.tau_mem, self.planning.tau
                ),
            ));
        }
        for (key, input) in [
            ("inputs.response", &self.inputs.response),
            ("inputs.auditory", &self.inputs.auditory),
            ("inputs.seed", &self.inputs.seed),
        ] {
            input.validate(key)?;
            if !self.grid.contains(input.centroid) {
                return Err(Error::param(
                    format!("{key}.centroid"),
                    format!("{} lies outside the grid {}", input.centroid, self.grid),
                ));
            }
        }
        if !(self.block_duration.is_finite() && self.block_duration > 0.0) {
            return Err(Error::param("block_duration", "must be positive and finite"));
        }
        if !(self.dt.is_finite() && self.dt > 0.0) {
            return Err(Error::param("dt", "must be positive and finite"));
        }
        if self.dt > self.block_duration {
            return Err(Error::param("dt", "must not exceed block_duration"));
        }
        if self.frame_stride == 0 {
            return Err(Error::param("frame_stride", "must be at least 1"));
        }
        Ok(())
    }

    pub fn block_inputs(&self, kind: BlockKind) -> BlockInputs {
        BlockInputs {
            response: sample_input(&self.inputs.response, &self.grid),
            auditory: if kind.has_auditory_input() {
                sample_input(&self.inputs.auditory, &self.grid)
            } else {
                vec![0.0; self.grid.len()]
            },
        }
    }

    /// The seeding phase drives the field through the response channel.
    pub fn seeding_inputs(&self) -> BlockInputs {
        BlockInputs {
            response: sample_input(&self.inputs.seed, &self.grid),
            auditory: vec![0.0; self.grid.len()],
        }
    }
}

/// Location and time of the largest activation in a trajectory.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Peak {
    pub t: f64,
    pub x: f64,
    pub u: f64,
}

/// Global maximum over every frame and grid point. Ties go to the earliest
/// frame, then to the lowest x.
pub fn peak_readout(trajectory: &Trajectory, grid: &Grid) -> Result<Peak> {
    let mut best: Option<(usize, usize, f64)> = None;
    for (f, frame) in trajectory.u_frames.iter().enumerate() {
        if frame.len() != grid.len() {
            return Err(Error::LengthMismatch {
                what: "trajectory frame",
                got: frame.len(),
                expected: grid.len(),
            });
        }
        for (j, &v) in frame.iter().enumerate() {
            if best.is_none_or(|(_, _, b)| v > b) {
                best = Some((f, j, v));
            }
        }
    }
    let (f, j, u) = best.ok_or(Error::EmptyTrajectory)?;
    Ok(Peak {
        t: trajectory.times[f],
        x: grid.x(j),
        u,
    })
}

#[derive(Clone, Debug, PartialEq)]
pub struct TrialResult {
    pub block: BlockKind,
    pub peak: Peak,
    /// Frames at the scenario's stride, kept only on request.
    pub trajectory: Option<Trajectory>,
}

impl TrialResult {
    pub fn peak_x(&self) -> f64 {
        self.peak.x
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct ExperimentResult {
    /// Memory after the seeding phase.
    pub seeded_memory: Vec<f64>,
    /// One entry per block, in protocol order.
    pub trials: Vec<TrialResult>,
    /// Post-shadowing peak minus shadowing peak.
    pub x_diff: f64,
    pub final_state: SystemState,
}

impl ExperimentResult {
    pub fn trial(&self, kind: BlockKind) -> &TrialResult {
        self.trials
            .iter()
            .find(|t| t.block == kind)
            .expect("every block is present")
    }

    pub fn peak_x(&self, kind: BlockKind) -> f64 {
        self.trial(kind).peak.x
    }

    pub fn final_memory(&self) -> &[f64] {
        &self.final_state.u_mem
    }
}

/// Runs the protocol for one scenario, with both kernels prepared once.
#[derive(Clone, Debug)]
pub struct Simulator {
    scenario: ExperimentScenario,
    model: FieldModel,
}

impl Simulator {
    pub fn new(scenario: ExperimentScenario) -> Result<Self> {
        scenario.validate()?;
        let model = FieldModel::new(scenario.grid, scenario.planning, scenario.memory)?;
        Ok(Simulator { scenario, model })
    }

    pub fn scenario(&self) -> &ExperimentScenario {
        &self.scenario
    }

    pub fn model(&self) -> &FieldModel {
        &self.model
    }

    fn run_phase(
        &self,
        initial: &SystemState,
        inputs: &BlockInputs,
        stream: u64,
    ) -> Result<Trajectory> {
        let s = &self.scenario;
        self.model
            .integrate(initial, inputs, &s.noise, stream, s.block_duration, s.dt, 1)
    }

    /// Lays down the initial memory trace: empty memory, resting planning
    /// field, one block driven by the seed input alone.
    pub fn init_memory(&self) -> Result<Vec<f64>> {
        let s = &self.scenario;
        let initial = SystemState::resting(&s.grid, s.planning.h);
        let traj = self
            .run_phase(&initial, &s.seeding_inputs(), SEED_STREAM)
            .map_err(|e| Error::Seeding(Box::new(e)))?;
        Ok(traj.u_mem_frames.last().cloned().expect("at least one frame"))
    }

    /// Runs one block from `state`'s memory. The planning field restarts at
    /// its resting level; memory carries over.
    pub fn run_block(
        &self,
        kind: BlockKind,
        state: &SystemState,
        keep_frames: bool,
    ) -> Result<(TrialResult, SystemState)> {
        let s = &self.scenario;
        let wrap = |e: Error| Error::Block {
            block: kind,
            source: Box::new(e),
        };
        if state.u_mem.len() != s.grid.len() {
            return Err(wrap(Error::LengthMismatch {
                what: "memory field",
                got: state.u_mem.len(),
                expected: s.grid.len(),
            }));
        }
        let initial = SystemState {
            u: vec![s.planning.h; s.grid.len()],
            u_mem: state.u_mem.clone(),
            t: 0.0,
        };
        let traj = self
            .run_phase(&initial, &s.block_inputs(kind), kind.noise_stream())
            .map_err(wrap)?;
        let peak = peak_readout(&traj, &s.grid).map_err(wrap)?;
        let end = SystemState {
            u: traj.u_frames.last().cloned().expect("at least one frame"),
            u_mem: traj.u_mem_frames.last().cloned().expect("at least one frame"),
            t: *traj.times.last().expect("at least one frame"),
        };
        let trajectory = keep_frames.then(|| traj.downsample(s.frame_stride));
        Ok((
            TrialResult {
                block: kind,
                peak,
                trajectory,
            },
            end,
        ))
    }

    pub fn run_experiment(&self, keep_frames: bool) -> Result<ExperimentResult> {
        let s = &self.scenario;
        let seeded_memory = self.init_memory()?;
        let mut state = SystemState {
            u: vec![s.planning.h; s.grid.len()],
            u_mem: seeded_memory.clone(),
            t: 0.0,
        };
        let mut trials = Vec::with_capacity(3);
        for kind in BlockKind::ALL {
            let (trial, end) = self.run_block(kind, &state, keep_frames)?;
            trials.push(trial);
            state = end;
        }
        let x_diff = trials[2].peak.x - trials[1].peak.x;
        Ok(ExperimentResult {
            seeded_memory,
            trials,
            x_diff,
            final_state: state,
        })
    }
}

pub fn init_memory(scenario: &ExperimentScenario) -> Result<Vec<f64>> {
    Simulator::new(scenario.clone())?.init_memory()
}

pub fn run_block(
    kind: BlockKind,
    state: &SystemState,
    scenario: &ExperimentScenario,
) -> Result<(TrialResult, SystemState)> {
    Simulator::new(scenario.clone())?.run_block(kind, state, false)
}

pub fn run_experiment(scenario: &ExperimentScenario) -> Result<ExperimentResult> {
    Simulator::new(scenario.clone())?.run_experiment(false)
}
