//! Built-in scenarios.
//!
//! `strut` shows convergence during shadowing followed by a return to
//! baseline; `bath` differs only in the model talker's position and in a
//! stronger, wider inhibitory surround in the memory kernel.

use crate::dynamics::{MemoryParams, NoiseSpec, PlanningParams};
use crate::error::{Error, Result};
use crate::field::{GaussianInputSpec, Grid, KernelSpec, SigmoidSpec};
use crate::protocol::{ExperimentScenario, ScenarioInputs};

pub const NAMES: [&str; 2] = ["strut", "bath"];

/// Noise strength the presets were designed around. The presets themselves
/// run noise-free; pass this as `q` for stochastic runs.
pub const REFERENCE_Q: f64 = 3.0;

const GATE: SigmoidSpec = SigmoidSpec {
    beta: 1.5,
    alpha: 0.0,
};

const PLANNING_KERNEL: KernelSpec = KernelSpec {
    c_excite: 2.0,
    sigma_excite: 0.2,
    c_inhibit: 1.0,
    sigma_inhibit: 2.0,
    c_global: 0.5,
};

fn base(name: &str, auditory_centroid: f64, memory_kernel: KernelSpec) -> ExperimentScenario {
    let dt = ExperimentScenario::DEFAULT_DT;
    ExperimentScenario {
        name: name.to_string(),
        grid: Grid::default(),
        planning: PlanningParams {
            tau: 25.0,
            h: -2.0,
            c_memory: 10.0,
            c_auditory: 10.0,
            c_response: 1.0,
            kernel: PLANNING_KERNEL,
            sigmoid: GATE,
        },
        memory: MemoryParams {
            tau_mem: 150.0,
            tau_decay: 500.0,
            kernel: memory_kernel,
            sigmoid: GATE,
            threshold: 0.0,
        },
        noise: NoiseSpec { q: 0.0, seed: 0 },
        inputs: ScenarioInputs {
            response: GaussianInputSpec::new(10.0, 0.0, 0.5),
            auditory: GaussianInputSpec::new(10.0, auditory_centroid, 0.5),
            seed: GaussianInputSpec::new(100.0, 0.0, 0.5),
        },
        block_duration: 300.0,
        dt,
        frame_stride: ExperimentScenario::default_frame_stride(dt),
    }
}

pub fn strut() -> ExperimentScenario {
    base(
        "strut",
        -1.4,
        KernelSpec {
            c_excite: 2.0,
            sigma_excite: 0.1,
            c_inhibit: 1.0,
            sigma_inhibit: 2.0,
            c_global: 0.0,
        },
    )
}

pub fn bath() -> ExperimentScenario {
    base(
        "bath",
        -1.2,
        KernelSpec {
            c_excite: 2.0,
            sigma_excite: 0.1,
            c_inhibit: 1.8,
            sigma_inhibit: 3.0,
            c_global: 0.0,
        },
    )
}

pub fn by_name(name: &str) -> Result<ExperimentScenario> {
    match name {
        "strut" => Ok(strut()),
        "bath" => Ok(bath()),
        other => Err(Error::UnknownPreset(other.to_string())),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn presets_validate() {
        for name in NAMES {
            by_name(name).unwrap().validate().unwrap();
        }
        assert!(by_name("trap").is_err());
    }

    #[test]
    fn presets_differ_only_where_expected() {
        let (s, b) = (strut(), bath());
        assert_eq!(s.planning, b.planning);
        assert_eq!(s.inputs.response, b.inputs.response);
        assert_eq!(s.inputs.seed, b.inputs.seed);
        assert_eq!(s.memory.tau_mem, b.memory.tau_mem);
        assert_eq!(s.inputs.auditory.centroid, -1.4);
        assert_eq!(b.inputs.auditory.centroid, -1.2);
        assert_eq!((b.memory.kernel.c_inhibit, b.memory.kernel.sigma_inhibit), (1.8, 3.0));
        // memory kernel: planning kernel with no global term and a narrower excitatory core
        let expected = KernelSpec {
            c_global: 0.0,
            sigma_excite: 0.1,
            ..PLANNING_KERNEL
        };
        assert_eq!(s.memory.kernel, expected);
        assert_eq!(s.frame_stride, 4);
    }
}
