//! Acceptance criteria for the field model. Each test prints one
//! `[PASS]`/`[FAIL]` line; run with `--nocapture` to see them all.
//!
//! Tests hold a shared lock so their wall-clock budgets are not inflated by
//! each other.

use std::sync::Mutex;
use std::time::{Duration, Instant};

use phonfield::dynamics::{
    BlockInputs, FieldModel, NoiseSpec, PlanningParams, SystemState, Trajectory,
};
use phonfield::field::{build_kernel, lateral_interaction, sigmoid_gate, Grid, KernelSpec};
use phonfield::presets;
use phonfield::protocol::{BlockKind, ExperimentResult, ExperimentScenario, Simulator};
use phonfield::sweep::{run_sweep, SweepSpec};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

static SERIAL: Mutex<()> = Mutex::new(());

fn serial() -> std::sync::MutexGuard<'static, ()> {
    SERIAL.lock().unwrap_or_else(|e| e.into_inner())
}

fn report(id: u32, name: &str, pass: bool, detail: String) {
    let tag = if pass { "PASS" } else { "FAIL" };
    println!("[{tag}] criterion {id:>2}: {name} | {detail}");
}

fn within_budget(elapsed: Duration, secs: f64) -> bool {
    elapsed.as_secs_f64() < secs
}

fn run(s: &ExperimentScenario, keep_frames: bool) -> ExperimentResult {
    Simulator::new(s.clone())
        .unwrap()
        .run_experiment(keep_frames)
        .unwrap()
}

const NO_KERNEL: KernelSpec = KernelSpec {
    c_excite: 0.0,
    sigma_excite: 1.0,
    c_inhibit: 0.0,
    sigma_inhibit: 1.0,
    c_global: 0.0,
};

fn decoupled(s: &ExperimentScenario) -> PlanningParams {
    PlanningParams {
        c_memory: 0.0,
        c_auditory: 0.0,
        c_response: 0.0,
        kernel: NO_KERNEL,
        ..s.planning
    }
}

#[test]
fn c01_analytic_relaxation() {
    let _g = serial();
    let start = Instant::now();
    let s = presets::strut();
    let p = decoupled(&s);
    let model = FieldModel::new(s.grid, p, s.memory).unwrap();
    let initial = SystemState {
        u: vec![0.0; s.grid.len()],
        u_mem: vec![0.0; s.grid.len()],
        t: 0.0,
    };
    let traj = model
        .integrate(&initial, &BlockInputs::silent(&s.grid), &NoiseSpec::default(), 0, 300.0, 0.1, 1)
        .unwrap();
    let mut err: f64 = 0.0;
    for (t, frame) in traj.times.iter().zip(&traj.u_frames) {
        let exact = p.h + (0.0 - p.h) * (-t / p.tau).exp();
        err = frame.iter().fold(err, |e, v| e.max((v - exact).abs()));
    }
    let elapsed = start.elapsed();
    let pass = err < 1e-6 && within_budget(elapsed, 1.0);
    report(1, "analytic relaxation", pass, format!("max err {err:.3e} (< 1e-6), {elapsed:.2?} (< 1 s)"));
    assert!(pass);
}

#[test]
fn c02_memory_decay_law() {
    let _g = serial();
    let start = Instant::now();
    let s = presets::strut();
    let p = PlanningParams {
        h: -100.0,
        ..decoupled(&s)
    };
    let model = FieldModel::new(s.grid, p, s.memory).unwrap();
    let u_mem0: Vec<f64> = (0..s.grid.len())
        .map(|j| (s.grid.x(j) * 0.7).cos() + 0.5)
        .collect();
    let initial = SystemState {
        u: vec![-100.0; s.grid.len()],
        u_mem: u_mem0.clone(),
        t: 0.0,
    };
    let traj = model
        .integrate(&initial, &BlockInputs::silent(&s.grid), &NoiseSpec::default(), 0, 300.0, 0.1, 1)
        .unwrap();
    let mut err: f64 = 0.0;
    for (t, frame) in traj.times.iter().zip(&traj.u_mem_frames) {
        let decay = (-t / s.memory.tau_decay).exp();
        for (v, m0) in frame.iter().zip(&u_mem0) {
            err = err.max((v - m0 * decay).abs());
        }
    }
    let elapsed = start.elapsed();
    let pass = s.memory.tau_decay == 500.0 && err < 1e-6 && within_budget(elapsed, 1.0);
    report(2, "memory decay law", pass, format!("max err {err:.3e} (< 1e-6), {elapsed:.2?} (< 1 s)"));
    assert!(pass);
}

/// O(n^2) direct sum, the reference for the FFT path.
fn direct_sum(gated: &[f64], spec: &KernelSpec, grid: &Grid) -> Vec<f64> {
    let n = grid.len();
    (0..n)
        .map(|i| {
            let mut acc = 0.0;
            for (j, g) in gated.iter().enumerate() {
                acc += spec.value_at(grid.x(i) - grid.x(j)) * g;
            }
            acc * grid.dx()
        })
        .collect()
}

#[test]
fn c03_convolution_oracle() {
    let _g = serial();
    let start = Instant::now();
    let s = presets::strut();
    let grid = Grid::new(-10.0, 10.0, 101).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(2024);
    let mut worst: f64 = 0.0;
    for i in 0..50 {
        let spec = if i % 2 == 0 { s.planning.kernel } else { presets::bath().memory.kernel };
        let u: Vec<f64> = (0..grid.len()).map(|_| rng.random_range(-8.0..8.0)).collect();
        let fast = lateral_interaction(&u, &build_kernel(&spec, &grid), &grid, &s.planning.sigmoid).unwrap();
        let slow = direct_sum(&sigmoid_gate(&u, &s.planning.sigmoid), &spec, &grid);
        for (a, b) in fast.iter().zip(&slow) {
            worst = worst.max((a - b).abs());
        }
    }
    let elapsed = start.elapsed();
    let pass = worst < 1e-10 && within_budget(elapsed, 5.0);
    report(3, "convolution oracle", pass, format!("sup err {worst:.3e} over 50 fields (< 1e-10), {elapsed:.2?} (< 5 s)"));
    assert!(pass);
}

fn frames_at(s: &ExperimentScenario, dt: f64) -> Vec<Trajectory> {
    let mut s = s.clone();
    s.dt = dt;
    // frames every 2 ms at every resolution
    s.frame_stride = (2.0 / dt).round() as usize;
    run(&s, true)
        .trials
        .into_iter()
        .map(|t| t.trajectory.unwrap())
        .collect()
}

fn sup_diff(a: &[Trajectory], b: &[Trajectory]) -> f64 {
    let mut d: f64 = 0.0;
    for (ta, tb) in a.iter().zip(b) {
        assert_eq!(ta.times, tb.times);
        for (fa, fb) in ta.u_frames.iter().zip(&tb.u_frames).chain(ta.u_mem_frames.iter().zip(&tb.u_mem_frames)) {
            for (x, y) in fa.iter().zip(fb) {
                d = d.max((x - y).abs());
            }
        }
    }
    d
}

#[test]
fn c04_rk4_order() {
    let _g = serial();
    let start = Instant::now();
    let s = presets::strut();
    let coarse = frames_at(&s, 0.5);
    let mid = frames_at(&s, 0.25);
    let fine = frames_at(&s, 0.125);
    let e1 = sup_diff(&coarse, &mid);
    let e2 = sup_diff(&mid, &fine);
    let ratio = e1 / e2;
    let elapsed = start.elapsed();
    let pass = (12.0..=20.0).contains(&ratio) && within_budget(elapsed, 10.0);
    report(
        4,
        "RK4 step-halving order",
        pass,
        format!("err(0.5 vs 0.25) {e1:.3e}, err(0.25 vs 0.125) {e2:.3e}, ratio {ratio:.2} (in [12, 20]), {elapsed:.2?} (< 10 s)"),
    );
    assert!(pass);
}

fn shifted(s: &ExperimentScenario, by: f64) -> ExperimentScenario {
    let mut s = s.clone();
    for input in [&mut s.inputs.response, &mut s.inputs.auditory, &mut s.inputs.seed] {
        input.centroid += by;
    }
    s
}

#[test]
fn c05_translation_equivariance() {
    let _g = serial();
    let start = Instant::now();
    let mut details = Vec::new();
    let mut pass = true;
    for s in [presets::strut(), presets::bath()] {
        let dx = s.grid.dx();
        let a = run(&s, false);
        let b = run(&shifted(&s, 1.0), false);
        for kind in BlockKind::ALL {
            let shift = b.peak_x(kind) - a.peak_x(kind);
            pass &= (shift - 1.0).abs() <= dx + 1e-9;
            details.push(format!("{}/{kind} {shift:+.3}", s.name));
        }
    }
    let elapsed = start.elapsed();
    pass &= within_budget(elapsed, 10.0);
    report(5, "translation equivariance", pass, format!("shifts [{}] (1 +- dx), {elapsed:.2?} (< 10 s)", details.join(", ")));
    assert!(pass);
}

#[test]
fn c06_qualitative_signatures() {
    let _g = serial();
    let start = Instant::now();
    let strut = run(&presets::strut(), false);
    let bath = run(&presets::bath(), false);
    let (sb, ss, sp) = (
        strut.peak_x(BlockKind::Baseline),
        strut.peak_x(BlockKind::Shadowing),
        strut.peak_x(BlockKind::Post),
    );
    let (bb, bs, bp) = (
        bath.peak_x(BlockKind::Baseline),
        bath.peak_x(BlockKind::Shadowing),
        bath.peak_x(BlockKind::Post),
    );
    let strut_ok = ss < -0.1 && (sp - sb).abs() < (ss - sb).abs();
    let bath_ok = bs < 0.0 && bp > bb;
    let elapsed = start.elapsed();
    let pass = strut_ok && bath_ok && within_budget(elapsed, 10.0);
    report(
        6,
        "qualitative signatures",
        pass,
        format!(
            "strut base/shad/post {sb:+.3}/{ss:+.3}/{sp:+.3} ({}); bath {bb:+.3}/{bs:+.3}/{bp:+.3} ({}); {elapsed:.2?} (< 10 s)",
            if strut_ok { "ok" } else { "violated" },
            if bath_ok { "ok" } else { "post not beyond baseline" },
        ),
    );
    assert!(pass);
}

#[test]
fn c07_inhibition_sensitivity() {
    let _g = serial();
    let start = Instant::now();
    let spec = SweepSpec::new(presets::bath(), "memory.kernel.c_inhibit", vec![1.0, 1.4, 1.8]);
    let result = run_sweep(&spec, 1).unwrap();
    let rows: Vec<_> = result.rows.iter().map(|r| r.outcome.clone().unwrap()).collect();
    let post: Vec<f64> = rows.iter().map(|m| m.post_peak_x).collect();
    let monotone = post.windows(2).all(|w| w[1] >= w[0]);
    let near = |i: usize| (rows[i].post_peak_x - rows[i].baseline_peak_x).abs();
    let closer = near(0) < near(2);
    let elapsed = start.elapsed();
    let pass = monotone && closer && within_budget(elapsed, 30.0);
    report(
        7,
        "memory inhibition sensitivity",
        pass,
        format!(
            "post peak_x {post:?} (non-decreasing: {monotone}); |post - baseline| at 1.0 = {:.3}, at 1.8 = {:.3} (strictly nearer: {closer}); {elapsed:.2?} (< 30 s)",
            near(0),
            near(2)
        ),
    );
    assert!(pass);
}

#[test]
fn c08_subthreshold_auditory_input() {
    let _g = serial();
    let start = Instant::now();
    let mut details = Vec::new();
    let mut pass = true;
    for mut s in [presets::strut(), presets::bath()] {
        s.frame_stride = 1;
        let alpha = s.planning.sigmoid.alpha;
        let r = run(&s, true);
        for trial in &r.trials {
            let traj = trial.trajectory.as_ref().unwrap();
            let mut max_left = f64::NEG_INFINITY;
            for frame in &traj.u_frames {
                for (j, v) in frame.iter().enumerate() {
                    if s.grid.x(j) < -0.7 {
                        max_left = max_left.max(*v);
                    }
                }
            }
            pass &= max_left <= alpha;
            details.push(format!("{}/{} {max_left:.2}", s.name, trial.block));
        }
    }
    let elapsed = start.elapsed();
    pass &= within_budget(elapsed, 10.0);
    report(8, "sub-threshold auditory input", pass, format!("max u for x < -0.7: [{}] (<= 0), {elapsed:.2?} (< 10 s)", details.join(", ")));
    assert!(pass);
}

#[test]
fn c09_strut_quantitative() {
    let _g = serial();
    let r = run(&presets::strut(), false);
    let shad = r.peak_x(BlockKind::Shadowing);
    let post = r.peak_x(BlockKind::Post);
    let pass = (shad + 0.22).abs() <= 0.1 && (post - 0.02).abs() <= 0.1 && (r.x_diff - 0.24).abs() <= 0.1;
    report(
        9,
        "strut peak locations",
        pass,
        format!("shadowing {shad:+.3} (-0.22 +- 0.1), post {post:+.3} (0.02 +- 0.1), x_diff {:+.3} (0.24 +- 0.1)", r.x_diff),
    );
    assert!(pass);
}

#[test]
fn c10_bath_quantitative() {
    let _g = serial();
    let r = run(&presets::bath(), false);
    let shad = r.peak_x(BlockKind::Shadowing);
    let post = r.peak_x(BlockKind::Post);
    let pass = (shad + 0.10).abs() <= 0.1 && (post - 0.02).abs() <= 0.1 && (r.x_diff - 0.12).abs() <= 0.08;
    report(
        10,
        "bath peak locations",
        pass,
        format!("shadowing {shad:+.3} (-0.10 +- 0.1), post {post:+.3} (0.02 +- 0.1), x_diff {:+.3} (0.12 +- 0.08)", r.x_diff),
    );
    assert!(pass);
}

#[test]
fn c11_preset_ordering() {
    let _g = serial();
    let shift = |s: &ExperimentScenario| {
        let r = run(s, false);
        (r.peak_x(BlockKind::Shadowing) - r.peak_x(BlockKind::Baseline)).abs()
    };
    let (strut, bath) = (shift(&presets::strut()), shift(&presets::bath()));
    let pass = strut > bath;
    report(11, "strut shifts further than bath", pass, format!("|strut shift| {strut:.3} vs |bath shift| {bath:.3}"));
    assert!(pass);
}

#[test]
fn c12_stochastic_stability() {
    let _g = serial();
    let start = Instant::now();
    let deterministic = run(&presets::strut(), false).peak_x(BlockKind::Shadowing);

    let mut noisy = presets::strut();
    noisy.noise.q = presets::REFERENCE_Q;
    let seeds: Vec<u64> = (0..100).collect();
    let spec = SweepSpec::new(noisy.clone(), "noise.q", vec![presets::REFERENCE_Q]).with_seeds(seeds);
    let jobs = std::thread::available_parallelism().map_or(1, |n| n.get());
    let result = run_sweep(&spec, jobs).unwrap();
    let shad: Vec<f64> = result
        .rows
        .iter()
        .map(|r| r.outcome.as_ref().unwrap().shadowing_peak_x)
        .collect();
    let mean = shad.iter().sum::<f64>() / shad.len() as f64;

    // rerun a few seeds and require identical trajectories
    let mut exact = true;
    for seed in [0u64, 41, 99] {
        let mut s = noisy.clone();
        s.noise.seed = seed;
        let a = run(&s, true);
        let b = run(&s, true);
        exact &= a == b;
        exact &= a.peak_x(BlockKind::Shadowing) == shad[seed as usize];
    }
    let elapsed = start.elapsed();
    let pass = shad.len() == 100 && (mean - deterministic).abs() <= 0.1 && exact && within_budget(elapsed, 300.0);
    report(
        12,
        "stochastic stability",
        pass,
        format!("seed-mean shadowing {mean:+.3} vs noise-free {deterministic:+.3} (+- 0.1); per-seed determinism {exact}; {elapsed:.2?} (< 5 min)"),
    );
    assert!(pass);
}
