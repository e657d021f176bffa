//! Coupled planning/memory field dynamics and their time integration.
//!
//! The planning field relaxes towards its resting level under external
//! input, memory feedback and lateral interaction:
//!
//! `tau du/dt = -u + h + c_mem u_mem + c_aud s_aud + c_resp s_resp + [k * g(u)] + noise`
//!
//! The memory field builds up where the planning field is above threshold
//! and decays elsewhere:
//!
//! `du_mem/dt = (-u_mem + [w * g(u)]) / tau_mem`  where `u > alpha`,
//! `du_mem/dt = -u_mem / tau_decay`                 elsewhere.
//!
//! Noise-free runs use classical fixed-step RK4. With `q > 0` the system is
//! advanced with Euler-Maruyama, drawing one standard normal per grid point
//! and step, scaled by `q / sqrt(dt)` inside the bracket above.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::field::{build_kernel, Convolver, Grid, KernelSpec, SigmoidSpec};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PlanningParams {
    /// Field time constant (ms).
    pub tau: f64,
    /// Resting level.
    pub h: f64,
    pub c_memory: f64,
    pub c_auditory: f64,
    pub c_response: f64,
    pub kernel: KernelSpec,
    pub sigmoid: SigmoidSpec,
}

impl PlanningParams {
    pub fn validate(&self) -> Result<()> {
        positive("planning.tau", self.tau)?;
        if !self.h.is_finite() {
            return Err(Error::param("planning.h", "must be finite"));
        }
        for (key, v) in [
            ("planning.c_memory", self.c_memory),
            ("planning.c_auditory", self.c_auditory),
            ("planning.c_response", self.c_response),
        ] {
            non_negative(key, v)?;
        }
        self.kernel.validate("planning.kernel")?;
        self.sigmoid.validate("planning.sigmoid")
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MemoryParams {
    /// Build-up time constant (ms).
    pub tau_mem: f64,
    /// Decay time constant (ms).
    pub tau_decay: f64,
    pub kernel: KernelSpec,
    pub sigmoid: SigmoidSpec,
    /// Planning activation above which memory builds up instead of decaying.
    pub threshold: f64,
}

impl MemoryParams {
    pub fn validate(&self) -> Result<()> {
        positive("memory.tau_mem", self.tau_mem)?;
        positive("memory.tau_decay", self.tau_decay)?;
        if self.tau_decay <= self.tau_mem {
            return Err(Error::param(
                "memory.tau_decay",
                format!(
                    "memory must decay more slowly than it builds up: tau_decay ({}) must exceed tau_mem ({})",
                    self.tau_decay, self.tau_mem
                ),
            ));
        }
        if !self.threshold.is_finite() {
            return Err(Error::param("memory.threshold", "must be finite"));
        }
        self.kernel.validate("memory.kernel")?;
        self.sigmoid.validate("memory.sigmoid")
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NoiseSpec {
    pub q: f64,
    pub seed: u64,
}

impl NoiseSpec {
    pub fn validate(&self) -> Result<()> {
        non_negative("noise.q", self.q)
    }

    pub fn is_active(&self) -> bool {
        self.q > 0.0
    }
}

fn positive(key: &str, v: f64) -> Result<()> {
    if v.is_finite() && v > 0.0 {
        Ok(())
    } else {
        Err(Error::param(key, format!("must be positive and finite, got {v}")))
    }
}

fn non_negative(key: &str, v: f64) -> Result<()> {
    if v.is_finite() && v >= 0.0 {
        Ok(())
    } else {
        Err(Error::param(
            key,
            format!("must be non-negative and finite, got {v}"),
        ))
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct SystemState {
    pub u: Vec<f64>,
    pub u_mem: Vec<f64>,
    /// Time within the current block (ms).
    pub t: f64,
}

impl SystemState {
    /// Planning field at rest, memory empty.
    pub fn resting(grid: &Grid, h: f64) -> Self {
        SystemState {
            u: vec![h; grid.len()],
            u_mem: vec![0.0; grid.len()],
            t: 0.0,
        }
    }

    fn check(&self, n: usize) -> Result<()> {
        if self.u.len() != n {
            return Err(Error::LengthMismatch {
                what: "planning field",
                got: self.u.len(),
                expected: n,
            });
        }
        if self.u_mem.len() != n {
            return Err(Error::LengthMismatch {
                what: "memory field",
                got: self.u_mem.len(),
                expected: n,
            });
        }
        Ok(())
    }
}

/// Retained frames of one integration run.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct Trajectory {
    pub times: Vec<f64>,
    pub u_frames: Vec<Vec<f64>>,
    pub u_mem_frames: Vec<Vec<f64>>,
}

impl Trajectory {
    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }

    fn push(&mut self, t: f64, u: &[f64], u_mem: &[f64]) {
        self.times.push(t);
        self.u_frames.push(u.to_vec());
        self.u_mem_frames.push(u_mem.to_vec());
    }

    /// Keeps every `stride`-th frame plus the last one.
    pub fn downsample(&self, stride: usize) -> Trajectory {
        let stride = stride.max(1);
        let last = self.len().saturating_sub(1);
        let mut out = Trajectory::default();
        for i in (0..self.len()).filter(|&i| i % stride == 0 || i == last) {
            out.push(self.times[i], &self.u_frames[i], &self.u_mem_frames[i]);
        }
        out
    }
}

/// Sampled external inputs, held constant over a block.
#[derive(Clone, Debug, PartialEq)]
pub struct BlockInputs {
    pub response: Vec<f64>,
    pub auditory: Vec<f64>,
}

impl BlockInputs {
    pub fn silent(grid: &Grid) -> Self {
        BlockInputs {
            response: vec![0.0; grid.len()],
            auditory: vec![0.0; grid.len()],
        }
    }
}

#[allow(clippy::too_many_arguments)]
#[inline]
fn planning_rate(
    p: &PlanningParams,
    u: f64,
    u_mem: f64,
    response: f64,
    auditory: f64,
    lateral: f64,
    noise: f64,
) -> f64 {
    (-u + p.h
        + p.c_memory * u_mem
        + p.c_auditory * auditory
        + p.c_response * response
        + lateral
        + noise)
        / p.tau
}

#[inline]
fn memory_rate(m: &MemoryParams, active: bool, u_mem: f64, lateral: f64) -> f64 {
    if active {
        (-u_mem + lateral) / m.tau_mem
    } else {
        -u_mem / m.tau_decay
    }
}

fn check_len(what: &'static str, v: &[f64], n: usize) -> Result<()> {
    if v.len() == n {
        Ok(())
    } else {
        Err(Error::LengthMismatch {
            what,
            got: v.len(),
            expected: n,
        })
    }
}

fn check_finite(v: &[f64], step: usize, t: f64) -> Result<()> {
    if v.iter().all(|x| x.is_finite()) {
        Ok(())
    } else {
        Err(Error::NonFinite { step, t })
    }
}

/// Planning-field time derivative for a single state.
pub fn planning_derivative(
    state: &SystemState,
    s_response: &[f64],
    s_auditory: &[f64],
    params: &PlanningParams,
    grid: &Grid,
    noise_term: &[f64],
) -> Result<Vec<f64>> {
    let n = grid.len();
    state.check(n)?;
    check_len("response input", s_response, n)?;
    check_len("auditory input", s_auditory, n)?;
    check_len("noise term", noise_term, n)?;
    let conv = Convolver::new(&build_kernel(&params.kernel, grid));
    let gated: Vec<f64> = state.u.iter().map(|&v| params.sigmoid.gate(v)).collect();
    let lateral = conv.apply(&gated)?;
    let out: Vec<f64> = (0..n)
        .map(|j| {
            planning_rate(
                params,
                state.u[j],
                state.u_mem[j],
                s_response[j],
                s_auditory[j],
                lateral[j],
                noise_term[j],
            )
        })
        .collect();
    check_finite(&out, 0, state.t)?;
    Ok(out)
}

/// Memory-field time derivative for a single state.
pub fn memory_derivative(
    state: &SystemState,
    params: &MemoryParams,
    grid: &Grid,
) -> Result<Vec<f64>> {
    let n = grid.len();
    state.check(n)?;
    let conv = Convolver::new(&build_kernel(&params.kernel, grid));
    let gated: Vec<f64> = state.u.iter().map(|&v| params.sigmoid.gate(v)).collect();
    let lateral = conv.apply(&gated)?;
    let out: Vec<f64> = (0..n)
        .map(|j| memory_rate(params, state.u[j] > params.threshold, state.u_mem[j], lateral[j]))
        .collect();
    check_finite(&out, 0, state.t)?;
    Ok(out)
}

/// Planning and memory dynamics on a fixed grid, with both interaction
/// kernels prepared once.
#[derive(Clone, Debug)]
pub struct FieldModel {
    grid: Grid,
    planning: PlanningParams,
    memory: MemoryParams,
    planning_conv: Convolver,
    memory_conv: Convolver,
    shared_gate: bool,
}

struct Scratch {
    gated: Vec<f64>,
    lat_u: Vec<f64>,
    lat_mem: Vec<f64>,
}

impl FieldModel {
    pub fn new(grid: Grid, planning: PlanningParams, memory: MemoryParams) -> Result<Self> {
        planning.validate()?;
        memory.validate()?;
        Ok(FieldModel {
            grid,
            planning,
            memory,
            planning_conv: Convolver::new(&build_kernel(&planning.kernel, &grid)),
            memory_conv: Convolver::new(&build_kernel(&memory.kernel, &grid)),
            shared_gate: planning.sigmoid == memory.sigmoid,
        })
    }

    pub fn grid(&self) -> &Grid {
        &self.grid
    }

    pub fn planning(&self) -> &PlanningParams {
        &self.planning
    }

    pub fn memory(&self) -> &MemoryParams {
        &self.memory
    }

    fn scratch(&self) -> Scratch {
        let n = self.grid.len();
        Scratch {
            gated: vec![0.0; n],
            lat_u: vec![0.0; n],
            lat_mem: vec![0.0; n],
        }
    }

    #[allow(clippy::too_many_arguments)]
    fn rates(
        &self,
        u: &[f64],
        u_mem: &[f64],
        inputs: &BlockInputs,
        noise: Option<&[f64]>,
        mask: Option<&[bool]>,
        scratch: &mut Scratch,
        du: &mut [f64],
        dm: &mut [f64],
    ) {
        for (g, &v) in scratch.gated.iter_mut().zip(u) {
            *g = self.planning.sigmoid.gate(v);
        }
        let spectrum = self
            .planning_conv
            .transform(&scratch.gated)
            .expect("gated field length matches grid");
        self.planning_conv.apply_spectrum(&spectrum, &mut scratch.lat_u);
        if self.shared_gate {
            self.memory_conv.apply_spectrum(&spectrum, &mut scratch.lat_mem);
        } else {
            for (g, &v) in scratch.gated.iter_mut().zip(u) {
                *g = self.memory.sigmoid.gate(v);
            }
            let spectrum = self
                .memory_conv
                .transform(&scratch.gated)
                .expect("gated field length matches grid");
            self.memory_conv.apply_spectrum(&spectrum, &mut scratch.lat_mem);
        }
        for j in 0..u.len() {
            du[j] = planning_rate(
                &self.planning,
                u[j],
                u_mem[j],
                inputs.response[j],
                inputs.auditory[j],
                scratch.lat_u[j],
                noise.map_or(0.0, |e| e[j]),
            );
            let active = mask.map_or(u[j] > self.memory.threshold, |m| m[j]);
            dm[j] = memory_rate(&self.memory, active, u_mem[j], scratch.lat_mem[j]);
        }
    }

    /// Both time derivatives at `state`, without noise.
    pub fn derivatives(
        &self,
        state: &SystemState,
        inputs: &BlockInputs,
    ) -> Result<(Vec<f64>, Vec<f64>)> {
        let n = self.grid.len();
        state.check(n)?;
        check_len("response input", &inputs.response, n)?;
        check_len("auditory input", &inputs.auditory, n)?;
        let mut du = vec![0.0; n];
        let mut dm = vec![0.0; n];
        let mut scratch = self.scratch();
        self.rates(
            &state.u,
            &state.u_mem,
            inputs,
            None,
            None,
            &mut scratch,
            &mut du,
            &mut dm,
        );
        Ok((du, dm))
    }

    /// Integrates the coupled system for `duration` ms with inputs held
    /// constant, keeping every `frame_stride`-th step plus the final one.
    ///
    /// `stream` selects an independent noise stream for the same seed, so
    /// successive blocks of one experiment do not replay identical noise.
    #[allow(clippy::too_many_arguments)]
    pub fn integrate(
        &self,
        initial: &SystemState,
        inputs: &BlockInputs,
        noise: &NoiseSpec,
        stream: u64,
        duration: f64,
        dt: f64,
        frame_stride: usize,
    ) -> Result<Trajectory> {
        let n = self.grid.len();
        initial.check(n)?;
        check_len("response input", &inputs.response, n)?;
        check_len("auditory input", &inputs.auditory, n)?;
        noise.validate()?;
        if !(duration.is_finite() && duration > 0.0) {
            return Err(Error::param("block_duration", "must be positive"));
        }
        if !(dt.is_finite() && dt > 0.0) {
            return Err(Error::param("dt", "must be positive"));
        }
        let frame_stride = frame_stride.max(1);
        let steps = step_count(duration, dt);

        let mut u = initial.u.clone();
        let mut u_mem = initial.u_mem.clone();
        let t0 = initial.t;
        let mut traj = Trajectory::default();
        traj.push(t0, &u, &u_mem);

        let mut scratch = self.scratch();
        let mut ws = Workspace::new(n);
        let mut mask: Vec<bool> = u.iter().map(|&v| v > self.memory.threshold).collect();
        let mut rng = noise.is_active().then(|| {
            let mut rng = ChaCha8Rng::seed_from_u64(noise.seed);
            rng.set_stream(stream);
            rng
        });

        for step in 1..=steps {
            let t_prev = if step == 1 { t0 } else { t0 + (step - 1) as f64 * dt };
            let t = if step == steps {
                t0 + duration
            } else {
                t0 + step as f64 * dt
            };
            let h = t - t_prev;
            match rng.as_mut() {
                None => self.rk4_advance(
                    &mut u,
                    &mut u_mem,
                    inputs,
                    h,
                    &mut mask,
                    &mut scratch,
                    &mut ws,
                ),
                Some(rng) => {
                    let scale = noise.q / h.sqrt();
                    for e in ws.noise.iter_mut() {
                        let z: f64 = rng.sample(StandardNormal);
                        *e = scale * z;
                    }
                    self.euler_maruyama_step(&mut u, &mut u_mem, inputs, h, &mut scratch, &mut ws)
                }
            }
            check_finite(&u, step, t)?;
            check_finite(&u_mem, step, t)?;
            if step % frame_stride == 0 || step == steps {
                traj.push(t, &u, &u_mem);
            }
        }
        Ok(traj)
    }

    /// Advances one RK4 step of length `h`, splitting it wherever a site
    /// crosses the memory threshold.
    ///
    /// The memory rate jumps when `u` crosses the threshold, and RK4 stages
    /// straddling the jump lose all but first order. Within each sub-step the
    /// branch of every site is frozen in `mask`; the earliest crossing is
    /// located on the cubic Hermite interpolant of `u` and the step is cut
    /// there before the affected sites switch branch.
    #[allow(clippy::too_many_arguments)]
    fn rk4_advance(
        &self,
        u: &mut [f64],
        u_mem: &mut [f64],
        inputs: &BlockInputs,
        h: f64,
        mask: &mut [bool],
        scratch: &mut Scratch,
        ws: &mut Workspace,
    ) {
        let alpha = self.memory.threshold;
        let n = u.len();
        let mut remaining = h;
        // Every split switches at least one site, so this bounds the loop.
        for _ in 0..=n {
            ws.u0.copy_from_slice(u);
            ws.m0.copy_from_slice(u_mem);
            self.rk4_step(u, u_mem, inputs, remaining, mask, scratch, ws);
            let crossed = (0..n).any(|j| (u[j] > alpha) != mask[j]);
            if !crossed || remaining <= h * 1e-12 {
                break;
            }
            let f0 = ws.k_u[0].clone();
            let Workspace { k_u, k_m, .. } = ws;
            self.rates(u, u_mem, inputs, None, Some(mask), scratch, &mut k_u[1], &mut k_m[1]);
            let f1 = &ws.k_u[1];
            let roots: Vec<(usize, f64)> = (0..n)
                .filter(|&j| (u[j] > alpha) != mask[j])
                .map(|j| (j, hermite_root(ws.u0[j], f0[j], u[j], f1[j], remaining, alpha)))
                .collect();
            let first = roots.iter().map(|r| r.1).fold(1.0, f64::min);
            u.copy_from_slice(&ws.u0);
            u_mem.copy_from_slice(&ws.m0);
            let sub = first * remaining;
            if sub > 0.0 {
                self.rk4_step(u, u_mem, inputs, sub, mask, scratch, ws);
            }
            for &(j, theta) in &roots {
                if theta <= first + 1e-9 {
                    mask[j] = !mask[j];
                }
            }
            remaining -= sub;
        }
    }

    #[allow(clippy::too_many_arguments)]
    fn rk4_step(
        &self,
        u: &mut [f64],
        u_mem: &mut [f64],
        inputs: &BlockInputs,
        h: f64,
        mask: &[bool],
        scratch: &mut Scratch,
        ws: &mut Workspace,
    ) {
        let n = u.len();
        let Workspace {
            k_u,
            k_m,
            tmp_u,
            tmp_m,
            ..
        } = ws;
        let mask = Some(mask);
        self.rates(u, u_mem, inputs, None, mask, scratch, &mut k_u[0], &mut k_m[0]);
        for stage in 1..4 {
            let c = if stage == 3 { h } else { 0.5 * h };
            for j in 0..n {
                tmp_u[j] = u[j] + c * k_u[stage - 1][j];
                tmp_m[j] = u_mem[j] + c * k_m[stage - 1][j];
            }
            let (ku, km) = (&mut k_u[stage], &mut k_m[stage]);
            self.rates(tmp_u, tmp_m, inputs, None, mask, scratch, ku, km);
        }
        for j in 0..n {
            u[j] += h / 6.0 * (k_u[0][j] + 2.0 * k_u[1][j] + 2.0 * k_u[2][j] + k_u[3][j]);
            u_mem[j] += h / 6.0 * (k_m[0][j] + 2.0 * k_m[1][j] + 2.0 * k_m[2][j] + k_m[3][j]);
        }
    }

    fn euler_maruyama_step(
        &self,
        u: &mut [f64],
        u_mem: &mut [f64],
        inputs: &BlockInputs,
        h: f64,
        scratch: &mut Scratch,
        ws: &mut Workspace,
    ) {
        let Workspace { k_u, k_m, noise, .. } = ws;
        let (du, dm) = (&mut k_u[0], &mut k_m[0]);
        self.rates(u, u_mem, inputs, Some(noise), None, scratch, du, dm);
        for j in 0..u.len() {
            u[j] += h * k_u[0][j];
            u_mem[j] += h * k_m[0][j];
        }
    }
}

struct Workspace {
    k_u: [Vec<f64>; 4],
    k_m: [Vec<f64>; 4],
    tmp_u: Vec<f64>,
    tmp_m: Vec<f64>,
    u0: Vec<f64>,
    m0: Vec<f64>,
    noise: Vec<f64>,
}

impl Workspace {
    fn new(n: usize) -> Self {
        let z = || vec![0.0; n];
        Workspace {
            k_u: [z(), z(), z(), z()],
            k_m: [z(), z(), z(), z()],
            tmp_u: z(),
            tmp_m: z(),
            u0: z(),
            m0: z(),
            noise: z(),
        }
    }
}

/// Fraction of a step of length `h` at which the cubic Hermite interpolant
/// through `(u0, f0)` and `(u1, f1)` first reaches `level`. Assumes `u0` and
/// `u1` lie on opposite sides of `level`.
fn hermite_root(u0: f64, f0: f64, u1: f64, f1: f64, h: f64, level: f64) -> f64 {
    let p = |s: f64| {
        let s2 = s * s;
        let s3 = s2 * s;
        (2.0 * s3 - 3.0 * s2 + 1.0) * u0
            + (s3 - 2.0 * s2 + s) * h * f0
            + (-2.0 * s3 + 3.0 * s2) * u1
            + (s3 - s2) * h * f1
            - level
    };
    // The interpolant may touch the level more than once; scan for the first
    // sign change before bisecting.
    const SCAN: usize = 16;
    let below = p(0.0) <= 0.0;
    let (mut lo, mut hi) = (0.0, 1.0);
    for i in 1..=SCAN {
        let s = i as f64 / SCAN as f64;
        if (p(s) <= 0.0) != below {
            lo = (i - 1) as f64 / SCAN as f64;
            hi = s;
            break;
        }
    }
    for _ in 0..60 {
        let mid = 0.5 * (lo + hi);
        if (p(mid) <= 0.0) == below {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    hi
}

/// Number of steps needed to cover `duration`; the last step is shortened
/// when `dt` does not divide it.
pub fn step_count(duration: f64, dt: f64) -> usize {
    let ratio = duration / dt;
    let rounded = ratio.round();
    if (ratio - rounded).abs() <= 1e-9 * rounded.max(1.0) {
        (rounded as usize).max(1)
    } else {
        ratio.ceil() as usize
    }
}

/// Convenience wrapper around [`FieldModel::integrate`].
#[allow(clippy::too_many_arguments)]
pub fn integrate(
    initial: &SystemState,
    inputs: &BlockInputs,
    grid: &Grid,
    planning: &PlanningParams,
    memory: &MemoryParams,
    noise: &NoiseSpec,
    duration: f64,
    dt: f64,
    frame_stride: usize,
) -> Result<Trajectory> {
    FieldModel::new(*grid, *planning, *memory)?.integrate(
        initial,
        inputs,
        noise,
        0,
        duration,
        dt,
        frame_stride,
    )
}
