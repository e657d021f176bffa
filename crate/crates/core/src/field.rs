//! Spatial building blocks shared by the planning and memory fields: the
//! discretised parameter axis, Gaussian inputs, the difference-of-Gaussians
//! interaction kernel, the sigmoid gate and the lateral interaction operator.

use std::f64::consts::PI;
use std::fmt;
use std::sync::Arc;

use rustfft::num_complex::Complex;
use rustfft::{Fft, FftPlanner};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Uniform 1-D grid over `[lower, upper]`, endpoints included.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "GridDef", into = "GridDef")]
pub struct Grid {
    lower: f64,
    upper: f64,
    n_points: usize,
    dx: f64,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct GridDef {
    lower: f64,
    upper: f64,
    n_points: usize,
}

impl TryFrom<GridDef> for Grid {
    type Error = Error;

    fn try_from(def: GridDef) -> Result<Self> {
        Grid::new(def.lower, def.upper, def.n_points)
    }
}

impl From<Grid> for GridDef {
    fn from(grid: Grid) -> Self {
        GridDef {
            lower: grid.lower,
            upper: grid.upper,
            n_points: grid.n_points,
        }
    }
}

impl Grid {
    pub const DEFAULT_LOWER: f64 = -10.0;
    pub const DEFAULT_UPPER: f64 = 10.0;
    pub const DEFAULT_POINTS: usize = 401;

    pub fn new(lower: f64, upper: f64, n_points: usize) -> Result<Self> {
        if !lower.is_finite() || !upper.is_finite() {
            return Err(Error::InvalidGrid(format!(
                "bounds must be finite, got [{lower}, {upper}]"
            )));
        }
        if upper <= lower {
            return Err(Error::InvalidGrid(format!(
                "upper bound {upper} must exceed lower bound {lower}"
            )));
        }
        if n_points < 3 {
            return Err(Error::InvalidGrid(format!(
                "need at least 3 points, got {n_points}"
            )));
        }
        let dx = (upper - lower) / (n_points - 1) as f64;
        Ok(Grid {
            lower,
            upper,
            n_points,
            dx,
        })
    }

    pub fn lower(&self) -> f64 {
        self.lower
    }

    pub fn upper(&self) -> f64 {
        self.upper
    }

    pub fn len(&self) -> usize {
        self.n_points
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn dx(&self) -> f64 {
        self.dx
    }

    /// Position of grid point `j`. The last point is pinned to `upper`.
    pub fn x(&self, j: usize) -> f64 {
        if j + 1 == self.n_points {
            self.upper
        } else {
            self.lower + j as f64 * self.dx
        }
    }

    pub fn points(&self) -> Vec<f64> {
        (0..self.n_points).map(|j| self.x(j)).collect()
    }

    pub fn contains(&self, x: f64) -> bool {
        x >= self.lower && x <= self.upper
    }

    /// Index of the grid point closest to `x`, clamped to the domain.
    pub fn nearest_index(&self, x: f64) -> usize {
        let j = ((x - self.lower) / self.dx).round();
        j.clamp(0.0, (self.n_points - 1) as f64) as usize
    }
}

impl Default for Grid {
    fn default() -> Self {
        Grid::new(Self::DEFAULT_LOWER, Self::DEFAULT_UPPER, Self::DEFAULT_POINTS)
            .expect("default grid is valid")
    }
}

impl fmt::Display for Grid {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "[{}, {}] x {} (dx = {})",
            self.lower, self.upper, self.n_points, self.dx
        )
    }
}

/// Gaussian bump `a * exp(-(x - p)^2 / (2 w^2))`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GaussianInputSpec {
    pub amplitude: f64,
    pub centroid: f64,
    pub width: f64,
}

impl GaussianInputSpec {
    pub fn new(amplitude: f64, centroid: f64, width: f64) -> Self {
        GaussianInputSpec {
            amplitude,
            centroid,
            width,
        }
    }

    pub fn validate(&self, key: &str) -> Result<()> {
        finite(key, "amplitude", self.amplitude)?;
        finite(key, "centroid", self.centroid)?;
        finite(key, "width", self.width)?;
        if self.amplitude < 0.0 {
            return Err(Error::param(
                format!("{key}.amplitude"),
                format!("must be non-negative, got {}", self.amplitude),
            ));
        }
        if self.width <= 0.0 {
            return Err(Error::param(
                format!("{key}.width"),
                format!("must be positive, got {}", self.width),
            ));
        }
        Ok(())
    }

    pub fn value_at(&self, x: f64) -> f64 {
        let z = x - self.centroid;
        self.amplitude * (-(z * z) / (2.0 * self.width * self.width)).exp()
    }
}

/// Difference of two normalised Gaussians minus a global inhibition constant.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct KernelSpec {
    pub c_excite: f64,
    pub sigma_excite: f64,
    pub c_inhibit: f64,
    pub sigma_inhibit: f64,
    pub c_global: f64,
}

impl KernelSpec {
    pub fn validate(&self, key: &str) -> Result<()> {
        for (name, value) in [
            ("c_excite", self.c_excite),
            ("c_inhibit", self.c_inhibit),
            ("c_global", self.c_global),
        ] {
            finite(key, name, value)?;
            if value < 0.0 {
                return Err(Error::param(
                    format!("{key}.{name}"),
                    format!("must be non-negative, got {value}"),
                ));
            }
        }
        for (name, value) in [
            ("sigma_excite", self.sigma_excite),
            ("sigma_inhibit", self.sigma_inhibit),
        ] {
            finite(key, name, value)?;
            if value <= 0.0 {
                return Err(Error::param(
                    format!("{key}.{name}"),
                    format!("must be positive, got {value}"),
                ));
            }
        }
        Ok(())
    }

    /// Kernel value at displacement `d`.
    pub fn value_at(&self, d: f64) -> f64 {
        self.c_excite * normal_density(d, self.sigma_excite)
            - self.c_inhibit * normal_density(d, self.sigma_inhibit)
            - self.c_global
    }
}

/// Logistic gate `1 / (1 + exp(-beta (u - alpha)))`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SigmoidSpec {
    pub beta: f64,
    pub alpha: f64,
}

impl SigmoidSpec {
    pub fn validate(&self, key: &str) -> Result<()> {
        finite(key, "beta", self.beta)?;
        finite(key, "alpha", self.alpha)?;
        if self.beta <= 0.0 {
            return Err(Error::param(
                format!("{key}.beta"),
                format!("must be positive, got {}", self.beta),
            ));
        }
        Ok(())
    }

    #[inline]
    pub fn gate(&self, u: f64) -> f64 {
        1.0 / (1.0 + (-self.beta * (u - self.alpha)).exp())
    }
}

fn finite(key: &str, name: &str, value: f64) -> Result<()> {
    if value.is_finite() {
        Ok(())
    } else {
        Err(Error::param(format!("{key}.{name}"), "must be finite"))
    }
}

/// Zero-mean normal density with standard deviation `sigma`.
#[inline]
pub fn normal_density(d: f64, sigma: f64) -> f64 {
    (-(d * d) / (2.0 * sigma * sigma)).exp() / ((2.0 * PI).sqrt() * sigma)
}

/// Samples `spec` on every grid point.
pub fn sample_input(spec: &GaussianInputSpec, grid: &Grid) -> Vec<f64> {
    (0..grid.len()).map(|j| spec.value_at(grid.x(j))).collect()
}

/// Sum of several inputs sampled on `grid`.
pub fn sample_inputs<'a>(
    specs: impl IntoIterator<Item = &'a GaussianInputSpec>,
    grid: &Grid,
) -> Vec<f64> {
    let mut out = vec![0.0; grid.len()];
    for spec in specs {
        for (o, v) in out.iter_mut().zip(sample_input(spec, grid)) {
            *o += v;
        }
    }
    out
}

pub fn sigmoid_gate(u: &[f64], spec: &SigmoidSpec) -> Vec<f64> {
    u.iter().map(|&v| spec.gate(v)).collect()
}

/// Kernel sampled at displacements `m * dx` for `m = -(n-1) ..= n-1`.
#[derive(Clone, Debug, PartialEq)]
pub struct KernelSamples {
    values: Vec<f64>,
    dx: f64,
}

impl KernelSamples {
    /// Number of grid points the kernel was built for.
    pub fn grid_len(&self) -> usize {
        self.values.len().div_ceil(2)
    }

    pub fn dx(&self) -> f64 {
        self.dx
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    /// Kernel value at displacement `m * dx`.
    pub fn at(&self, m: isize) -> f64 {
        let centre = self.grid_len() as isize - 1;
        self.values[(centre + m) as usize]
    }
}

pub fn build_kernel(spec: &KernelSpec, grid: &Grid) -> KernelSamples {
    let n = grid.len() as isize;
    let dx = grid.dx();
    // evaluate on |m| so that k(d) == k(-d) bit for bit
    let values = (-(n - 1)..n)
        .map(|m| spec.value_at(m.unsigned_abs() as f64 * dx))
        .collect();
    KernelSamples { values, dx }
}

/// Truncated (zero-padded) convolution of a gated field with a kernel,
/// weighted by the grid spacing. Uses a circular FFT of length at least
/// `2n - 1`, which is exact for the `n` output points that are kept.
#[derive(Clone)]
pub struct Convolver {
    n: usize,
    dx: f64,
    forward: Arc<dyn Fft<f64>>,
    inverse: Arc<dyn Fft<f64>>,
    spectrum: Vec<Complex<f64>>,
}

impl fmt::Debug for Convolver {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("Convolver")
            .field("n", &self.n)
            .field("dx", &self.dx)
            .field("fft_len", &self.spectrum.len())
            .finish()
    }
}

impl Convolver {
    pub fn new(kernel: &KernelSamples) -> Self {
        let n = kernel.grid_len();
        let len = (2 * n - 1).next_power_of_two();
        let mut planner = FftPlanner::new();
        let forward = planner.plan_fft_forward(len);
        let inverse = planner.plan_fft_inverse(len);

        let mut spectrum = vec![Complex::new(0.0, 0.0); len];
        for m in -(n as isize - 1)..n as isize {
            spectrum[m.rem_euclid(len as isize) as usize] = Complex::new(kernel.at(m), 0.0);
        }
        forward.process(&mut spectrum);
        // fold the inverse-transform normalisation and dx into the spectrum
        let scale = kernel.dx() / len as f64;
        for c in &mut spectrum {
            *c *= scale;
        }
        Convolver {
            n,
            dx: kernel.dx(),
            forward,
            inverse,
            spectrum,
        }
    }

    pub fn grid_len(&self) -> usize {
        self.n
    }

    fn fft_len(&self) -> usize {
        self.spectrum.len()
    }

    fn check_len(&self, got: usize) -> Result<()> {
        if got == self.n {
            Ok(())
        } else {
            Err(Error::LengthMismatch {
                what: "gated field",
                got,
                expected: self.n,
            })
        }
    }

    pub fn transform(&self, gated: &[f64]) -> Result<Vec<Complex<f64>>> {
        self.check_len(gated.len())?;
        let mut buf = vec![Complex::new(0.0, 0.0); self.fft_len()];
        for (b, &g) in buf.iter_mut().zip(gated) {
            b.re = g;
        }
        self.forward.process(&mut buf);
        Ok(buf)
    }

    /// Convolves an already transformed gated field (see [`Convolver::transform`])
    /// so that several kernels can share one forward transform.
    pub fn apply_spectrum(&self, gated_spectrum: &[Complex<f64>], out: &mut [f64]) {
        debug_assert_eq!(gated_spectrum.len(), self.fft_len());
        debug_assert_eq!(out.len(), self.n);
        let mut buf: Vec<Complex<f64>> = gated_spectrum
            .iter()
            .zip(&self.spectrum)
            .map(|(a, b)| a * b)
            .collect();
        self.inverse.process(&mut buf);
        for (o, b) in out.iter_mut().zip(&buf) {
            *o = b.re;
        }
    }

    pub fn apply(&self, gated: &[f64]) -> Result<Vec<f64>> {
        let spec = self.transform(gated)?;
        let mut out = vec![0.0; self.n];
        self.apply_spectrum(&spec, &mut out);
        Ok(out)
    }
}

/// `dx * sum_j k(x_i - x_j) g(u_j)` for every grid point `i`.
pub fn lateral_interaction(
    u: &[f64],
    kernel: &KernelSamples,
    grid: &Grid,
    sigmoid: &SigmoidSpec,
) -> Result<Vec<f64>> {
    if kernel.grid_len() != grid.len() || kernel.dx() != grid.dx() {
        return Err(Error::LengthMismatch {
            what: "kernel",
            got: kernel.grid_len(),
            expected: grid.len(),
        });
    }
    if u.len() != grid.len() {
        return Err(Error::LengthMismatch {
            what: "field",
            got: u.len(),
            expected: grid.len(),
        });
    }
    Convolver::new(kernel).apply(&sigmoid_gate(u, sigmoid))
}
