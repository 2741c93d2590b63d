//! Finite-difference time stepping for the periodic diffusion equation.
//!
//! The central-difference Laplacian is diagonal in the discrete Fourier
//! basis, so both Forward Euler and Crank-Nicolson reduce to multiplying
//! each coefficient by its amplification factor `ρ_m`. Crank-Nicolson is
//! only ever solved this way; there is no sparse linear solver.

use std::f64::consts::PI;
use std::sync::Arc;

use num_complex::Complex64;
use rustfft::{Fft, FftPlanner};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::field::{FieldError, GridSpec, ScalarField};

/// Magnitude above which a solve is treated as blown up.
pub const INSTABILITY_THRESHOLD: f64 = 1e6;

#[derive(Debug, Error, PartialEq)]
pub enum FdError {
    #[error("invalid solver config: {0}")]
    Config(String),
    #[error("sample stride must be at least 1")]
    ZeroStride,
    #[error(transparent)]
    Field(#[from] FieldError),
    #[error("numerical instability at step {step}: |u| reached {value:e}")]
    Unstable { step: usize, value: f64 },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum SchemeKind {
    #[serde(rename = "fe")]
    ForwardEuler,
    #[serde(rename = "cn")]
    CrankNicolson,
}

impl std::str::FromStr for SchemeKind {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "fe" | "forward-euler" => Ok(Self::ForwardEuler),
            "cn" | "crank-nicolson" => Ok(Self::CrankNicolson),
            other => Err(format!("unknown scheme '{other}' (expected fe or cn)")),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SolverConfig {
    pub grid: GridSpec,
    /// Time step.
    pub k: f64,
    /// Diffusion coefficient.
    pub diffusivity: f64,
    pub scheme: SchemeKind,
    pub n_max: usize,
}

impl SolverConfig {
    pub fn new(grid: GridSpec, k: f64, diffusivity: f64, scheme: SchemeKind, n_max: usize) -> Result<Self, FdError> {
        let cfg = Self {
            grid,
            k,
            diffusivity,
            scheme,
            n_max,
        };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<(), FdError> {
        if !(self.k > 0.0 && self.k.is_finite()) {
            return Err(FdError::Config(format!("time step must be positive, got {}", self.k)));
        }
        if !(self.diffusivity > 0.0 && self.diffusivity.is_finite()) {
            return Err(FdError::Config(format!(
                "diffusion coefficient must be positive, got {}",
                self.diffusivity
            )));
        }
        Ok(())
    }

    pub fn with_diffusivity(&self, diffusivity: f64) -> Self {
        Self { diffusivity, ..*self }
    }
}

/// Sampled output of [`solve`]: frame `i` is the solution at step `i * sample_stride`.
#[derive(Debug, Clone, PartialEq)]
pub struct FieldSeries {
    pub config: SolverConfig,
    pub sample_stride: usize,
    pub frames: Vec<ScalarField>,
}

impl FieldSeries {
    pub fn times(&self) -> Vec<f64> {
        (0..self.frames.len())
            .map(|i| (i * self.sample_stride) as f64 * self.config.k)
            .collect()
    }

    /// Time between consecutive frames.
    pub fn frame_interval(&self) -> f64 {
        self.sample_stride as f64 * self.config.k
    }
}

/// `λ_m = -(4/h²) Σ_i sin²(π m_i / N)`.
pub fn laplacian_eigenvalue(m: [usize; 2], grid: GridSpec) -> f64 {
    let n = grid.n() as f64;
    let h = grid.h();
    let s = |mi: usize| (PI * mi as f64 / n).sin().powi(2);
    let sum = match grid.dim() {
        1 => s(m[0]),
        _ => s(m[0]) + s(m[1]),
    };
    -4.0 / (h * h) * sum
}

/// `h² / (2 d D)`, the largest stable Forward Euler step.
pub fn critical_time_step(grid: GridSpec, diffusivity: f64) -> f64 {
    let h = grid.h();
    h * h / (2.0 * grid.dim() as f64 * diffusivity)
}

/// Per-mode multiplier of one time step.
pub fn amplification_factor(scheme: SchemeKind, m: [usize; 2], k: f64, diffusivity: f64, grid: GridSpec) -> f64 {
    rho(scheme, k * diffusivity * laplacian_eigenvalue(m, grid))
}

fn rho(scheme: SchemeKind, kdl: f64) -> f64 {
    match scheme {
        SchemeKind::ForwardEuler => 1.0 + kdl,
        // λ ≤ 0 keeps the denominator ≥ 1
        SchemeKind::CrankNicolson => (1.0 + 0.5 * kdl) / (1.0 - 0.5 * kdl),
    }
}

/// Periodic central-difference Laplacian applied directly with the stencil.
pub fn apply_discrete_laplacian(f: &ScalarField) -> ScalarField {
    let grid = f.grid();
    let n = grid.n();
    let inv_h2 = 1.0 / (grid.h() * grid.h());
    let v = f.values();
    let out = match grid.dim() {
        1 => (0..n)
            .map(|j| (v[(j + 1) % n] - 2.0 * v[j] + v[(j + n - 1) % n]) * inv_h2)
            .collect(),
        _ => (0..grid.len())
            .map(|idx| {
                let [a, b] = grid.unflatten(idx);
                let up = v[((a + 1) % n) * n + b];
                let down = v[((a + n - 1) % n) * n + b];
                let right = v[a * n + (b + 1) % n];
                let left = v[a * n + (b + n - 1) % n];
                (up + down + right + left - 4.0 * v[idx]) * inv_h2
            })
            .collect(),
    };
    ScalarField::from_raw(grid, out)
}

/// Forward Euler step `u + kD ∇_h² u` evaluated with the stencil.
pub fn step_forward_euler_stencil(f: &ScalarField, k: f64, diffusivity: f64) -> ScalarField {
    let lap = apply_discrete_laplacian(f);
    let values = f
        .values()
        .iter()
        .zip(lap.values())
        .map(|(u, l)| u + k * diffusivity * l)
        .collect();
    ScalarField::from_raw(f.grid(), values)
}

/// FFT plans and eigenvalues for one grid.
#[derive(Clone)]
pub struct Spectral {
    grid: GridSpec,
    fwd: Arc<dyn Fft<f64>>,
    inv: Arc<dyn Fft<f64>>,
    eigenvalues: Vec<f64>,
}

impl std::fmt::Debug for Spectral {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Spectral").field("grid", &self.grid).finish()
    }
}

impl Spectral {
    pub fn new(grid: GridSpec) -> Self {
        let mut planner = FftPlanner::new();
        let fwd = planner.plan_fft_forward(grid.n());
        let inv = planner.plan_fft_inverse(grid.n());
        let eigenvalues = (0..grid.len())
            .map(|i| laplacian_eigenvalue(grid.unflatten(i), grid))
            .collect();
        Self {
            grid,
            fwd,
            inv,
            eigenvalues,
        }
    }

    pub fn grid(&self) -> GridSpec {
        self.grid
    }

    /// Eigenvalue of mode `i` in row-major order.
    pub fn eigenvalues(&self) -> &[f64] {
        &self.eigenvalues
    }

    pub fn amplification(&self, scheme: SchemeKind, k: f64, diffusivity: f64) -> Vec<f64> {
        self.eigenvalues
            .iter()
            .map(|l| rho(scheme, k * diffusivity * l))
            .collect()
    }

    fn transform(&self, buf: &mut [Complex64], plan: &Arc<dyn Fft<f64>>) {
        let n = self.grid.n();
        plan.process(buf);
        if self.grid.dim() == 2 {
            transpose(buf, n);
            plan.process(buf);
            transpose(buf, n);
        }
    }

    /// Unnormalized forward DFT: `û_m = Σ_j u_j e^{-2πi m·j/N}`.
    pub fn forward(&self, values: &[f64]) -> Vec<Complex64> {
        let mut buf: Vec<Complex64> = values.iter().map(|&v| Complex64::new(v, 0.0)).collect();
        self.transform(&mut buf, &self.fwd);
        buf
    }

    /// Inverse DFT including the `1/N^d` factor; the imaginary part is dropped.
    pub fn inverse(&self, mut coeffs: Vec<Complex64>) -> Vec<f64> {
        self.transform(&mut coeffs, &self.inv);
        let scale = 1.0 / self.grid.len() as f64;
        coeffs.into_iter().map(|c| c.re * scale).collect()
    }
}

fn transpose(buf: &mut [Complex64], n: usize) {
    for i in 0..n {
        for j in (i + 1)..n {
            buf.swap(i * n + j, j * n + i);
        }
    }
}

/// One time step through Fourier space.
pub fn step(f: &ScalarField, config: &SolverConfig) -> Result<ScalarField, FdError> {
    config.validate()?;
    if f.grid() != config.grid {
        return Err(FieldError::GridMismatch(f.grid(), config.grid).into());
    }
    let spectral = Spectral::new(config.grid);
    Ok(step_with(&spectral, f, config.scheme, config.k, config.diffusivity))
}

pub fn step_with(spectral: &Spectral, f: &ScalarField, scheme: SchemeKind, k: f64, diffusivity: f64) -> ScalarField {
    let rho = spectral.amplification(scheme, k, diffusivity);
    let mut coeffs = spectral.forward(f.values());
    for (c, r) in coeffs.iter_mut().zip(&rho) {
        *c *= *r;
    }
    ScalarField::from_raw(f.grid(), spectral.inverse(coeffs))
}

/// Runs `n_max` steps and keeps every `sample_stride`-th level, starting with `u0`.
pub fn solve(u0: &ScalarField, config: &SolverConfig, sample_stride: usize) -> Result<FieldSeries, FdError> {
    let spectral = Spectral::new(config.grid);
    solve_with(&spectral, u0, config, sample_stride)
}

/// [`solve`] with precomputed plans, for callers that solve repeatedly on one grid.
///
/// Coefficients stay in Fourier space between samples; only sampled levels are
/// transformed back.
pub fn solve_with(spectral: &Spectral, u0: &ScalarField, config: &SolverConfig, sample_stride: usize) -> Result<FieldSeries, FdError> {
    config.validate()?;
    if sample_stride == 0 {
        return Err(FdError::ZeroStride);
    }
    if u0.grid() != config.grid || spectral.grid() != config.grid {
        return Err(FieldError::GridMismatch(u0.grid(), config.grid).into());
    }
    let rho = spectral.amplification(config.scheme, config.k, config.diffusivity);
    let mut coeffs = spectral.forward(u0.values());
    // a single mode of real amplitude A carries |û| = A N^d / 2
    let coeff_limit = INSTABILITY_THRESHOLD * config.grid.len() as f64;
    let mut frames = Vec::with_capacity(config.n_max / sample_stride + 1);
    frames.push(u0.clone());
    for n in 1..=config.n_max {
        let mut worst = 0.0f64;
        for (c, r) in coeffs.iter_mut().zip(&rho) {
            *c *= *r;
            worst = worst.max(c.norm());
        }
        if !worst.is_finite() || worst > coeff_limit {
            return Err(FdError::Unstable { step: n, value: worst / config.grid.len() as f64 });
        }
        if n % sample_stride == 0 {
            let values = spectral.inverse(coeffs.clone());
            let peak = values.iter().fold(0.0f64, |m, v| if v.is_nan() { f64::NAN } else { m.max(v.abs()) });
            if !peak.is_finite() || peak > INSTABILITY_THRESHOLD {
                return Err(FdError::Unstable { step: n, value: peak });
            }
            frames.push(ScalarField::from_raw(config.grid, values));
        }
    }
    Ok(FieldSeries {
        config: *config,
        sample_stride,
        frames,
    })
}

/// Indicator of `[1/4,3/4)²` sampled at cell centers.
pub fn make_patch_initial(grid: GridSpec) -> Result<ScalarField, FdError> {
    if grid.dim() != 2 {
        return Err(FdError::Config("the patch initial condition is two-dimensional".into()));
    }
    let inside = |j: usize| {
        let x = grid.center(j);
        (0.25..0.75).contains(&x)
    };
    Ok(ScalarField::from_fn(grid, |[a, b]| if inside(a) && inside(b) { 1.0 } else { 0.0 })?)
}

/// `cos(2π m·x_j)` sampled at grid nodes `x_j = j h`.
pub fn cosine_mode(grid: GridSpec, m: [usize; 2]) -> ScalarField {
    let n = grid.n() as f64;
    ScalarField::from_fn(grid, |j| {
        let phase = match grid.dim() {
            1 => (m[0] * j[0]) as f64,
            _ => (m[0] * j[0] + m[1] * j[1]) as f64,
        };
        (2.0 * PI * phase / n).cos()
    })
    .expect("finite cosine values")
}

/// Rows of `(|m|/N, ρ_m)` along the first axis for `m = 0..N-1`.
pub fn amplification_curve(scheme: SchemeKind, grid: GridSpec, k: f64, diffusivity: f64) -> Vec<(f64, f64)> {
    (0..grid.n())
        .map(|m| {
            (
                m as f64 / grid.n() as f64,
                amplification_factor(scheme, [m, if grid.dim() == 2 { m } else { 0 }], k, diffusivity, grid),
            )
        })
        .collect()
}
