//! Levenberg-Marquardt fit of the diffusion coefficient to binned MD data.
//!
//! The model is the Crank-Nicolson solution `u(D)` sampled at the binned
//! frame times. With a single parameter the normal equations are scalar:
//! `δD = Jᵀr / (JᵀJ + λ)`, where `r = U - u(D)` and `J = ∂u/∂D` comes from
//! a central difference.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::binning::{align_times, BinError, BinnedSeries};
use crate::fdsolver::{make_patch_initial, solve_with, FdError, SchemeKind, SolverConfig, Spectral};
use crate::field::{GridSpec, ScalarField};
use crate::units::{nd_to_physical_d, UnitScale};

#[derive(Debug, Error, PartialEq)]
pub enum FitError {
    #[error(transparent)]
    Solver(#[from] FdError),
    #[error(transparent)]
    Alignment(#[from] BinError),
    #[error("invalid fit config: {0}")]
    Config(String),
    #[error("observed frames must be equally spaced in time (frame {index})")]
    UnevenSampling { index: usize },
    #[error("cost is not finite at D = {d}")]
    NonFiniteCost { d: f64 },
    #[error("finite-difference step underflows at D = {d}")]
    StepUnderflow { d: f64 },
    #[error("no step was accepted in {iterations} iterations")]
    NoAcceptedStep { iterations: usize },
    #[error("JᵀJ = {0:e} is degenerate; confidence interval undefined")]
    DegenerateJacobian(f64),
}

/// Source of the FD initial condition.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub enum FdInit {
    /// Indicator of the centered quarter-area square.
    #[default]
    Patch,
    /// The first binned frame.
    Frame0,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FitConfig {
    pub d0: f64,
    pub lambda0: f64,
    pub lambda_up: f64,
    pub lambda_down: f64,
    pub max_iter: usize,
    /// Stop when an accepted step satisfies `|δD|/D` below this.
    pub tol_step: f64,
    /// Stop when an accepted step lowers the cost by less than this.
    pub tol_cost: f64,
    pub jacobian_rel_step: f64,
}

impl Default for FitConfig {
    fn default() -> Self {
        Self {
            d0: 1e-2,
            lambda0: 1e-3,
            lambda_up: 10.0,
            lambda_down: 0.1,
            max_iter: 100,
            tol_step: 1e-8,
            tol_cost: 1e-12,
            jacobian_rel_step: 1e-6,
        }
    }
}

impl FitConfig {
    pub fn validate(&self) -> Result<(), FitError> {
        if !(self.d0 > 0.0 && self.d0.is_finite()) {
            return Err(FitError::Config(format!("D0 must be positive, got {}", self.d0)));
        }
        if !(self.lambda_up > 1.0) || !(self.lambda_down > 0.0 && self.lambda_down < 1.0) {
            return Err(FitError::Config("need lambda_up > 1 and 0 < lambda_down < 1".into()));
        }
        if !(self.lambda0 >= 0.0) {
            return Err(FitError::Config("lambda0 must be non-negative".into()));
        }
        if !(self.jacobian_rel_step > 0.0 && self.jacobian_rel_step < 1.0) {
            return Err(FitError::Config("jacobian_rel_step must lie in (0, 1)".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitResult {
    pub d_opt_nd: f64,
    pub d_opt_cm2_s: f64,
    pub final_cost: f64,
    pub iterations: usize,
    pub ci95_nd: f64,
    pub ci95_cm2_s: f64,
    pub converged: bool,
    /// Cost at the start and after every accepted step.
    pub cost_trace: Vec<f64>,
}

/// Observed frames plus everything needed to produce the matching FD frames.
#[derive(Debug, Clone)]
pub struct FitProblem {
    observed: Vec<ScalarField>,
    initial: ScalarField,
    /// FD time step.
    k: f64,
    /// FD steps between observed frames.
    stride: usize,
    spectral: Spectral,
}

impl FitProblem {
    /// `observed[n]` is compared with the FD level after `n * stride` steps of size `k`.
    pub fn new(observed: Vec<ScalarField>, initial: ScalarField, k: f64, stride: usize) -> Result<Self, FitError> {
        let grid = initial.grid();
        if observed.is_empty() {
            return Err(FitError::Alignment(BinError::Empty));
        }
        if observed.iter().any(|f| f.grid() != grid) {
            return Err(FitError::Alignment(BinError::GridMismatch));
        }
        if stride == 0 {
            return Err(FdError::ZeroStride.into());
        }
        SolverConfig::new(grid, k, 1.0, SchemeKind::CrankNicolson, 0)?;
        Ok(Self {
            observed,
            initial,
            k,
            stride,
            spectral: Spectral::new(grid),
        })
    }

    /// Builds the problem from a binned series: the FD step is the frame
    /// interval divided by `substeps`, and the FD frame times must line up
    /// with the MD ones.
    pub fn from_binned(binned: &BinnedSeries, scale: &UnitScale, substeps: usize, init: FdInit) -> Result<Self, FitError> {
        let times = binned.times_fs();
        if substeps == 0 {
            return Err(FdError::ZeroStride.into());
        }
        let interval_fs = if times.len() > 1 { times[1] - times[0] } else { 0.0 };
        for (i, w) in times.windows(2).enumerate() {
            if ((w[1] - w[0]) - interval_fs).abs() > 1e-9 * interval_fs.abs().max(1.0) {
                return Err(FitError::UnevenSampling { index: i + 1 });
            }
        }
        // a single frame carries no dynamics; any positive step will do
        let k = if times.len() > 1 {
            scale.fs_to_nd_time(interval_fs) / substeps as f64
        } else {
            1.0
        };
        let fd_times: Vec<f64> = (0..times.len()).map(|i| (i * substeps) as f64 * k).collect();
        align_times(&times, &fd_times, k, scale)?;
        let initial = match init {
            FdInit::Patch => make_patch_initial(binned.grid)?,
            FdInit::Frame0 => binned.frames[0].u.clone(),
        };
        Self::new(binned.fields(), initial, k, substeps)
    }

    pub fn grid(&self) -> GridSpec {
        self.initial.grid()
    }

    pub fn observed(&self) -> &[ScalarField] {
        &self.observed
    }

    pub fn n_frames(&self) -> usize {
        self.observed.len()
    }

    pub fn fd_step(&self) -> f64 {
        self.k
    }

    pub fn solver_config(&self, d: f64) -> Result<SolverConfig, FitError> {
        Ok(SolverConfig::new(
            self.grid(),
            self.k,
            d,
            SchemeKind::CrankNicolson,
            (self.n_frames() - 1) * self.stride,
        )?)
    }

    /// Crank-Nicolson frames `u^n(D)` at the observed times.
    pub fn model(&self, d: f64) -> Result<Vec<ScalarField>, FitError> {
        let cfg = self.solver_config(d)?;
        Ok(solve_with(&self.spectral, &self.initial, &cfg, self.stride)?.frames)
    }

    /// `U - u(D)` flattened frame by frame, row-major within a frame.
    pub fn residuals(&self, d: f64) -> Result<Vec<f64>, FitError> {
        let model = self.model(d)?;
        Ok(self
            .observed
            .iter()
            .zip(&model)
            .flat_map(|(o, m)| o.values().iter().zip(m.values()).map(|(a, b)| a - b))
            .collect())
    }

    fn cost_of(&self, residuals: &[f64]) -> f64 {
        residuals.iter().map(|r| r * r).sum::<f64>() / self.grid().len() as f64
    }

    /// `(1/N²) Σ_n Σ_j (U - u)²`; the frame count is not divided out.
    pub fn cost(&self, d: f64) -> Result<f64, FitError> {
        let c = self.cost_of(&self.residuals(d)?);
        if !c.is_finite() {
            return Err(FitError::NonFiniteCost { d });
        }
        Ok(c)
    }

    /// `∂u/∂D` by central difference with step `rel_step * D`, ordered like
    /// [`FitProblem::residuals`]. The two solves run concurrently.
    pub fn jacobian(&self, d: f64, rel_step: f64) -> Result<Vec<f64>, FitError> {
        let h = rel_step * d;
        if !(h > f64::MIN_POSITIVE) || d + h == d || d - h <= 0.0 {
            return Err(FitError::StepUnderflow { d });
        }
        let mut sides = crate::par::map_slice(&[d + h, d - h], |&x| self.model(x)).into_iter();
        let (plus, minus) = (sides.next().unwrap()?, sides.next().unwrap()?);
        let inv = 1.0 / (2.0 * h);
        Ok(plus
            .iter()
            .zip(&minus)
            .flat_map(|(p, m)| p.values().iter().zip(m.values()).map(move |(a, b)| (a - b) * inv))
            .collect())
    }

    /// Cost at each `D`, evaluated in parallel.
    pub fn cost_curve(&self, d_grid: &[f64]) -> Result<Vec<(f64, f64)>, FitError> {
        crate::par::map_slice(d_grid, |&d| self.cost(d).map(|c| (d, c)))
            .into_iter()
            .collect()
    }
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// `1.96 sqrt(s² / JᵀJ)` with `s² = Σr² / (len - 1)`, the usual asymptotic
/// normal interval for a one-parameter least-squares fit.
pub fn confidence_interval_95(jacobian: &[f64], residuals: &[f64]) -> Result<f64, FitError> {
    let jtj = dot(jacobian, jacobian);
    if !(jtj > 1e-300) || !jtj.is_finite() {
        return Err(FitError::DegenerateJacobian(jtj));
    }
    let dof = residuals.len().saturating_sub(1).max(1) as f64;
    let s2 = dot(residuals, residuals) / dof;
    Ok(1.96 * (s2 / jtj).sqrt())
}

/// Scalar Levenberg-Marquardt. Steps that would make `D` non-positive or
/// fail to lower the cost are rejected and raise the damping.
pub fn lm_fit(problem: &FitProblem, cfg: &FitConfig, scale: &UnitScale) -> Result<FitResult, FitError> {
    cfg.validate()?;
    let mut d = cfg.d0;
    let mut r = problem.residuals(d)?;
    let mut cost = problem.cost_of(&r);
    if !cost.is_finite() {
        return Err(FitError::NonFiniteCost { d });
    }
    let mut lambda = cfg.lambda0;
    let mut trace = vec![cost];
    let mut converged = false;
    let mut accepted = 0usize;
    let mut iterations = 0usize;
    let mut jac = problem.jacobian(d, cfg.jacobian_rel_step)?;
    let mut jtj = dot(&jac, &jac);
    let mut jtr = dot(&jac, &r);

    while iterations < cfg.max_iter {
        iterations += 1;
        let delta = jtr / (jtj + lambda);
        let candidate = d + delta;
        if !(candidate > 0.0) || !candidate.is_finite() {
            lambda = (lambda * cfg.lambda_up).max(f64::MIN_POSITIVE);
            continue;
        }
        let r_new = match problem.residuals(candidate) {
            Ok(r) => r,
            Err(FitError::Solver(FdError::Unstable { .. })) => {
                lambda = (lambda * cfg.lambda_up).max(f64::MIN_POSITIVE);
                continue;
            }
            Err(e) => return Err(e),
        };
        let cost_new = problem.cost_of(&r_new);
        if !cost_new.is_finite() {
            return Err(FitError::NonFiniteCost { d: candidate });
        }
        if cost_new < cost {
            let drop = cost - cost_new;
            d = candidate;
            r = r_new;
            cost = cost_new;
            trace.push(cost);
            accepted += 1;
            lambda *= cfg.lambda_down;
            if (delta / d).abs() < cfg.tol_step || drop < cfg.tol_cost {
                converged = true;
                break;
            }
            jac = problem.jacobian(d, cfg.jacobian_rel_step)?;
            jtj = dot(&jac, &jac);
            jtr = dot(&jac, &r);
        } else {
            // a flat cost at the minimum also ends the iteration
            if delta.abs() / d < cfg.tol_step {
                converged = accepted > 0 || cost_new == cost;
                break;
            }
            lambda = (lambda * cfg.lambda_up).max(f64::MIN_POSITIVE);
        }
    }
    if accepted == 0 && !converged {
        return Err(FitError::NoAcceptedStep { iterations });
    }
    if accepted > 0 {
        jac = problem.jacobian(d, cfg.jacobian_rel_step)?;
    }
    let ci = confidence_interval_95(&jac, &r).unwrap_or(f64::NAN);
    Ok(FitResult {
        d_opt_nd: d,
        d_opt_cm2_s: nd_to_physical_d(d, scale),
        final_cost: cost,
        iterations,
        ci95_nd: ci,
        ci95_cm2_s: nd_to_physical_d(ci, scale),
        converged,
        cost_trace: trace,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fdsolver::{cosine_mode, laplacian_eigenvalue};

    fn synthetic(n: usize, d: f64, frames: usize, k: f64, stride: usize) -> FitProblem {
        let g = GridSpec::square(n).unwrap();
        let u0 = make_patch_initial(g).unwrap();
        let probe = FitProblem::new(vec![u0.clone(); frames], u0.clone(), k, stride).unwrap();
        let observed = probe.model(d).unwrap();
        FitProblem::new(observed, u0, k, stride).unwrap()
    }

    #[test]
    fn self_residual_is_zero() {
        let p = synthetic(16, 0.3, 5, 1e-3, 2);
        let r = p.residuals(0.3).unwrap();
        assert_eq!(r.len(), 5 * 256);
        assert!(r.iter().all(|v| *v == 0.0));
        assert_eq!(p.cost(0.3).unwrap(), 0.0);
    }

    #[test]
    fn offset_residuals_and_cost() {
        let g = GridSpec::square(8).unwrap();
        let u0 = make_patch_initial(g).unwrap();
        let probe = FitProblem::new(vec![u0.clone(); 3], u0.clone(), 1e-3, 1).unwrap();
        let delta = 0.125;
        let observed: Vec<ScalarField> = probe
            .model(0.5)
            .unwrap()
            .into_iter()
            .map(|f| ScalarField::new(g, f.values().iter().map(|v| v + delta).collect()).unwrap())
            .collect();
        let p = FitProblem::new(observed, u0, 1e-3, 1).unwrap();
        let r = p.residuals(0.5).unwrap();
        assert!(r.iter().all(|v| (v - delta).abs() < 1e-14));
        // (1/N²) · F · N² · δ²
        assert!((p.cost(0.5).unwrap() - 3.0 * delta * delta).abs() < 1e-12);
        let rr: f64 = r.iter().map(|v| v * v).sum();
        assert!((p.cost(0.5).unwrap() - rr / 64.0).abs() < 1e-12);
    }

    #[test]
    fn jacobian_matches_spectral_derivative() {
        let g = GridSpec::square(16).unwrap();
        let m = [2, 3];
        let u0 = cosine_mode(g, m);
        let (k, stride, frames) = (2e-3, 3, 4);
        let p = FitProblem::new(vec![u0.clone(); frames], u0.clone(), k, stride).unwrap();
        let d = 0.05;
        let jac = p.jacobian(d, 1e-6).unwrap();
        // ρ = (1 + aD)/(1 - aD), a = kλ/2; dρ/dD = 2a/(1 - aD)²
        let a = 0.5 * k * laplacian_eigenvalue(m, g);
        let rho = (1.0 + a * d) / (1.0 - a * d);
        let drho = 2.0 * a / (1.0 - a * d).powi(2);
        let mut max_err: f64 = 0.0;
        let mut max_ref: f64 = 0.0;
        for n in 0..frames {
            let steps = (n * stride) as i32;
            let dfac = if steps == 0 { 0.0 } else { steps as f64 * rho.powi(steps - 1) * drho };
            for (idx, v) in u0.values().iter().enumerate() {
                let exact = dfac * v;
                max_err = max_err.max((jac[n * g.len() + idx] - exact).abs());
                max_ref = max_ref.max(exact.abs());
            }
        }
        assert!(max_err <= 1e-6 * max_ref, "{max_err} vs {max_ref}");
    }

    #[test]
    fn jacobian_frame0_and_mass_are_flat() {
        let p = synthetic(16, 0.3, 4, 1e-3, 2);
        let jac = p.jacobian(0.3, 1e-6).unwrap();
        assert!(jac[..256].iter().all(|v| *v == 0.0));
        for frame in jac.chunks(256) {
            assert!(frame.iter().sum::<f64>().abs() / 256.0 < 1e-9);
        }
        assert!(matches!(p.jacobian(0.3, 0.0), Err(FitError::StepUnderflow { .. })));
    }

    #[test]
    fn jacobian_step_consistency() {
        let p = synthetic(16, 0.3, 4, 1e-3, 2);
        let a = p.jacobian(0.4, 1e-5).unwrap();
        let b = p.jacobian(0.4, 1e-6).unwrap();
        let scale = a.iter().fold(0.0f64, |m, v| m.max(v.abs()));
        let err = a.iter().zip(&b).fold(0.0f64, |m, (x, y)| m.max((x - y).abs()));
        assert!(err <= 1e-4 * scale);
    }

    #[test]
    fn ci_zero_residuals() {
        assert_eq!(confidence_interval_95(&[1.0, 2.0], &[0.0, 0.0]).unwrap(), 0.0);
        assert!(matches!(confidence_interval_95(&[0.0, 0.0], &[1.0, 0.0]), Err(FitError::DegenerateJacobian(_))));
        // s² = 2/1, JᵀJ = 2 → 1.96
        assert!((confidence_interval_95(&[1.0, 1.0], &[1.0, -1.0]).unwrap() - 1.96).abs() < 1e-15);
    }

    #[test]
    fn config_validation() {
        assert!(FitConfig { d0: 0.0, ..Default::default() }.validate().is_err());
        assert!(FitConfig { lambda_up: 1.0, ..Default::default() }.validate().is_err());
        assert!(FitConfig { lambda_down: 1.0, ..Default::default() }.validate().is_err());
    }

    #[test]
    fn recovers_from_above_and_below() {
        let p = synthetic(20, 0.8, 6, 5e-4, 10);
        for d0 in [0.08, 8.0] {
            let fit = lm_fit(&p, &FitConfig { d0, ..Default::default() }, &UnitScale::default()).unwrap();
            assert!(fit.converged);
            assert!((fit.d_opt_nd - 0.8).abs() < 1e-6 * 0.8, "d0={d0}: {}", fit.d_opt_nd);
            assert!(fit.cost_trace.windows(2).all(|w| w[1] < w[0]));
        }
    }
}
