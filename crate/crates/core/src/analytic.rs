//! Fourier-series solution of the periodic diffusion equation on `[0,1]^d`.
//!
//! Each mode evolves independently, `û_m(t) = û_m(0) exp(-4π²|m|²Dt)`, so the
//! truncated series is an exact reference for the finite-difference solver
//! once `t` is large enough that the truncated tail is negligible.

use std::f64::consts::PI;

use num_complex::Complex64;

use crate::field::{GridSpec, ScalarField};

/// Per-axis truncation used when none is given.
pub const DEFAULT_TRUNCATION: usize = 64;

/// One term of a Fourier series: integer wavenumber and its initial coefficient.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FourierMode {
    pub m: [i64; 2],
    pub coeff0: Complex64,
}

impl FourierMode {
    pub fn norm_sq(&self) -> f64 {
        (self.m[0] * self.m[0] + self.m[1] * self.m[1]) as f64
    }
}

/// `exp(-4π²|m|²Dt)`.
pub fn mode_decay_factor(m: [i64; 2], d: f64, t: f64) -> f64 {
    let m2 = (m[0] * m[0] + m[1] * m[1]) as f64;
    (-4.0 * PI * PI * m2 * d * t).exp()
}

/// `∫_{1/4}^{3/4} exp(-2πimx) dx`, which is real: `(-1)^m sin(πm/2)/(πm)`.
pub fn patch_coefficient_1d(m: i64) -> f64 {
    if m == 0 {
        return 0.5;
    }
    // sin(πm/2) is exactly 0, ±1; avoid the rounding of the library sine.
    let s = match m.rem_euclid(4) {
        1 => 1.0,
        3 => -1.0,
        _ => return 0.0,
    };
    let sign = if m % 2 == 0 { 1.0 } else { -1.0 };
    sign * s / (PI * m as f64)
}

/// Fourier coefficient of the indicator of `[1/4,3/4]²`.
pub fn patch_fourier_coefficient(m: [i64; 2]) -> Complex64 {
    Complex64::new(patch_coefficient_1d(m[0]) * patch_coefficient_1d(m[1]), 0.0)
}

/// Truncated patch series at `x`, keeping all modes with `|m_i| <= trunc`.
pub fn exact_solution(x: [f64; 2], t: f64, d: f64, trunc: usize) -> f64 {
    PatchSeries::new(trunc).evaluate(x, t, d)
}

/// The square-patch series, evaluated as a product of two 1D cosine series.
#[derive(Debug, Clone)]
pub struct PatchSeries {
    coeffs: Vec<f64>,
}

impl PatchSeries {
    pub fn new(trunc: usize) -> Self {
        assert!(trunc >= 1, "truncation order must be at least 1");
        Self {
            coeffs: (0..=trunc as i64).map(patch_coefficient_1d).collect(),
        }
    }

    pub fn truncation(&self) -> usize {
        self.coeffs.len() - 1
    }

    fn damped(&self, t: f64, d: f64) -> Vec<f64> {
        self.coeffs
            .iter()
            .enumerate()
            .map(|(m, c)| c * mode_decay_factor([m as i64, 0], d, t))
            .collect()
    }

    fn axis(damped: &[f64], x: f64) -> f64 {
        // conjugate pairs ±m collapse onto 2 c_m cos(2πmx)
        damped[0]
            + 2.0
                * damped[1..]
                    .iter()
                    .enumerate()
                    .map(|(i, c)| c * (2.0 * PI * (i + 1) as f64 * x).cos())
                    .sum::<f64>()
    }

    pub fn evaluate(&self, x: [f64; 2], t: f64, d: f64) -> f64 {
        let damped = self.damped(t, d);
        Self::axis(&damped, x[0]) * Self::axis(&damped, x[1])
    }

    /// Samples the series at cell centers of a 2D grid.
    pub fn on_grid(&self, grid: GridSpec, t: f64, d: f64) -> ScalarField {
        assert_eq!(grid.dim(), 2, "the patch series is two-dimensional");
        let damped = self.damped(t, d);
        let profile: Vec<f64> = (0..grid.n()).map(|j| Self::axis(&damped, grid.center(j))).collect();
        let values = (0..grid.len())
            .map(|i| {
                let [a, b] = grid.unflatten(i);
                profile[a] * profile[b]
            })
            .collect();
        ScalarField::new(grid, values).expect("finite series values")
    }

    /// Squared L2 norm of the discarded tail at `t = 0`: `‖u0‖² − Σ_{kept} |û_m|²`.
    pub fn truncation_l2_sq(&self) -> f64 {
        let kept_1d: f64 = self.coeffs[0] * self.coeffs[0]
            + 2.0 * self.coeffs[1..].iter().map(|c| c * c).sum::<f64>();
        // ‖u0‖² = 1/4 is the patch area
        (0.25 - kept_1d * kept_1d).max(0.0)
    }

    /// Modes of the truncated series in general form.
    pub fn modes(&self) -> Vec<FourierMode> {
        let m = self.truncation() as i64;
        let mut out = Vec::with_capacity(((2 * m + 1) * (2 * m + 1)) as usize);
        for a in -m..=m {
            for b in -m..=m {
                out.push(FourierMode {
                    m: [a, b],
                    coeff0: patch_fourier_coefficient([a, b]),
                });
            }
        }
        out
    }
}

/// A user-supplied truncated Fourier series in `d` dimensions.
#[derive(Debug, Clone)]
pub struct FourierSeries {
    dim: usize,
    modes: Vec<FourierMode>,
}

impl FourierSeries {
    /// For `dim == 1` the second wavenumber component must be zero.
    pub fn new(dim: usize, modes: Vec<FourierMode>) -> Self {
        assert!(dim == 1 || dim == 2);
        assert!(dim == 2 || modes.iter().all(|m| m.m[1] == 0));
        Self { dim, modes }
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn modes(&self) -> &[FourierMode] {
        &self.modes
    }

    pub fn coefficient(&self, mode: &FourierMode, t: f64, d: f64) -> Complex64 {
        mode.coeff0 * mode_decay_factor(mode.m, d, t)
    }

    /// Real part of the series at `x`.
    pub fn evaluate(&self, x: [f64; 2], t: f64, d: f64) -> f64 {
        self.modes
            .iter()
            .map(|mode| {
                let phase = 2.0 * PI * (mode.m[0] as f64 * x[0] + mode.m[1] as f64 * x[1]);
                (self.coefficient(mode, t, d) * Complex64::from_polar(1.0, phase)).re
            })
            .sum()
    }

    /// `Σ_m |û_m(t)|²`.
    pub fn energy(&self, t: f64, d: f64) -> f64 {
        self.modes.iter().map(|m| self.coefficient(m, t, d).norm_sqr()).sum()
    }

    /// Spatial mean, the `m = 0` coefficient.
    pub fn mass(&self) -> f64 {
        self.modes
            .iter()
            .filter(|m| m.m == [0, 0])
            .map(|m| m.coeff0.re)
            .sum()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    /// Composite Simpson quadrature of `exp(-2πimx)` over `[1/4,3/4]`.
    fn quad_coefficient(m: i64) -> Complex64 {
        let n = 20_000;
        let (a, b) = (0.25, 0.75);
        let h = (b - a) / n as f64;
        let f = |x: f64| Complex64::from_polar(1.0, -2.0 * PI * m as f64 * x);
        let mut s = f(a) + f(b);
        for i in 1..n {
            let w = if i % 2 == 1 { 4.0 } else { 2.0 };
            s += f(a + i as f64 * h) * w;
        }
        s * (h / 3.0)
    }

    #[test]
    fn coefficient_examples() {
        assert_eq!(patch_fourier_coefficient([0, 0]).re, 0.25);
        let c10 = patch_fourier_coefficient([1, 0]);
        assert!((c10.re + 1.0 / (2.0 * PI)).abs() < 1e-15);
        assert_eq!(c10.im, 0.0);
        assert_eq!(patch_fourier_coefficient([2, 0]).norm(), 0.0);
    }

    #[test]
    fn coefficient_matches_quadrature() {
        for m in -9..=9 {
            let q = quad_coefficient(m);
            let c = patch_coefficient_1d(m);
            assert!((q.re - c).abs() < 1e-12, "m={m}: {q} vs {c}");
            assert!(q.im.abs() < 1e-12);
        }
        let q2 = quad_coefficient(1) * quad_coefficient(0);
        assert!((q2.re + 1.0 / (2.0 * PI)).abs() < 1e-12);
    }

    #[test]
    fn decay_examples() {
        assert_eq!(mode_decay_factor([0, 0], 3.0, 7.0), 1.0);
        let t = 1.0 / (4.0 * PI * PI);
        assert!((mode_decay_factor([1, 0], 1.0, t) - (-1.0f64).exp()).abs() < 1e-15);
        assert!((mode_decay_factor([0, 1], 1.0, t) - (-1.0f64).exp()).abs() < 1e-15);
        assert_eq!(mode_decay_factor([3, 2], 0.5, 1e6), 0.0);
    }

    #[test]
    fn decay_is_multiplicative() {
        for &(m, d, t1, t2) in &[([1, 0], 0.3, 0.01, 0.02), ([3, 4], 1e-3, 0.5, 0.25), ([7, 1], 2.0, 1e-4, 3e-4)] {
            let lhs = mode_decay_factor(m, d, t1 + t2);
            let rhs = mode_decay_factor(m, d, t1) * mode_decay_factor(m, d, t2);
            assert!((lhs - rhs).abs() <= 1e-12 * lhs.max(1e-300));
        }
    }

    #[test]
    fn long_time_limit_is_mean() {
        let s = PatchSeries::new(DEFAULT_TRUNCATION);
        for x in [[0.1, 0.9], [0.5, 0.5], [0.0, 0.3]] {
            assert!((s.evaluate(x, 1e3, 1.0) - 0.25).abs() < 1e-14);
        }
    }

    #[test]
    fn center_partial_sums_approach_one() {
        // per-axis error behaves like 2/(πM)
        let mut prev = f64::INFINITY;
        for m in [16, 64, 256, 2048] {
            let err = (exact_solution([0.5, 0.5], 0.0, 1.0, m) - 1.0).abs();
            assert!(err < prev);
            prev = err;
        }
        assert!(prev < 1e-3);
    }

    #[test]
    fn mass_is_quarter() {
        let s = PatchSeries::new(8);
        let series = FourierSeries::new(2, s.modes());
        assert_eq!(series.mass(), 0.25);
        // midpoint rule on a fine grid is exact for the trigonometric polynomial
        let g = GridSpec::square(64).unwrap();
        for t in [0.0, 0.01, 1.0] {
            let f = s.on_grid(g, t, 0.1);
            assert!((crate::field::field_mass(&f) - 0.25).abs() < 1e-14);
        }
    }

    #[test]
    fn general_series_matches_separable_form() {
        let s = PatchSeries::new(6);
        let series = FourierSeries::new(2, s.modes());
        for &(x, t) in &[([0.3, 0.61], 0.0), ([0.05, 0.5], 0.01), ([0.77, 0.2], 0.2)] {
            let a = series.evaluate(x, t, 0.4);
            let b = s.evaluate(x, t, 0.4);
            assert!((a - b).abs() < 1e-13, "{a} vs {b}");
        }
    }

    #[test]
    fn energy_non_increasing() {
        let series = FourierSeries::new(2, PatchSeries::new(12).modes());
        let times = [0.0, 1e-4, 1e-3, 0.01, 0.05, 0.3, 1.0];
        for w in times.windows(2) {
            assert!(series.energy(w[1], 0.2) <= series.energy(w[0], 0.2));
        }
        assert!((series.energy(50.0, 0.2) - 0.0625).abs() < 1e-15);
    }

    #[test]
    fn grid_samples_reproduce_initial_indicator() {
        // cell-center samples avoid the jumps; the discrete L2 misfit stays
        // within the continuum truncation tail
        for n in [8, 16, 32] {
            let g = GridSpec::square(n).unwrap();
            let s = PatchSeries::new(DEFAULT_TRUNCATION);
            let series = s.on_grid(g, 0.0, 1.0);
            let patch = crate::fdsolver::make_patch_initial(g).unwrap();
            let mse = series
                .values()
                .iter()
                .zip(patch.values())
                .map(|(a, b)| (a - b) * (a - b))
                .sum::<f64>()
                / g.len() as f64;
            assert!(mse <= s.truncation_l2_sq(), "n={n}: {mse} vs {}", s.truncation_l2_sq());
        }
    }
}
