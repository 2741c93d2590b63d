//! Bridge between the nondimensional unit square and physical units.

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error, PartialEq)]
#[error("unit scale fields must be strictly positive (box {box_length_cm} cm, time {time_unit_s} s)")]
pub struct UnitScaleError {
    pub box_length_cm: f64,
    pub time_unit_s: f64,
}

/// Physical size of the unit square and physical duration of one time unit.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct UnitScale {
    box_length_cm: f64,
    time_unit_s: f64,
}

pub const ANGSTROM_CM: f64 = 1e-8;
pub const FEMTOSECOND_S: f64 = 1e-15;

impl UnitScale {
    pub fn new(box_length_cm: f64, time_unit_s: f64) -> Result<Self, UnitScaleError> {
        if !(box_length_cm > 0.0 && time_unit_s > 0.0) || !box_length_cm.is_finite() || !time_unit_s.is_finite() {
            return Err(UnitScaleError {
                box_length_cm,
                time_unit_s,
            });
        }
        Ok(Self {
            box_length_cm,
            time_unit_s,
        })
    }

    /// Unit square mapped onto an MD box of `side_angstrom`, one time unit = 1 ns.
    pub fn for_box_angstrom(side_angstrom: f64) -> Result<Self, UnitScaleError> {
        Self::new(side_angstrom * ANGSTROM_CM, 1e-9)
    }

    pub fn box_length_cm(&self) -> f64 {
        self.box_length_cm
    }

    pub fn time_unit_s(&self) -> f64 {
        self.time_unit_s
    }

    /// cm²/s represented by one nondimensional diffusion unit.
    pub fn diffusion_factor(&self) -> f64 {
        self.box_length_cm * self.box_length_cm / self.time_unit_s
    }

    pub fn fs_to_nd_time(&self, t_fs: f64) -> f64 {
        t_fs * FEMTOSECOND_S / self.time_unit_s
    }

    pub fn nd_time_to_fs(&self, t: f64) -> f64 {
        t * self.time_unit_s / FEMTOSECOND_S
    }
}

impl Default for UnitScale {
    /// A 5e4 Å box with time measured in nanoseconds.
    fn default() -> Self {
        Self {
            box_length_cm: 5e-4,
            time_unit_s: 1e-9,
        }
    }
}

pub fn nd_to_physical_d(d_nd: f64, scale: &UnitScale) -> f64 {
    d_nd * scale.diffusion_factor()
}

pub fn physical_to_nd_d(d_cm2_s: f64, scale: &UnitScale) -> f64 {
    d_cm2_s / scale.diffusion_factor()
}

/// Å²/fs expressed in cm²/s.
pub fn angstrom2_per_fs_to_cm2_per_s(d: f64) -> f64 {
    d * ANGSTROM_CM * ANGSTROM_CM / FEMTOSECOND_S
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn conversion_examples() {
        let s = UnitScale::default();
        assert_eq!(nd_to_physical_d(0.0, &s), 0.0);
        // (5e-4)^2 / 1e-9
        assert!((s.diffusion_factor() - 250.0).abs() < 1e-9);
        let d = nd_to_physical_d(0.7948 / 250.0, &s);
        assert!((d - 0.7948).abs() < 1e-12);
        assert!((nd_to_physical_d(3.1792e-3, &s) - 0.7948).abs() < 1e-12);
    }

    #[test]
    fn rejects_nonpositive() {
        assert!(UnitScale::new(0.0, 1.0).is_err());
        assert!(UnitScale::new(1.0, -1.0).is_err());
        assert!(UnitScale::new(f64::NAN, 1.0).is_err());
    }

    #[test]
    fn linear_in_d() {
        let s = UnitScale::new(3e-5, 2e-9).unwrap();
        let (a, b) = (0.37, 1.91);
        let lhs = nd_to_physical_d(2.0 * a + b, &s);
        let rhs = 2.0 * nd_to_physical_d(a, &s) + nd_to_physical_d(b, &s);
        assert!((lhs - rhs).abs() < 1e-12 * lhs.abs());
        assert!((physical_to_nd_d(nd_to_physical_d(a, &s), &s) - a).abs() < 1e-15);
    }

    #[test]
    fn time_mapping() {
        let s = UnitScale::default();
        assert!((s.fs_to_nd_time(5e3) - 5e-3).abs() < 1e-18);
        assert!((s.nd_time_to_fs(1.0) - 1e6).abs() < 1e-6);
        assert!((angstrom2_per_fs_to_cm2_per_s(1.0) - 0.1).abs() < 1e-15);
    }
}
