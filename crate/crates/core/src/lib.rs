//! Diffusion-coefficient estimation from molecular dynamics.
//!
//! The pipeline runs a 2D Lennard-Jones NVE simulation of an argon patch in
//! helium ([`md`]), bins the argon positions onto a periodic grid
//! ([`binning`]), and fits the diffusion coefficient of the continuum model
//! ([`fdsolver`]) to the binned data by Levenberg-Marquardt ([`estimator`]).
//! [`analytic`] provides the Fourier-series reference solution and
//! [`trajio`] reads and writes trajectories, including LAMMPS text dumps.

pub mod analytic;
pub mod fdsolver;
pub mod field;
pub mod par;
pub mod units;

pub use field::{field_energy, field_mass, GridSpec, ScalarField};
pub use units::{nd_to_physical_d, UnitScale};
pub mod binning;
pub mod md;
pub mod trajio;
pub mod estimator;
pub mod pipeline;
