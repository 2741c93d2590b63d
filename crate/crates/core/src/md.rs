//! Two-dimensional Lennard-Jones molecular dynamics of He/Ar mixtures in
//! LAMMPS "real" units: Å, fs, kcal/mol, g/mol, K.
//!
//! Integration is velocity Verlet in the NVE ensemble with periodic
//! boundaries under the minimum-image convention. Forces use a cell list
//! with cell edge at least the cutoff, rebuilt every step.

use std::fmt;
use std::str::FromStr;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::trajio::{Frame, ParticleInfo, Trajectory};

/// Boltzmann constant, kcal/(mol·K).
pub const KB_KCAL_PER_MOL_K: f64 = 0.001987;

/// Acceleration in Å/fs² produced by 1 kcal/(mol·Å) acting on 1 g/mol.
pub const ACCEL_PER_FORCE_MASS: f64 = 4.184e-4;

/// Cutoff shared by all pair types, Å.
pub const R_CUT: f64 = 20.0;

/// Closer than this (Å) two particles count as coincident.
pub const COINCIDENT_TOL: f64 = 1e-6;

/// Velocity magnitude (Å/fs) treated as a blown-up integration.
pub const MAX_SPEED: f64 = 1.0;

#[derive(Debug, Error, PartialEq)]
pub enum MdError {
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error("particles {i} and {j} coincide (|r| = {r:e} Å)")]
    Coincident { i: usize, j: usize, r: f64 },
    #[error("non-positive separation {0}")]
    NonPositiveDistance(f64),
    #[error("could not place particle {index} without overlap after {attempts} attempts")]
    Placement { index: usize, attempts: usize },
    #[error("integration unstable at step {step}: particle {particle} reached speed {speed:.3e} Å/fs")]
    Unstable { step: usize, particle: usize, speed: f64 },
    #[error("MSD estimate: {0}")]
    Msd(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Species {
    He = 0,
    Ar = 1,
}

impl Species {
    /// Molar mass in g/mol.
    pub fn mass(self) -> f64 {
        match self {
            Species::He => 4.003,
            Species::Ar => 39.948,
        }
    }
}

impl fmt::Display for Species {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Species::He => "He",
            Species::Ar => "Ar",
        })
    }
}

impl FromStr for Species {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "he" | "helium" => Ok(Species::He),
            "ar" | "argon" => Ok(Species::Ar),
            _ => Err(format!("unknown species '{s}'")),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LJPairParams {
    /// Well depth, kcal/mol.
    pub epsilon: f64,
    /// Zero crossing, Å.
    pub sigma: f64,
    /// Å.
    pub r_cut: f64,
}

impl LJPairParams {
    pub fn new(epsilon: f64, sigma: f64, r_cut: f64) -> Result<Self, MdError> {
        if !(epsilon > 0.0 && sigma > 0.0 && r_cut > sigma) {
            return Err(MdError::Config(format!(
                "LJ parameters need epsilon, sigma > 0 and r_cut > sigma (got {epsilon}, {sigma}, {r_cut})"
            )));
        }
        Ok(Self { epsilon, sigma, r_cut })
    }
}

/// Tabulated He/Ar parameters; the mixed pair is the geometric mean.
pub fn pair_params(a: Species, b: Species) -> LJPairParams {
    let (epsilon, sigma) = match (a, b) {
        (Species::He, Species::He) => (0.0196, 2.50),
        (Species::Ar, Species::Ar) => (0.2498, 3.40),
        _ => (0.0700, 2.92),
    };
    LJPairParams {
        epsilon,
        sigma,
        r_cut: R_CUT,
    }
}

/// Truncated 12-6 potential, kcal/mol.
pub fn lj_potential(r: f64, p: &LJPairParams) -> Result<f64, MdError> {
    if !(r > 0.0) {
        return Err(MdError::NonPositiveDistance(r));
    }
    if r >= p.r_cut {
        return Ok(0.0);
    }
    let s6 = (p.sigma / r).powi(6);
    Ok(4.0 * p.epsilon * (s6 * s6 - s6))
}

/// Force on the particle at `r_vec` (displacement from its partner), in
/// kcal/(mol·Å). Positive projection on `r_vec` means repulsion.
pub fn lj_force_pair(r_vec: [f64; 2], p: &LJPairParams) -> Result<[f64; 2], MdError> {
    let r2 = r_vec[0] * r_vec[0] + r_vec[1] * r_vec[1];
    if r2 < COINCIDENT_TOL * COINCIDENT_TOL {
        return Err(MdError::Coincident { i: 0, j: 0, r: r2.sqrt() });
    }
    Ok(pair_force(r_vec, r2, p).0)
}

/// Force and energy for a pair with squared separation `r2`.
#[inline]
fn pair_force(r_vec: [f64; 2], r2: f64, p: &LJPairParams) -> ([f64; 2], f64) {
    if r2 >= p.r_cut * p.r_cut {
        return ([0.0, 0.0], 0.0);
    }
    let inv_r2 = 1.0 / r2;
    let s2 = p.sigma * p.sigma * inv_r2;
    let s6 = s2 * s2 * s2;
    let s12 = s6 * s6;
    // |F|/r = 24ε[2(σ/r)^12 - (σ/r)^6] / r²
    let f_over_r = 24.0 * p.epsilon * (2.0 * s12 - s6) * inv_r2;
    ([f_over_r * r_vec[0], f_over_r * r_vec[1]], 4.0 * p.epsilon * (s12 - s6))
}

/// Square periodic box `[0, side)²`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SimBox {
    side: f64,
}

impl SimBox {
    pub fn new(side: f64) -> Result<Self, MdError> {
        if !(side > 0.0 && side.is_finite()) {
            return Err(MdError::Config(format!("box side must be positive, got {side}")));
        }
        Ok(Self { side })
    }

    pub fn side(&self) -> f64 {
        self.side
    }

    /// Minimum image needs the box to exceed twice the cutoff.
    pub fn check_cutoff(&self, r_cut: f64) -> Result<(), MdError> {
        if self.side <= 2.0 * r_cut {
            return Err(MdError::Config(format!(
                "box side {} Å must exceed twice the cutoff ({} Å)",
                self.side, r_cut
            )));
        }
        Ok(())
    }

    /// Shifts `dx` by a multiple of the side into `[-side/2, side/2)`.
    #[inline]
    pub fn minimum_image(&self, dx: f64) -> f64 {
        dx - self.side * (dx / self.side + 0.5).floor()
    }

    #[inline]
    pub fn wrap(&self, x: f64) -> f64 {
        let w = x.rem_euclid(self.side);
        // rem_euclid can round up to exactly `side` for tiny negative x
        if w >= self.side {
            0.0
        } else {
            w
        }
    }

    pub fn wrap_point(&self, r: [f64; 2]) -> [f64; 2] {
        [self.wrap(r[0]), self.wrap(r[1])]
    }

    pub fn displacement(&self, a: [f64; 2], b: [f64; 2]) -> [f64; 2] {
        [self.minimum_image(a[0] - b[0]), self.minimum_image(a[1] - b[1])]
    }
}

/// Minimum image of a displacement vector.
pub fn minimum_image(dx: [f64; 2], sim_box: &SimBox) -> [f64; 2] {
    [sim_box.minimum_image(dx[0]), sim_box.minimum_image(dx[1])]
}

#[derive(Debug, Clone, PartialEq)]
pub struct ParticleState {
    /// Wrapped into `[0, side)²`, Å.
    pub positions: Vec<[f64; 2]>,
    /// Continuous positions for displacement statistics, Å.
    pub unwrapped: Vec<[f64; 2]>,
    /// Å/fs.
    pub velocities: Vec<[f64; 2]>,
    pub species: Vec<Species>,
    /// fs.
    pub time: f64,
}

impl ParticleState {
    pub fn len(&self) -> usize {
        self.positions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.positions.is_empty()
    }

    /// Kinetic energy, kcal/mol.
    pub fn kinetic_energy(&self) -> f64 {
        self.velocities
            .iter()
            .zip(&self.species)
            .map(|(v, s)| 0.5 * s.mass() * (v[0] * v[0] + v[1] * v[1]))
            .sum::<f64>()
            / ACCEL_PER_FORCE_MASS
    }

    /// Total momentum, g/mol·Å/fs.
    pub fn momentum(&self) -> [f64; 2] {
        self.velocities.iter().zip(&self.species).fold([0.0, 0.0], |p, (v, s)| {
            [p[0] + s.mass() * v[0], p[1] + s.mass() * v[1]]
        })
    }

    /// Sum of |m v| over particles; the scale for relative momentum checks.
    pub fn momentum_scale(&self) -> f64 {
        self.velocities
            .iter()
            .zip(&self.species)
            .map(|(v, s)| s.mass() * (v[0] * v[0] + v[1] * v[1]).sqrt())
            .sum()
    }

    pub fn particle_info(&self) -> Vec<ParticleInfo> {
        self.species
            .iter()
            .enumerate()
            .map(|(i, &species)| ParticleInfo {
                id: i as u64 + 1,
                species,
            })
            .collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MDConfig {
    /// fs.
    pub dt: f64,
    /// K.
    pub temperature: f64,
    /// kcal/(mol·K).
    pub kb: f64,
    pub n_he: usize,
    pub n_ar: usize,
    pub seed: u64,
    /// Steps between trajectory frames.
    pub sample_stride: usize,
}

impl Default for MDConfig {
    fn default() -> Self {
        Self {
            dt: 5.0,
            temperature: 300.0,
            kb: KB_KCAL_PER_MOL_K,
            n_he: 30_000,
            n_ar: 30_000,
            seed: 1,
            sample_stride: 1000,
        }
    }
}

impl MDConfig {
    pub fn validate(&self) -> Result<(), MdError> {
        if !(self.dt > 0.0 && self.dt.is_finite()) {
            return Err(MdError::Config(format!("dt must be positive, got {}", self.dt)));
        }
        if !(self.temperature > 0.0 && self.temperature.is_finite()) {
            return Err(MdError::Config(format!("temperature must be positive, got {}", self.temperature)));
        }
        if !(self.kb > 0.0) {
            return Err(MdError::Config("kB must be positive".into()));
        }
        if self.sample_stride == 0 {
            return Err(MdError::Config("sample stride must be at least 1".into()));
        }
        Ok(())
    }

    /// Per-component velocity variance `kB T / m` in Å²/fs².
    pub fn velocity_variance(&self, species: Species) -> f64 {
        self.kb * self.temperature / species.mass() * ACCEL_PER_FORCE_MASS
    }
}

/// Minimum initial separation, as a fraction of the Ar-Ar σ.
pub const PLACEMENT_MIN_SIGMA_FRACTION: f64 = 0.8;
pub const PLACEMENT_ATTEMPTS: usize = 100;

/// Helium uniform over the box, argon uniform over the centered square of
/// half the side, Maxwell-Boltzmann velocities with the net momentum removed.
pub fn init_state(cfg: &MDConfig, sim_box: &SimBox) -> Result<ParticleState, MdError> {
    cfg.validate()?;
    let side = sim_box.side();
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let n = cfg.n_he + cfg.n_ar;
    let min_sep = PLACEMENT_MIN_SIGMA_FRACTION * pair_params(Species::Ar, Species::Ar).sigma;
    let mut grid = PlacementGrid::new(side, min_sep);

    let mut positions = Vec::with_capacity(n);
    let mut species = Vec::with_capacity(n);
    let regions = [(Species::He, cfg.n_he, 0.0, side), (Species::Ar, cfg.n_ar, 0.25 * side, 0.75 * side)];
    for (sp, count, lo, hi) in regions {
        for _ in 0..count {
            let index = positions.len();
            let mut placed = None;
            for _ in 0..PLACEMENT_ATTEMPTS {
                let r = [sim_box.wrap(rng.random_range(lo..hi)), sim_box.wrap(rng.random_range(lo..hi))];
                if !grid.overlaps(r, &positions, sim_box) {
                    placed = Some(r);
                    break;
                }
            }
            let r = placed.ok_or(MdError::Placement {
                index,
                attempts: PLACEMENT_ATTEMPTS,
            })?;
            grid.insert(r, index);
            positions.push(r);
            species.push(sp);
        }
    }

    let mut velocities = Vec::with_capacity(n);
    for &sp in &species {
        let normal = Normal::new(0.0, cfg.velocity_variance(sp).sqrt()).expect("positive variance");
        velocities.push([normal.sample(&mut rng), normal.sample(&mut rng)]);
    }
    if n > 0 {
        let total_mass: f64 = species.iter().map(|s| s.mass()).sum();
        let p = velocities
            .iter()
            .zip(&species)
            .fold([0.0, 0.0], |p, (v, s)| [p[0] + s.mass() * v[0], p[1] + s.mass() * v[1]]);
        let vcm = [p[0] / total_mass, p[1] / total_mass];
        for v in &mut velocities {
            v[0] -= vcm[0];
            v[1] -= vcm[1];
        }
    }

    Ok(ParticleState {
        unwrapped: positions.clone(),
        positions,
        velocities,
        species,
        time: 0.0,
    })
}

/// Hash grid for the overlap test during placement.
struct PlacementGrid {
    cells: std::collections::HashMap<(i64, i64), Vec<usize>>,
    edge: f64,
    n_cells: i64,
    min_sep: f64,
}

impl PlacementGrid {
    fn new(side: f64, min_sep: f64) -> Self {
        let n_cells = ((side / min_sep).floor() as i64).max(1);
        Self {
            cells: Default::default(),
            edge: side / n_cells as f64,
            n_cells,
            min_sep,
        }
    }

    fn cell(&self, r: [f64; 2]) -> (i64, i64) {
        let c = |x: f64| ((x / self.edge) as i64).min(self.n_cells - 1);
        (c(r[0]), c(r[1]))
    }

    fn insert(&mut self, r: [f64; 2], index: usize) {
        let c = self.cell(r);
        self.cells.entry(c).or_default().push(index);
    }

    fn overlaps(&self, r: [f64; 2], positions: &[[f64; 2]], sim_box: &SimBox) -> bool {
        let (cx, cy) = self.cell(r);
        let min2 = self.min_sep * self.min_sep;
        for dx in -1..=1 {
            for dy in -1..=1 {
                let key = ((cx + dx).rem_euclid(self.n_cells), (cy + dy).rem_euclid(self.n_cells));
                if let Some(list) = self.cells.get(&key) {
                    for &j in list {
                        let d = sim_box.displacement(r, positions[j]);
                        if d[0] * d[0] + d[1] * d[1] < min2 {
                            return true;
                        }
                    }
                }
            }
        }
        false
    }
}

/// Forces (kcal/(mol·Å)) and total potential energy (kcal/mol).
#[derive(Debug, Clone, PartialEq)]
pub struct ForceResult {
    pub forces: Vec<[f64; 2]>,
    pub potential: f64,
}

/// Particles sorted by cell; a cell's members are a contiguous run of `order`.
struct CellList {
    n_cells: usize,
    edge: f64,
    /// Sorted cell keys, parallel to `order`.
    keys: Vec<usize>,
    order: Vec<usize>,
}

impl CellList {
    /// `None` when fewer than three cells fit per side; neighbor cells would
    /// then alias and the all-pairs loop is used instead.
    fn build(positions: &[[f64; 2]], sim_box: &SimBox, r_cut: f64) -> Option<Self> {
        let n_cells = (sim_box.side() / r_cut).floor() as usize;
        if n_cells < 3 {
            return None;
        }
        let edge = sim_box.side() / n_cells as f64;
        let mut pairs: Vec<(usize, usize)> = positions
            .iter()
            .enumerate()
            .map(|(i, r)| {
                let c = |x: f64| ((x / edge) as usize).min(n_cells - 1);
                (c(r[0]) * n_cells + c(r[1]), i)
            })
            .collect();
        pairs.sort_unstable();
        let (keys, order) = pairs.into_iter().unzip();
        Some(Self {
            n_cells,
            edge,
            keys,
            order,
        })
    }

    fn range(&self, key: usize) -> std::ops::Range<usize> {
        let lo = self.keys.partition_point(|&k| k < key);
        let hi = lo + self.keys[lo..].partition_point(|&k| k == key);
        lo..hi
    }

    fn neighbor(&self, key: usize, dx: isize, dy: isize) -> usize {
        let n = self.n_cells as isize;
        let cx = (key / self.n_cells) as isize;
        let cy = (key % self.n_cells) as isize;
        ((cx + dx).rem_euclid(n) * n + (cy + dy).rem_euclid(n)) as usize
    }

    /// Runs of `order` sharing a cell, as (key, range).
    fn occupied(&self) -> Vec<(usize, std::ops::Range<usize>)> {
        let mut out = Vec::new();
        let mut start = 0;
        while start < self.keys.len() {
            let key = self.keys[start];
            let end = start + self.keys[start..].partition_point(|&k| k == key);
            out.push((key, start..end));
            start = end;
        }
        out
    }
}

fn max_cutoff() -> f64 {
    [Species::He, Species::Ar]
        .iter()
        .flat_map(|&a| [Species::He, Species::Ar].map(move |b| pair_params(a, b).r_cut))
        .fold(0.0, f64::max)
}

#[inline]
fn interact(
    i: usize,
    j: usize,
    state: &ParticleState,
    sim_box: &SimBox,
) -> Result<([f64; 2], f64), MdError> {
    let d = sim_box.displacement(state.positions[i], state.positions[j]);
    let r2 = d[0] * d[0] + d[1] * d[1];
    if r2 < COINCIDENT_TOL * COINCIDENT_TOL {
        return Err(MdError::Coincident { i, j, r: r2.sqrt() });
    }
    Ok(pair_force(d, r2, &pair_params(state.species[i], state.species[j])))
}

/// O(N²) reference over all pairs.
pub fn compute_forces_brute(state: &ParticleState, sim_box: &SimBox) -> Result<ForceResult, MdError> {
    let n = state.len();
    let mut forces = vec![[0.0; 2]; n];
    let mut potential = 0.0;
    for i in 0..n {
        for j in (i + 1)..n {
            let (f, v) = interact(i, j, state, sim_box)?;
            forces[i][0] += f[0];
            forces[i][1] += f[1];
            forces[j][0] -= f[0];
            forces[j][1] -= f[1];
            potential += v;
        }
    }
    Ok(ForceResult { forces, potential })
}

const HALF_SHELL: [(isize, isize); 4] = [(1, -1), (1, 0), (1, 1), (0, 1)];

/// Single-threaded cell-list forces; each pair is visited once and applied
/// to both particles.
pub fn compute_forces_serial(state: &ParticleState, sim_box: &SimBox) -> Result<ForceResult, MdError> {
    let Some(cells) = CellList::build(&state.positions, sim_box, max_cutoff()) else {
        return compute_forces_brute(state, sim_box);
    };
    let n = state.len();
    let mut forces = vec![[0.0; 2]; n];
    let mut potential = 0.0;
    let mut apply = |i: usize, j: usize, forces: &mut Vec<[f64; 2]>| -> Result<(), MdError> {
        let (f, v) = interact(i, j, state, sim_box)?;
        forces[i][0] += f[0];
        forces[i][1] += f[1];
        forces[j][0] -= f[0];
        forces[j][1] -= f[1];
        potential += v;
        Ok(())
    };
    for (key, own) in cells.occupied() {
        for a in own.clone() {
            for b in (a + 1)..own.end {
                apply(cells.order[a], cells.order[b], &mut forces)?;
            }
        }
        for (dx, dy) in HALF_SHELL {
            let other = cells.range(cells.neighbor(key, dx, dy));
            for a in own.clone() {
                for b in other.clone() {
                    apply(cells.order[a], cells.order[b], &mut forces)?;
                }
            }
        }
    }
    Ok(ForceResult { forces, potential })
}

/// Data-parallel cell-list forces. Each particle gathers from its full
/// 3×3 neighborhood in a fixed order, so the result does not depend on the
/// thread count. Pair forces are still exact negatives of each other.
pub fn compute_forces_parallel(state: &ParticleState, sim_box: &SimBox) -> Result<ForceResult, MdError> {
    let Some(cells) = CellList::build(&state.positions, sim_box, max_cutoff()) else {
        return compute_forces_brute(state, sim_box);
    };
    let n = state.len();
    let per_particle: Vec<Result<([f64; 2], f64), MdError>> = crate::par::map_range(n, |i| {
        let r = state.positions[i];
        let c = |x: f64| ((x / cells.edge) as usize).min(cells.n_cells - 1);
        let key = c(r[0]) * cells.n_cells + c(r[1]);
        let mut f = [0.0; 2];
        let mut e = 0.0;
        for dx in -1..=1 {
            for dy in -1..=1 {
                for b in cells.range(cells.neighbor(key, dx, dy)) {
                    let j = cells.order[b];
                    if j == i {
                        continue;
                    }
                    let (fij, v) = interact(i, j, state, sim_box)?;
                    f[0] += fij[0];
                    f[1] += fij[1];
                    e += 0.5 * v;
                }
            }
        }
        Ok((f, e))
    });
    let mut forces = Vec::with_capacity(n);
    let mut potential = 0.0;
    for r in per_particle {
        let (f, e) = r?;
        forces.push(f);
        potential += e;
    }
    Ok(ForceResult { forces, potential })
}

/// Cell-list forces, data-parallel when the `parallel` feature is enabled.
pub fn compute_forces(state: &ParticleState, sim_box: &SimBox) -> Result<ForceResult, MdError> {
    if crate::par::is_parallel() {
        compute_forces_parallel(state, sim_box)
    } else {
        compute_forces_serial(state, sim_box)
    }
}

/// One velocity-Verlet step: half kick, drift, force update, half kick.
/// `forces` must belong to `state` on entry and belongs to the new state on
/// return. Returns the new potential energy.
pub fn verlet_step(
    state: &mut ParticleState,
    forces: &mut ForceResult,
    cfg: &MDConfig,
    sim_box: &SimBox,
) -> Result<f64, MdError> {
    let dt = cfg.dt;
    let half_kick = |state: &mut ParticleState, forces: &ForceResult| {
        for ((v, f), s) in state.velocities.iter_mut().zip(&forces.forces).zip(&state.species) {
            let a = 0.5 * dt * ACCEL_PER_FORCE_MASS / s.mass();
            v[0] += a * f[0];
            v[1] += a * f[1];
        }
    };
    half_kick(state, forces);
    for ((r, u), v) in state.positions.iter_mut().zip(state.unwrapped.iter_mut()).zip(&state.velocities) {
        for a in 0..2 {
            r[a] = sim_box.wrap(r[a] + dt * v[a]);
            u[a] += dt * v[a];
        }
    }
    *forces = compute_forces(state, sim_box)?;
    half_kick(state, forces);
    state.time += dt;
    Ok(forces.potential)
}

fn check_speeds(state: &ParticleState, step: usize) -> Result<(), MdError> {
    for (i, v) in state.velocities.iter().enumerate() {
        let speed = (v[0] * v[0] + v[1] * v[1]).sqrt();
        if !(speed <= MAX_SPEED) {
            return Err(MdError::Unstable { step, particle: i, speed });
        }
    }
    Ok(())
}

/// Energies at one sampled frame, kcal/mol.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ThermoSample {
    pub step: usize,
    pub time_fs: f64,
    pub kinetic: f64,
    pub potential: f64,
}

impl ThermoSample {
    pub fn total(&self) -> f64 {
        self.kinetic + self.potential
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct MdRun {
    pub trajectory: Trajectory,
    pub thermo: Vec<ThermoSample>,
    pub final_state: ParticleState,
}

impl MdRun {
    /// Largest `|E_n - E_0| / |E_0|` over the sampled frames.
    pub fn relative_energy_drift(&self) -> f64 {
        let e0 = self.thermo[0].total();
        self.thermo
            .iter()
            .map(|t| (t.total() - e0).abs() / e0.abs())
            .fold(0.0, f64::max)
    }
}

/// Initializes and integrates for `n_steps`, recording a frame every
/// `cfg.sample_stride` steps (frame 0 included).
pub fn run(cfg: &MDConfig, sim_box: &SimBox, n_steps: usize) -> Result<MdRun, MdError> {
    let state = init_state(cfg, sim_box)?;
    run_from(state, cfg, sim_box, n_steps)
}

pub fn run_from(mut state: ParticleState, cfg: &MDConfig, sim_box: &SimBox, n_steps: usize) -> Result<MdRun, MdError> {
    cfg.validate()?;
    sim_box.check_cutoff(max_cutoff())?;
    let mut forces = compute_forces(&state, sim_box)?;
    let mut trajectory = Trajectory::new(*sim_box, cfg.dt, Some(cfg.seed), state.particle_info());
    let mut thermo = Vec::new();
    let record = |state: &ParticleState, step: usize, potential: f64, traj: &mut Trajectory, thermo: &mut Vec<ThermoSample>| {
        traj.frames.push(Frame {
            timestep: step as u64,
            time_fs: state.time,
            positions: state.unwrapped.clone(),
            velocities: state.velocities.clone(),
        });
        thermo.push(ThermoSample {
            step,
            time_fs: state.time,
            kinetic: state.kinetic_energy(),
            potential,
        });
    };
    record(&state, 0, forces.potential, &mut trajectory, &mut thermo);
    for step in 1..=n_steps {
        let potential = verlet_step(&mut state, &mut forces, cfg, sim_box)?;
        check_speeds(&state, step)?;
        if step % cfg.sample_stride == 0 {
            record(&state, step, potential, &mut trajectory, &mut thermo);
        }
    }
    Ok(MdRun {
        trajectory,
        thermo,
        final_state: state,
    })
}

/// Divisor applied to the MSD slope.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum MsdDivisor {
    /// `2d`, the Einstein relation in `d` dimensions.
    TwoDim,
    /// Literal 1/6, the three-dimensional factor.
    Six,
}

impl MsdDivisor {
    pub fn value(self, dim: usize) -> f64 {
        match self {
            MsdDivisor::TwoDim => 2.0 * dim as f64,
            MsdDivisor::Six => 6.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MsdEstimate {
    /// Å²/fs.
    pub diffusion: f64,
    /// Å²/fs.
    pub slope: f64,
    pub intercept: f64,
    pub r_squared: f64,
    /// Slope over the second half of the window divided by the first-half slope.
    pub slope_ratio: f64,
    pub n_points: usize,
    /// `(t_fs, msd Å²)` over the full trajectory.
    pub curve: Vec<(f64, f64)>,
}

impl MsdEstimate {
    /// A diffusive MSD is straight: high R² and matching half-window slopes.
    pub fn looks_linear(&self) -> bool {
        self.r_squared >= 0.99 && (self.slope_ratio - 1.0).abs() <= 0.2
    }

    pub fn diffusion_cm2_s(&self) -> f64 {
        crate::units::angstrom2_per_fs_to_cm2_per_s(self.diffusion)
    }
}

/// Mean squared displacement from frame 0 for one species, in Å².
pub fn msd_curve(traj: &Trajectory, species: Species) -> Vec<(f64, f64)> {
    let idx = traj.indices_of(species);
    let Some(first) = traj.frames.first() else {
        return Vec::new();
    };
    traj.frames
        .iter()
        .map(|f| {
            let sum: f64 = idx
                .iter()
                .map(|&i| {
                    let dx = f.positions[i][0] - first.positions[i][0];
                    let dy = f.positions[i][1] - first.positions[i][1];
                    dx * dx + dy * dy
                })
                .sum();
            (f.time_fs, if idx.is_empty() { 0.0 } else { sum / idx.len() as f64 })
        })
        .collect()
}

fn linear_fit(points: &[(f64, f64)]) -> (f64, f64, f64) {
    let n = points.len() as f64;
    let mx = points.iter().map(|p| p.0).sum::<f64>() / n;
    let my = points.iter().map(|p| p.1).sum::<f64>() / n;
    let sxx: f64 = points.iter().map(|p| (p.0 - mx).powi(2)).sum();
    let sxy: f64 = points.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    let syy: f64 = points.iter().map(|p| (p.1 - my).powi(2)).sum();
    let slope = if sxx > 0.0 { sxy / sxx } else { 0.0 };
    let intercept = my - slope * mx;
    let r2 = if syy > 0.0 { sxy * sxy / (sxx * syy) } else { 1.0 };
    (slope, intercept, r2)
}

/// Diffusion coefficient from the least-squares slope of the MSD over
/// frames with `t_lo <= t <= t_hi` (fs), divided by `divisor`.
pub fn msd_diffusion_estimate(
    traj: &Trajectory,
    species: Species,
    window: (f64, f64),
    divisor: MsdDivisor,
) -> Result<MsdEstimate, MdError> {
    if traj.count(species) == 0 {
        return Err(MdError::Msd(format!("no {species} particles")));
    }
    let curve = msd_curve(traj, species);
    let pts: Vec<(f64, f64)> = curve
        .iter()
        .copied()
        .filter(|(t, _)| *t >= window.0 && *t <= window.1)
        .collect();
    if pts.len() < 3 {
        return Err(MdError::Msd(format!(
            "window [{}, {}] fs holds {} frames, need at least 3",
            window.0,
            window.1,
            pts.len()
        )));
    }
    let (slope, intercept, r_squared) = linear_fit(&pts);
    let half = pts.len() / 2;
    let s1 = linear_fit(&pts[..=half]).0;
    let s2 = linear_fit(&pts[half..]).0;
    let slope_ratio = if s1 != 0.0 { s2 / s1 } else if s2 == 0.0 { 1.0 } else { f64::INFINITY };
    Ok(MsdEstimate {
        diffusion: slope / divisor.value(2),
        slope,
        intercept,
        r_squared,
        slope_ratio,
        n_points: pts.len(),
        curve,
    })
}
