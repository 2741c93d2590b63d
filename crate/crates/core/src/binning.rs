//! Particle positions to concentration fields on the finite-difference grid.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::fdsolver::FieldSeries;
use crate::field::{GridSpec, ScalarField};
use crate::md::{SimBox, Species};
use crate::trajio::Trajectory;
use crate::units::UnitScale;

#[derive(Debug, Error, PartialEq)]
pub enum BinError {
    #[error("binning requires a 2D grid")]
    Dimension,
    #[error("series has no frames")]
    Empty,
    #[error("every count is zero; nothing to normalize")]
    AllZero,
    #[error("frame count mismatch: binned series has {binned}, FD series has {fd}")]
    FrameCount { binned: usize, fd: usize },
    #[error("frame {index}: MD time {md} and FD time {fd} differ by more than {tol}")]
    TimeMismatch { index: usize, md: f64, fd: f64, tol: f64 },
    #[error("frames have different grids")]
    GridMismatch,
}

/// Scope of the maximum used to scale counts into `[0, 1]`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
pub enum Normalization {
    /// One maximum over every frame and cell.
    #[default]
    Global,
    /// Each frame scaled by its own maximum.
    PerFrame,
}

#[derive(Debug, Clone, PartialEq)]
pub struct BinnedFrame {
    pub time_fs: f64,
    pub counts: Vec<u32>,
    pub u: ScalarField,
}

#[derive(Debug, Clone, PartialEq)]
pub struct BinnedSeries {
    pub grid: GridSpec,
    pub frames: Vec<BinnedFrame>,
    /// Largest count over the whole series.
    pub normalization_max: u32,
    pub normalization: Normalization,
}

impl BinnedSeries {
    pub fn times_fs(&self) -> Vec<f64> {
        self.frames.iter().map(|f| f.time_fs).collect()
    }

    pub fn fields(&self) -> Vec<ScalarField> {
        self.frames.iter().map(|f| f.u.clone()).collect()
    }
}

/// Cell of a coordinate: `floor(N x / side)` after wrapping, so `x = side`
/// lands in cell 0 and boundary points go to the higher cell.
#[inline]
pub fn cell_index(x: f64, sim_box: &SimBox, n: usize) -> usize {
    let w = sim_box.wrap(x);
    ((n as f64 * w / sim_box.side()).floor() as usize) % n
}

/// Counts the listed particles per cell, row-major like [`ScalarField`].
pub fn bin_counts(positions: &[[f64; 2]], selected: &[usize], sim_box: &SimBox, grid: GridSpec) -> Result<Vec<u32>, BinError> {
    if grid.dim() != 2 {
        return Err(BinError::Dimension);
    }
    let n = grid.n();
    let mut counts = vec![0u32; grid.len()];
    for &i in selected {
        let r = positions[i];
        counts[cell_index(r[0], sim_box, n) * n + cell_index(r[1], sim_box, n)] += 1;
    }
    Ok(counts)
}

/// Scales count frames into `[0, 1]`.
pub fn normalize_series(
    grid: GridSpec,
    frames: Vec<(f64, Vec<u32>)>,
    normalization: Normalization,
) -> Result<BinnedSeries, BinError> {
    if frames.is_empty() {
        return Err(BinError::Empty);
    }
    if frames.iter().any(|(_, c)| c.len() != grid.len()) {
        return Err(BinError::GridMismatch);
    }
    let global = frames
        .iter()
        .flat_map(|(_, c)| c.iter().copied())
        .max()
        .unwrap_or(0);
    if global == 0 {
        return Err(BinError::AllZero);
    }
    let frames = frames
        .into_iter()
        .map(|(time_fs, counts)| {
            let m = match normalization {
                Normalization::Global => global,
                Normalization::PerFrame => counts.iter().copied().max().unwrap_or(0).max(1),
            } as f64;
            let u = ScalarField::from_raw(grid, counts.iter().map(|&c| c as f64 / m).collect());
            BinnedFrame { time_fs, counts, u }
        })
        .collect();
    Ok(BinnedSeries {
        grid,
        frames,
        normalization_max: global,
        normalization,
    })
}

/// Bins every frame of a trajectory for one species, frames in parallel.
pub fn bin_trajectory(
    traj: &Trajectory,
    species: Species,
    grid: GridSpec,
    normalization: Normalization,
) -> Result<BinnedSeries, BinError> {
    let selected = traj.indices_of(species);
    let counts: Vec<Result<(f64, Vec<u32>), BinError>> = crate::par::map_slice(&traj.frames, |f| {
        Ok((f.time_fs, bin_counts(&f.positions, &selected, &traj.sim_box, grid)?))
    });
    normalize_series(grid, counts.into_iter().collect::<Result<_, _>>()?, normalization)
}

/// One MD/FD frame pair: binned frame `index` against FD frame `index`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AlignedPair {
    pub index: usize,
    pub md_time: f64,
    pub fd_time: f64,
}

/// Pairs binned frames with FD frames one-to-one after converting MD times
/// to nondimensional time; times must agree within half an FD step.
pub fn align_series(binned: &BinnedSeries, fd: &FieldSeries, scale: &UnitScale) -> Result<Vec<AlignedPair>, BinError> {
    align_times(&binned.times_fs(), &fd.times(), fd.config.k, scale)
}

pub fn align_times(md_times_fs: &[f64], fd_times: &[f64], fd_step: f64, scale: &UnitScale) -> Result<Vec<AlignedPair>, BinError> {
    if md_times_fs.len() != fd_times.len() {
        return Err(BinError::FrameCount {
            binned: md_times_fs.len(),
            fd: fd_times.len(),
        });
    }
    let t0 = md_times_fs.first().copied().unwrap_or(0.0);
    let tol = 0.5 * fd_step;
    md_times_fs
        .iter()
        .zip(fd_times)
        .enumerate()
        .map(|(index, (&md, &fd))| {
            let md_time = scale.fs_to_nd_time(md - t0);
            if (md_time - fd).abs() > tol {
                Err(BinError::TimeMismatch {
                    index,
                    md: md_time,
                    fd,
                    tol,
                })
            } else {
                Ok(AlignedPair {
                    index,
                    md_time,
                    fd_time: fd,
                })
            }
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sbox() -> SimBox {
        SimBox::new(1000.0).unwrap()
    }

    #[test]
    fn single_particle() {
        let g = GridSpec::square(2).unwrap();
        let c = bin_counts(&[[300.0, 300.0]], &[0], &sbox(), g).unwrap();
        assert_eq!(c, vec![1, 0, 0, 0]);
    }

    #[test]
    fn one_per_cell_center() {
        let g = GridSpec::square(5).unwrap();
        let pos: Vec<[f64; 2]> = (0..25)
            .map(|i| [(i / 5) as f64 * 200.0 + 100.0, (i % 5) as f64 * 200.0 + 100.0])
            .collect();
        let idx: Vec<usize> = (0..25).collect();
        assert_eq!(bin_counts(&pos, &idx, &sbox(), g).unwrap(), vec![1; 25]);
    }

    #[test]
    fn edges_and_filter() {
        let g = GridSpec::square(4).unwrap();
        let pos = [[1000.0, 0.0], [250.0, 250.0], [-1.0, 1250.0], [10.0, 10.0]];
        let c = bin_counts(&pos, &[0, 1, 2], &sbox(), g).unwrap();
        assert_eq!(c[0], 1);
        assert_eq!(c[4 + 1], 1);
        assert_eq!(c[3 * 4 + 1], 1);
        assert_eq!(c.iter().sum::<u32>(), 3);
        assert!(bin_counts(&pos, &[0], &sbox(), GridSpec::new(1, 4).unwrap()).is_err());
    }

    #[test]
    fn global_normalization() {
        let g = GridSpec::square(2).unwrap();
        let s = normalize_series(g, vec![(0.0, vec![10, 2, 0, 1]), (5.0, vec![4, 3, 1, 0])], Normalization::Global).unwrap();
        assert_eq!(s.normalization_max, 10);
        assert_eq!(s.frames[0].u.max_abs(), 1.0);
        assert_eq!(s.frames[1].u.max_abs(), 0.4);

        let p = normalize_series(g, vec![(0.0, vec![10, 2, 0, 1]), (5.0, vec![4, 3, 1, 0])], Normalization::PerFrame).unwrap();
        assert_eq!(p.frames[1].u.max_abs(), 1.0);

        let single = normalize_series(g, vec![(0.0, vec![8, 1, 0, 2])], Normalization::Global).unwrap();
        assert_eq!(single.frames[0].u.get([0, 0]), 1.0);
    }

    #[test]
    fn normalization_errors() {
        let g = GridSpec::square(2).unwrap();
        assert_eq!(normalize_series(g, vec![(0.0, vec![0; 4])], Normalization::Global), Err(BinError::AllZero));
        assert_eq!(normalize_series(g, vec![], Normalization::Global), Err(BinError::Empty));
        assert_eq!(normalize_series(g, vec![(0.0, vec![1; 3])], Normalization::Global), Err(BinError::GridMismatch));
    }

    #[test]
    fn alignment() {
        let scale = UnitScale::default();
        // stride 1000 x 5 fs = 5 ps = 5e-3 ns
        let md: Vec<f64> = (0..4).map(|i| i as f64 * 5000.0).collect();
        let fd: Vec<f64> = (0..4).map(|i| i as f64 * 5e-3).collect();
        let pairs = align_times(&md, &fd, 5e-3, &scale).unwrap();
        assert_eq!(pairs.len(), 4);
        assert!(pairs.iter().all(|p| (p.md_time - p.fd_time).abs() < 1e-15));

        assert_eq!(
            align_times(&md, &fd[..3], 5e-3, &scale),
            Err(BinError::FrameCount { binned: 4, fd: 3 })
        );
        assert_eq!(align_times(&[0.0], &[0.0], 1.0, &scale).unwrap().len(), 1);
        let fd_slow: Vec<f64> = (0..4).map(|i| i as f64 * 1e-2).collect();
        assert!(matches!(align_times(&md, &fd_slow, 5e-3, &scale), Err(BinError::TimeMismatch { index: 1, .. })));
    }
}
