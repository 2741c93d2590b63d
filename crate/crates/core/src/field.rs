//! Periodic grids and scalar fields on the unit cube.
//!
//! Values are stored row-major: for `d = 2` the cell `(j1, j2)` lives at
//! `j1 * n + j2`. Binning and the finite-difference solver both rely on this
//! layout, so it must not change.

use std::fmt::Write as _;
use std::io::{BufRead, Write};

use thiserror::Error;

#[derive(Debug, Error, PartialEq)]
pub enum FieldError {
    #[error("unsupported dimension {0} (only 1 and 2 are supported)")]
    Dimension(usize),
    #[error("grid needs at least 2 cells per side, got {0}")]
    TooFewCells(usize),
    #[error("field has {got} values, grid needs {expected}")]
    Length { expected: usize, got: usize },
    #[error("non-finite value at index {0}")]
    NonFinite(usize),
    #[error("grids differ: {0:?} vs {1:?}")]
    GridMismatch(GridSpec, GridSpec),
    #[error("line {line}: {msg}")]
    Csv { line: usize, msg: String },
}

/// Uniform periodic grid over `[0,1]^d` with `n` cells per side.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, serde::Serialize, serde::Deserialize)]
pub struct GridSpec {
    dim: usize,
    n: usize,
}

impl GridSpec {
    pub fn new(dim: usize, n: usize) -> Result<Self, FieldError> {
        if !(1..=2).contains(&dim) {
            return Err(FieldError::Dimension(dim));
        }
        if n < 2 {
            return Err(FieldError::TooFewCells(n));
        }
        Ok(Self { dim, n })
    }

    pub fn square(n: usize) -> Result<Self, FieldError> {
        Self::new(2, n)
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn n(&self) -> usize {
        self.n
    }

    /// Grid spacing `h = 1/n`.
    pub fn h(&self) -> f64 {
        1.0 / self.n as f64
    }

    pub fn len(&self) -> usize {
        self.n.pow(self.dim as u32)
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    /// Multi-index of a flat row-major index. Unused trailing axes are zero.
    pub fn unflatten(&self, idx: usize) -> [usize; 2] {
        match self.dim {
            1 => [idx, 0],
            _ => [idx / self.n, idx % self.n],
        }
    }

    pub fn flatten(&self, j: [usize; 2]) -> usize {
        match self.dim {
            1 => j[0],
            _ => j[0] * self.n + j[1],
        }
    }

    /// Cell-center coordinate `(j + 1/2) h` along one axis.
    pub fn center(&self, j: usize) -> f64 {
        (j as f64 + 0.5) * self.h()
    }
}

/// Concentration values on a [`GridSpec`], one time level.
#[derive(Debug, Clone, PartialEq)]
pub struct ScalarField {
    grid: GridSpec,
    values: Vec<f64>,
}

impl ScalarField {
    pub fn new(grid: GridSpec, values: Vec<f64>) -> Result<Self, FieldError> {
        if values.len() != grid.len() {
            return Err(FieldError::Length {
                expected: grid.len(),
                got: values.len(),
            });
        }
        if let Some(i) = values.iter().position(|v| !v.is_finite()) {
            return Err(FieldError::NonFinite(i));
        }
        Ok(Self { grid, values })
    }

    pub fn zeros(grid: GridSpec) -> Self {
        Self::constant(grid, 0.0)
    }

    pub fn constant(grid: GridSpec, c: f64) -> Self {
        Self {
            grid,
            values: vec![c; grid.len()],
        }
    }

    /// Builds a field by evaluating `f` at every multi-index.
    pub fn from_fn(grid: GridSpec, mut f: impl FnMut([usize; 2]) -> f64) -> Result<Self, FieldError> {
        let values = (0..grid.len()).map(|i| f(grid.unflatten(i))).collect();
        Self::new(grid, values)
    }

    /// Skips the finiteness scan; callers guarantee the invariant.
    pub(crate) fn from_raw(grid: GridSpec, values: Vec<f64>) -> Self {
        debug_assert_eq!(values.len(), grid.len());
        Self { grid, values }
    }

    pub fn grid(&self) -> GridSpec {
        self.grid
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn into_values(self) -> Vec<f64> {
        self.values
    }

    pub fn get(&self, j: [usize; 2]) -> f64 {
        self.values[self.grid.flatten(j)]
    }

    pub fn max_abs(&self) -> f64 {
        self.values.iter().fold(0.0f64, |m, v| m.max(v.abs()))
    }

    /// Largest pointwise difference to another field on the same grid.
    pub fn max_abs_diff(&self, other: &ScalarField) -> Result<f64, FieldError> {
        self.check_same_grid(other)?;
        Ok(self
            .values
            .iter()
            .zip(&other.values)
            .fold(0.0f64, |m, (a, b)| m.max((a - b).abs())))
    }

    pub(crate) fn check_same_grid(&self, other: &ScalarField) -> Result<(), FieldError> {
        if self.grid != other.grid {
            return Err(FieldError::GridMismatch(self.grid, other.grid));
        }
        Ok(())
    }

    /// Writes the field in the plain CSV layout: one header line
    /// `# N=<n> d=<d> t=<time>` followed by `n` rows (d=2) or one row (d=1).
    pub fn write_csv<W: Write>(&self, mut out: W, time: f64) -> std::io::Result<()> {
        writeln!(out, "# N={} d={} t={}", self.grid.n, self.grid.dim, time)?;
        let n = self.grid.n;
        let mut line = String::new();
        for row in self.values.chunks(n) {
            line.clear();
            for (i, v) in row.iter().enumerate() {
                if i > 0 {
                    line.push(',');
                }
                write!(line, "{v}").unwrap();
            }
            writeln!(out, "{line}")?;
        }
        Ok(())
    }

    /// Reads a field written by [`ScalarField::write_csv`]; returns the field and its time.
    pub fn read_csv<R: BufRead>(input: R) -> Result<(Self, f64), FieldError> {
        let mut lines = input.lines().enumerate();
        let (_, header) = lines
            .next()
            .ok_or_else(|| csv_err(1, "empty input"))?;
        let header = header.map_err(|e| csv_err(1, &e.to_string()))?;
        let (n, dim, time) = parse_header(&header)?;
        let grid = GridSpec::new(dim, n)?;
        let mut values = Vec::with_capacity(grid.len());
        for (i, line) in lines {
            let line = line.map_err(|e| csv_err(i + 1, &e.to_string()))?;
            let line = line.trim();
            if line.is_empty() {
                continue;
            }
            let row: Vec<f64> = line
                .split(',')
                .map(|s| s.trim().parse::<f64>())
                .collect::<Result<_, _>>()
                .map_err(|e| csv_err(i + 1, &format!("bad number: {e}")))?;
            if row.len() != n {
                return Err(csv_err(i + 1, &format!("expected {n} columns, got {}", row.len())));
            }
            values.extend(row);
        }
        Ok((Self::new(grid, values)?, time))
    }
}

fn csv_err(line: usize, msg: &str) -> FieldError {
    FieldError::Csv {
        line,
        msg: msg.to_string(),
    }
}

fn parse_header(header: &str) -> Result<(usize, usize, f64), FieldError> {
    let body = header
        .strip_prefix('#')
        .ok_or_else(|| csv_err(1, "header must start with '#'"))?;
    let (mut n, mut d, mut t) = (None, None, None);
    for tok in body.split_whitespace() {
        let (key, val) = tok
            .split_once('=')
            .ok_or_else(|| csv_err(1, &format!("malformed header token '{tok}'")))?;
        let bad = |_| csv_err(1, &format!("bad value for {key}"));
        match key {
            "N" => n = Some(val.parse::<usize>().map_err(|e| bad(e.to_string()))?),
            "d" => d = Some(val.parse::<usize>().map_err(|e| bad(e.to_string()))?),
            "t" => t = Some(val.parse::<f64>().map_err(|e| bad(e.to_string()))?),
            _ => {}
        }
    }
    match (n, d, t) {
        (Some(n), Some(d), Some(t)) => Ok((n, d, t)),
        _ => Err(csv_err(1, "header needs N, d and t")),
    }
}

/// Mean value over the grid, `(1/N^d) sum_j f_j`.
pub fn field_mass(f: &ScalarField) -> f64 {
    f.values.iter().sum::<f64>() / f.values.len() as f64
}

/// Discrete energy `sum_j |f_j|^2` (no grid-volume weighting).
pub fn field_energy(f: &ScalarField) -> f64 {
    f.values.iter().map(|v| v * v).sum()
}
