//! Trajectory storage: the native text format and a reader for LAMMPS text dumps.
//!
//! Native layout, one record per line:
//!
//! ```text
//! #format diffusion-traj 1
//! #units real
//! #box <side Å>
//! #dt <fs>
//! #seed <u64 or ->
//! #counts He=<n> Ar=<n>
//! #particles <n>
//! #has_velocities <true|false>
//! FRAME <timestep> <time_fs>
//! <id> <species> <x> <y> <vx> <vy>
//! ...
//! ```
//!
//! Positions are unwrapped (continuous across periodic boundaries); wrap
//! them with [`SimBox::wrap`] when the periodic image is needed. Floats are
//! printed in shortest round-trip form, so write→read is lossless.

use std::collections::HashMap;
use std::fmt::Write as _;
use std::path::Path;

use thiserror::Error;

use crate::md::{SimBox, Species};

#[derive(Debug, Error)]
pub enum TrajError {
    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
    #[error("line {line}: malformed header: {msg}")]
    MalformedHeader { line: usize, msg: String },
    #[error("line {line}: missing section '{section}'")]
    MissingSection { line: usize, section: String },
    #[error("line {line}: unsupported column layout: {msg}")]
    UnknownColumns { line: usize, msg: String },
    #[error("line {line}: non-numeric value '{value}' in column '{column}'")]
    NonNumeric { line: usize, column: String, value: String },
    #[error("line {line}: atom type {type_id} has no species mapping")]
    UnknownType { line: usize, type_id: u32 },
    #[error("line {line}: truncated frame, expected {expected} atom rows, found {found}")]
    Truncated { line: usize, expected: usize, found: usize },
    #[error("line {line}: particle count mismatch, expected {expected}, got {got}")]
    CountMismatch { line: usize, expected: usize, got: usize },
    #[error("line {line}: timestep {timestep} does not increase")]
    NonMonotonic { line: usize, timestep: u64 },
    #[error("line {line}: atom set differs from the first frame")]
    AtomMismatch { line: usize },
    #[error("line {line}: unsupported box: {msg}")]
    UnsupportedBox { line: usize, msg: String },
    #[error("line {line}: unexpected content '{content}'")]
    Unexpected { line: usize, content: String },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ParticleInfo {
    pub id: u64,
    pub species: Species,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Frame {
    pub timestep: u64,
    pub time_fs: f64,
    /// Unwrapped positions in Å, ordered like [`Trajectory::particles`].
    pub positions: Vec<[f64; 2]>,
    /// Å/fs; zeros when the source had none.
    pub velocities: Vec<[f64; 2]>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory {
    pub sim_box: SimBox,
    pub units: String,
    pub dt_fs: f64,
    pub seed: Option<u64>,
    pub has_velocities: bool,
    pub particles: Vec<ParticleInfo>,
    pub frames: Vec<Frame>,
}

impl Trajectory {
    pub fn new(sim_box: SimBox, dt_fs: f64, seed: Option<u64>, particles: Vec<ParticleInfo>) -> Self {
        Self {
            sim_box,
            units: "real".to_string(),
            dt_fs,
            seed,
            has_velocities: true,
            particles,
            frames: Vec::new(),
        }
    }

    pub fn count(&self, species: Species) -> usize {
        self.particles.iter().filter(|p| p.species == species).count()
    }

    /// Indices into the per-frame arrays of the particles of one species.
    pub fn indices_of(&self, species: Species) -> Vec<usize> {
        self.particles
            .iter()
            .enumerate()
            .filter(|(_, p)| p.species == species)
            .map(|(i, _)| i)
            .collect()
    }

    pub fn times_fs(&self) -> Vec<f64> {
        self.frames.iter().map(|f| f.time_fs).collect()
    }

    /// Checks the structural invariants: constant particle count, strictly
    /// increasing timesteps, finite coordinates.
    pub fn validate(&self) -> Result<(), TrajError> {
        let n = self.particles.len();
        let mut last: Option<u64> = None;
        for frame in &self.frames {
            if frame.positions.len() != n || frame.velocities.len() != n {
                return Err(TrajError::CountMismatch {
                    line: 0,
                    expected: n,
                    got: frame.positions.len(),
                });
            }
            if last.is_some_and(|t| frame.timestep <= t) {
                return Err(TrajError::NonMonotonic {
                    line: 0,
                    timestep: frame.timestep,
                });
            }
            last = Some(frame.timestep);
        }
        Ok(())
    }

    pub fn to_native_string(&self) -> String {
        let mut s = String::new();
        let n_he = self.count(Species::He);
        let n_ar = self.count(Species::Ar);
        writeln!(s, "#format diffusion-traj 1").unwrap();
        writeln!(s, "#units {}", self.units).unwrap();
        writeln!(s, "#box {}", self.sim_box.side()).unwrap();
        writeln!(s, "#dt {}", self.dt_fs).unwrap();
        match self.seed {
            Some(seed) => writeln!(s, "#seed {seed}").unwrap(),
            None => writeln!(s, "#seed -").unwrap(),
        }
        writeln!(s, "#counts He={n_he} Ar={n_ar}").unwrap();
        writeln!(s, "#particles {}", self.particles.len()).unwrap();
        writeln!(s, "#has_velocities {}", self.has_velocities).unwrap();
        for frame in &self.frames {
            writeln!(s, "FRAME {} {}", frame.timestep, frame.time_fs).unwrap();
            for ((p, r), v) in self.particles.iter().zip(&frame.positions).zip(&frame.velocities) {
                writeln!(s, "{} {} {} {} {} {}", p.id, p.species, r[0], r[1], v[0], v[1]).unwrap();
            }
        }
        s
    }

    pub fn from_native_str(text: &str) -> Result<Self, TrajError> {
        read_native_str(text)
    }
}

pub fn write_native(traj: &Trajectory, path: impl AsRef<Path>) -> Result<(), TrajError> {
    std::fs::write(path, traj.to_native_string())?;
    Ok(())
}

pub fn read_native(path: impl AsRef<Path>) -> Result<Trajectory, TrajError> {
    let bytes = std::fs::read(path)?;
    read_native_str(&String::from_utf8_lossy(&bytes))
}

fn header_err(line: usize, msg: impl Into<String>) -> TrajError {
    TrajError::MalformedHeader { line, msg: msg.into() }
}

fn num<T: std::str::FromStr>(tok: &str, line: usize, column: &str) -> Result<T, TrajError> {
    tok.parse::<T>().map_err(|_| TrajError::NonNumeric {
        line,
        column: column.to_string(),
        value: tok.to_string(),
    })
}

fn finite(x: f64, tok: &str, line: usize, column: &str) -> Result<f64, TrajError> {
    if x.is_finite() {
        Ok(x)
    } else {
        Err(TrajError::NonNumeric {
            line,
            column: column.to_string(),
            value: tok.to_string(),
        })
    }
}

pub fn read_native_str(text: &str) -> Result<Trajectory, TrajError> {
    let lines: Vec<&str> = text.lines().collect();
    let mut header: HashMap<&str, (usize, &str)> = HashMap::new();
    let mut pos = 0;
    while pos < lines.len() && lines[pos].starts_with('#') {
        let body = &lines[pos][1..];
        let (key, value) = body.split_once(' ').unwrap_or((body, ""));
        header.insert(key, (pos + 1, value.trim()));
        pos += 1;
    }
    let get = |key: &str| -> Result<(usize, &str), TrajError> {
        header
            .get(key)
            .copied()
            .ok_or_else(|| header_err(pos + 1, format!("missing #{key}")))
    };

    let (l, fmt) = get("format")?;
    if fmt != "diffusion-traj 1" {
        return Err(header_err(l, format!("unknown format '{fmt}'")));
    }
    let (_, units) = get("units")?;
    let (l, side) = get("box")?;
    let side: f64 = side.parse().map_err(|_| header_err(l, "bad #box"))?;
    let sim_box = SimBox::new(side).map_err(|e| header_err(l, e.to_string()))?;
    let (l, dt) = get("dt")?;
    let dt_fs: f64 = dt.parse().map_err(|_| header_err(l, "bad #dt"))?;
    let (l, seed) = get("seed")?;
    let seed = match seed {
        "-" => None,
        s => Some(s.parse::<u64>().map_err(|_| header_err(l, "bad #seed"))?),
    };
    let (l, counts) = get("counts")?;
    let mut expected_counts = [None, None];
    for tok in counts.split_whitespace() {
        let (name, n) = tok.split_once('=').ok_or_else(|| header_err(l, "bad #counts"))?;
        let species: Species = name.parse().map_err(|_| header_err(l, "bad #counts species"))?;
        let n: usize = n.parse().map_err(|_| header_err(l, "bad #counts value"))?;
        expected_counts[species as usize] = Some(n);
    }
    let (l, n_particles) = get("particles")?;
    let n_particles: usize = n_particles.parse().map_err(|_| header_err(l, "bad #particles"))?;
    let (l, hv) = get("has_velocities")?;
    let has_velocities: bool = hv.parse().map_err(|_| header_err(l, "bad #has_velocities"))?;

    let mut particles: Option<Vec<ParticleInfo>> = None;
    let mut frames = Vec::new();
    let mut last_step: Option<u64> = None;
    while pos < lines.len() {
        let line_no = pos + 1;
        let line = lines[pos].trim();
        pos += 1;
        if line.is_empty() {
            continue;
        }
        let mut toks = line.split_whitespace();
        if toks.next() != Some("FRAME") {
            return Err(TrajError::Unexpected {
                line: line_no,
                content: line.to_string(),
            });
        }
        let (Some(ts), Some(tf), None) = (toks.next(), toks.next(), toks.next()) else {
            return Err(TrajError::Unexpected {
                line: line_no,
                content: line.to_string(),
            });
        };
        let timestep: u64 = num(ts, line_no, "timestep")?;
        let time_fs: f64 = num(tf, line_no, "time_fs")?;
        if last_step.is_some_and(|t| timestep <= t) {
            return Err(TrajError::NonMonotonic { line: line_no, timestep });
        }
        last_step = Some(timestep);

        let mut info = Vec::with_capacity(n_particles.min(1 << 20));
        let mut positions = Vec::with_capacity(n_particles.min(1 << 20));
        let mut velocities = Vec::with_capacity(n_particles.min(1 << 20));
        for found in 0..n_particles {
            let row_no = pos + 1;
            let row = lines.get(pos).map(|s| s.trim()).unwrap_or("");
            if row.is_empty() || row.starts_with("FRAME") {
                return Err(TrajError::Truncated {
                    line: row_no,
                    expected: n_particles,
                    found,
                });
            }
            pos += 1;
            let cols: Vec<&str> = row.split_whitespace().collect();
            if cols.len() != 6 {
                return Err(TrajError::UnknownColumns {
                    line: row_no,
                    msg: format!("expected 6 columns, got {}", cols.len()),
                });
            }
            let id: u64 = num(cols[0], row_no, "id")?;
            let species: Species = cols[1].parse().map_err(|_| TrajError::NonNumeric {
                line: row_no,
                column: "species".into(),
                value: cols[1].into(),
            })?;
            let mut vals = [0.0; 4];
            for (k, name) in ["x", "y", "vx", "vy"].iter().enumerate() {
                vals[k] = finite(num(cols[k + 2], row_no, name)?, cols[k + 2], row_no, name)?;
            }
            info.push(ParticleInfo { id, species });
            positions.push([vals[0], vals[1]]);
            velocities.push([vals[2], vals[3]]);
        }
        match &particles {
            None => particles = Some(info),
            Some(first) if *first != info => return Err(TrajError::AtomMismatch { line: line_no }),
            Some(_) => {}
        }
        frames.push(Frame {
            timestep,
            time_fs,
            positions,
            velocities,
        });
    }

    let particles = match particles {
        Some(p) => p,
        None if n_particles == 0 => Vec::new(),
        // header-only file: particle identities are not recorded
        None => Vec::new(),
    };
    if !frames.is_empty() {
        for (species, expected) in [Species::He, Species::Ar].into_iter().zip(expected_counts) {
            let got = particles.iter().filter(|p| p.species == species).count();
            if let Some(expected) = expected {
                if expected != got {
                    return Err(TrajError::CountMismatch { line: l, expected, got });
                }
            }
        }
    }
    Ok(Trajectory {
        sim_box,
        units: units.to_string(),
        dt_fs,
        seed,
        has_velocities,
        particles,
        frames,
    })
}

/// Maps LAMMPS atom type ids to species.
#[derive(Debug, Clone, PartialEq)]
pub struct SpeciesMap(pub HashMap<u32, Species>);

impl Default for SpeciesMap {
    /// Type 1 is helium, type 2 argon.
    fn default() -> Self {
        Self(HashMap::from([(1, Species::He), (2, Species::Ar)]))
    }
}

impl SpeciesMap {
    pub fn get(&self, type_id: u32) -> Option<Species> {
        self.0.get(&type_id).copied()
    }

    pub fn type_of(&self, species: Species) -> Option<u32> {
        let mut ids: Vec<u32> = self.0.iter().filter(|(_, s)| **s == species).map(|(t, _)| *t).collect();
        ids.sort_unstable();
        ids.first().copied()
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
enum CoordKind {
    Plain,
    Scaled,
    Unwrapped,
    ScaledUnwrapped,
}

#[derive(Debug)]
struct Columns {
    id: usize,
    type_: usize,
    x: usize,
    y: usize,
    kind: CoordKind,
    v: Option<(usize, usize)>,
    width: usize,
}

fn parse_columns(names: &[&str], line: usize) -> Result<Columns, TrajError> {
    let find = |n: &str| names.iter().position(|c| *c == n);
    let err = |msg: &str| TrajError::UnknownColumns { line, msg: msg.to_string() };
    let id = find("id").ok_or_else(|| err("no 'id' column"))?;
    let type_ = find("type").ok_or_else(|| err("no 'type' column"))?;
    let (x, y, kind) = [
        ("x", "y", CoordKind::Plain),
        ("xu", "yu", CoordKind::Unwrapped),
        ("xs", "ys", CoordKind::Scaled),
        ("xsu", "ysu", CoordKind::ScaledUnwrapped),
    ]
    .iter()
    .find_map(|(a, b, k)| Some((find(a)?, find(b)?, *k)))
    .ok_or_else(|| err("no x/y, xu/yu, xs/ys or xsu/ysu coordinate pair"))?;
    let v = match (find("vx"), find("vy")) {
        (Some(a), Some(b)) => Some((a, b)),
        _ => None,
    };
    Ok(Columns {
        id,
        type_,
        x,
        y,
        kind,
        v,
        width: names.len(),
    })
}

/// Reads a LAMMPS text dump. Times are `timestep * 1 fs` (the `real` units
/// default); use [`Trajectory::set_dt`] when the run used another step.
pub fn parse_lammps_dump(path: impl AsRef<Path>, species_map: &SpeciesMap) -> Result<Trajectory, TrajError> {
    let bytes = std::fs::read(path)?;
    parse_lammps_dump_str(&String::from_utf8_lossy(&bytes), species_map)
}

struct DumpCursor<'a> {
    lines: Vec<&'a str>,
    pos: usize,
}

impl<'a> DumpCursor<'a> {
    fn line_no(&self) -> usize {
        self.pos + 1
    }

    fn peek(&self) -> Option<&'a str> {
        self.lines.get(self.pos).copied()
    }

    fn next_line(&mut self) -> Option<&'a str> {
        let l = self.peek()?;
        self.pos += 1;
        Some(l)
    }

    fn expect_item(&mut self, section: &str) -> Result<&'a str, TrajError> {
        match self.peek() {
            Some(l) if l.trim_start().starts_with(&format!("ITEM: {section}")) => {
                self.pos += 1;
                Ok(l.trim())
            }
            _ => Err(TrajError::MissingSection {
                line: self.line_no(),
                section: format!("ITEM: {section}"),
            }),
        }
    }

    fn value_line(&mut self, section: &str) -> Result<(usize, &'a str), TrajError> {
        let line = self.line_no();
        match self.next_line() {
            Some(l) if !l.trim_start().starts_with("ITEM:") => Ok((line, l.trim())),
            _ => Err(TrajError::MissingSection {
                line,
                section: format!("{section} value"),
            }),
        }
    }
}

pub fn parse_lammps_dump_str(text: &str, species_map: &SpeciesMap) -> Result<Trajectory, TrajError> {
    let mut cur = DumpCursor {
        lines: text.lines().collect(),
        pos: 0,
    };
    let mut frames: Vec<Frame> = Vec::new();
    let mut particles: Option<Vec<ParticleInfo>> = None;
    let mut side: Option<f64> = None;
    let mut any_velocities = false;
    let mut all_velocities = true;
    let mut wrapped_input = false;

    loop {
        while cur.peek().is_some_and(|l| l.trim().is_empty()) {
            cur.pos += 1;
        }
        if cur.peek().is_none() {
            break;
        }
        cur.expect_item("TIMESTEP")?;
        let (l, ts) = cur.value_line("TIMESTEP")?;
        let timestep: u64 = num(ts, l, "timestep")?;
        if frames.last().is_some_and(|f| timestep <= f.timestep) {
            return Err(TrajError::NonMonotonic { line: l, timestep });
        }

        cur.expect_item("NUMBER OF ATOMS")?;
        let (l, na) = cur.value_line("NUMBER OF ATOMS")?;
        let n_atoms: usize = num(na, l, "number of atoms")?;

        let bounds_line = cur.line_no();
        let bounds_header = cur.expect_item("BOX BOUNDS")?;
        if bounds_header.split_whitespace().any(|t| t == "xy" || t == "xz" || t == "yz") {
            return Err(TrajError::UnsupportedBox {
                line: bounds_line,
                msg: "triclinic boxes are not supported".into(),
            });
        }
        let mut extents = Vec::new();
        while cur.peek().is_some_and(|l| !l.trim_start().starts_with("ITEM:")) {
            let l = cur.line_no();
            let row = cur.next_line().unwrap_or("");
            let toks: Vec<&str> = row.split_whitespace().collect();
            if toks.len() != 2 {
                return Err(TrajError::UnsupportedBox {
                    line: l,
                    msg: format!("expected 'lo hi', got '{}'", row.trim()),
                });
            }
            let lo = finite(num(toks[0], l, "box lo")?, toks[0], l, "box lo")?;
            let hi = finite(num(toks[1], l, "box hi")?, toks[1], l, "box hi")?;
            extents.push((lo, hi));
        }
        if extents.len() < 2 {
            return Err(TrajError::UnsupportedBox {
                line: bounds_line,
                msg: format!("expected at least 2 bound lines, got {}", extents.len()),
            });
        }
        let (xlo, xhi) = extents[0];
        let (ylo, yhi) = extents[1];
        let (wx, wy) = (xhi - xlo, yhi - ylo);
        if !(wx > 0.0) || (wx - wy).abs() > 1e-9 * wx.abs() {
            return Err(TrajError::UnsupportedBox {
                line: bounds_line,
                msg: format!("box must be square with positive extent, got {wx} x {wy}"),
            });
        }
        if side.is_some_and(|s| (s - wx).abs() > 1e-9 * s) {
            return Err(TrajError::UnsupportedBox {
                line: bounds_line,
                msg: "box size changes between frames".into(),
            });
        }
        side = Some(wx);

        let atoms_line = cur.line_no();
        let atoms_header = cur.expect_item("ATOMS")?;
        let names: Vec<&str> = atoms_header.split_whitespace().skip(2).collect();
        let cols = parse_columns(&names, atoms_line)?;
        if cols.v.is_some() {
            any_velocities = true;
        } else {
            all_velocities = false;
        }
        if matches!(cols.kind, CoordKind::Plain | CoordKind::Scaled) {
            wrapped_input = true;
        }

        let mut rows: Vec<(u64, Species, [f64; 2], [f64; 2])> = Vec::with_capacity(n_atoms.min(1 << 20));
        for found in 0..n_atoms {
            let l = cur.line_no();
            let row = match cur.peek() {
                Some(r) if !r.trim().is_empty() && !r.trim_start().starts_with("ITEM:") => r,
                _ => {
                    return Err(TrajError::Truncated {
                        line: l,
                        expected: n_atoms,
                        found,
                    })
                }
            };
            cur.pos += 1;
            let toks: Vec<&str> = row.split_whitespace().collect();
            if toks.len() != cols.width {
                return Err(TrajError::UnknownColumns {
                    line: l,
                    msg: format!("header names {} columns, row has {}", cols.width, toks.len()),
                });
            }
            let id: u64 = num(toks[cols.id], l, "id")?;
            let type_id: u32 = num(toks[cols.type_], l, "type")?;
            let species = species_map.get(type_id).ok_or(TrajError::UnknownType { line: l, type_id })?;
            let x = finite(num(toks[cols.x], l, names[cols.x])?, toks[cols.x], l, names[cols.x])?;
            let y = finite(num(toks[cols.y], l, names[cols.y])?, toks[cols.y], l, names[cols.y])?;
            let r = match cols.kind {
                CoordKind::Scaled | CoordKind::ScaledUnwrapped => [x * wx, y * wy],
                CoordKind::Plain | CoordKind::Unwrapped => [x - xlo, y - ylo],
            };
            let v = match cols.v {
                Some((a, b)) => [
                    finite(num(toks[a], l, "vx")?, toks[a], l, "vx")?,
                    finite(num(toks[b], l, "vy")?, toks[b], l, "vy")?,
                ],
                None => [0.0, 0.0],
            };
            rows.push((id, species, r, v));
        }
        rows.sort_by_key(|r| r.0);
        if rows.windows(2).any(|w| w[0].0 == w[1].0) {
            return Err(TrajError::AtomMismatch { line: atoms_line });
        }
        let info: Vec<ParticleInfo> = rows.iter().map(|r| ParticleInfo { id: r.0, species: r.1 }).collect();
        match &particles {
            None => particles = Some(info),
            Some(first) if first.len() != info.len() => {
                return Err(TrajError::CountMismatch {
                    line: atoms_line,
                    expected: first.len(),
                    got: info.len(),
                })
            }
            Some(first) if *first != info => return Err(TrajError::AtomMismatch { line: atoms_line }),
            Some(_) => {}
        }
        frames.push(Frame {
            timestep,
            time_fs: timestep as f64,
            positions: rows.iter().map(|r| r.2).collect(),
            velocities: rows.iter().map(|r| r.3).collect(),
        });
    }

    let Some(side) = side else {
        return Err(TrajError::MissingSection {
            line: 1,
            section: "ITEM: TIMESTEP".into(),
        });
    };
    let sim_box = SimBox::new(side).map_err(|e| TrajError::UnsupportedBox { line: 1, msg: e.to_string() })?;
    if wrapped_input {
        unwrap_frames(&mut frames, &sim_box);
    }
    Ok(Trajectory {
        sim_box,
        units: "real".into(),
        dt_fs: 1.0,
        seed: None,
        has_velocities: any_velocities && all_velocities,
        particles: particles.unwrap_or_default(),
        frames,
    })
}

/// Rebuilds continuous paths from wrapped coordinates by taking the
/// minimum-image displacement between consecutive frames. Valid when no
/// particle moves more than half a box between frames.
pub fn unwrap_frames(frames: &mut [Frame], sim_box: &SimBox) {
    for i in 1..frames.len() {
        let (prev, rest) = frames.split_at_mut(i);
        let prev = &prev[i - 1];
        let cur = &mut rest[0];
        for (p, c) in prev.positions.iter().zip(cur.positions.iter_mut()) {
            for a in 0..2 {
                let d = sim_box.minimum_image(c[a] - p[a]);
                c[a] = p[a] + d;
            }
        }
    }
}

impl Trajectory {
    /// Sets the MD step and recomputes frame times as `timestep * dt`.
    pub fn set_dt(&mut self, dt_fs: f64) {
        self.dt_fs = dt_fs;
        for f in &mut self.frames {
            f.time_fs = f.timestep as f64 * dt_fs;
        }
    }

    /// Renders the trajectory as a LAMMPS text dump with wrapped `x y` columns.
    pub fn to_lammps_dump(&self, species_map: &SpeciesMap) -> String {
        let mut s = String::new();
        let side = self.sim_box.side();
        for f in &self.frames {
            writeln!(s, "ITEM: TIMESTEP\n{}", f.timestep).unwrap();
            writeln!(s, "ITEM: NUMBER OF ATOMS\n{}", self.particles.len()).unwrap();
            writeln!(s, "ITEM: BOX BOUNDS pp pp pp\n0 {side}\n0 {side}\n-0.5 0.5").unwrap();
            if self.has_velocities {
                writeln!(s, "ITEM: ATOMS id type x y z vx vy vz").unwrap();
            } else {
                writeln!(s, "ITEM: ATOMS id type x y z").unwrap();
            }
            for ((p, r), v) in self.particles.iter().zip(&f.positions).zip(&f.velocities) {
                let t = species_map.type_of(p.species).unwrap_or(0);
                let w = self.sim_box.wrap_point(*r);
                if self.has_velocities {
                    writeln!(s, "{} {} {} {} 0 {} {} 0", p.id, t, w[0], w[1], v[0], v[1]).unwrap();
                } else {
                    writeln!(s, "{} {} {} {} 0", p.id, t, w[0], w[1]).unwrap();
                }
            }
        }
        s
    }
}
