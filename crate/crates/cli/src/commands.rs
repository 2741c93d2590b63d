use std::path::{Path, PathBuf};
use std::time::Instant;

use diffusion_core::analytic::PatchSeries;
use diffusion_core::binning::{bin_trajectory, BinnedFrame, BinnedSeries, Normalization};
use diffusion_core::estimator::{lm_fit, FdInit, FitConfig, FitError, FitProblem, FitResult};
use diffusion_core::fdsolver::{amplification_curve, critical_time_step, make_patch_initial, solve, FdError, SchemeKind, SolverConfig};
use diffusion_core::md::{self, MDConfig, MdError, MsdDivisor, SimBox, Species};
use diffusion_core::pipeline::{self, PipelineError, Preset, Report, ScalePreset, SeedRun};
use diffusion_core::trajio::{self, SpeciesMap, TrajError, Trajectory};
use diffusion_core::{GridSpec, ScalarField, UnitScale};
use log::info;
use serde::{Deserialize, Serialize};
use serde_json::json;

use crate::config::{ConfigFile, List};
use crate::manifest::{self, write_json, write_text, RunManifest};
use crate::svg::render_heatmap;
use crate::{AmpPlotArgs, BinArgs, CliError, ConvertArgs, CostCurveArgs, FdRunArgs, FitArgs, HeatmapArgs, MdRunArgs, MsdArgs, ProblemArgs, ReproduceArgs, TrajInput};

fn md_err(e: MdError) -> CliError {
    match e {
        MdError::Unstable { .. } => CliError::Unstable(e.to_string()),
        MdError::Config(_) => CliError::Usage(e.to_string()),
        _ => CliError::Input(e.to_string()),
    }
}

fn fd_err(e: FdError) -> CliError {
    match e {
        FdError::Unstable { .. } => CliError::Unstable(e.to_string()),
        FdError::Config(_) | FdError::ZeroStride => CliError::Usage(e.to_string()),
        _ => CliError::Input(e.to_string()),
    }
}

fn fit_err(e: FitError) -> CliError {
    match e {
        FitError::Solver(fe) => fd_err(fe),
        FitError::NonFiniteCost { .. } => CliError::Unstable(e.to_string()),
        FitError::Config(_) => CliError::Usage(e.to_string()),
        _ => CliError::Input(e.to_string()),
    }
}

fn traj_err(e: TrajError) -> CliError {
    CliError::Input(e.to_string())
}

fn pipeline_err(e: PipelineError) -> CliError {
    if e.unstable {
        CliError::Unstable(e.to_string())
    } else {
        CliError::Input(e.to_string())
    }
}

fn usage<T, E: std::fmt::Display>(r: Result<T, E>) -> Result<T, CliError> {
    r.map_err(|e| CliError::Usage(e.to_string()))
}

fn mkdir(dir: &Path) -> Result<(), CliError> {
    std::fs::create_dir_all(dir).map_err(|e| CliError::io(dir, e))
}

fn field_csv(field: &ScalarField, t: f64) -> String {
    let mut buf = Vec::new();
    field.write_csv(&mut buf, t).expect("writing to memory");
    String::from_utf8(buf).expect("field CSV is ASCII")
}

fn read_field(path: &Path) -> Result<(ScalarField, f64), CliError> {
    let file = std::fs::File::open(path).map_err(|e| CliError::io(path, e))?;
    ScalarField::read_csv(std::io::BufReader::new(file)).map_err(|e| CliError::Input(format!("{}: {e}", path.display())))
}

fn finish(mut m: RunManifest, start: Instant, path: &Path) -> Result<(), CliError> {
    m.wall_time_s = start.elapsed().as_secs_f64();
    m.write(path)
}

pub fn load_trajectory(input: &TrajInput) -> Result<Trajectory, CliError> {
    let bytes = std::fs::read(&input.traj).map_err(|e| CliError::io(&input.traj, e))?;
    let text = String::from_utf8_lossy(&bytes);
    let first = text.lines().find(|l| !l.trim().is_empty()).unwrap_or("");
    if first.starts_with("#format") {
        trajio::read_native_str(&text).map_err(traj_err)
    } else {
        if !(input.lammps_dt > 0.0) {
            return Err(CliError::Usage("--lammps-dt must be positive".into()));
        }
        let mut t = trajio::parse_lammps_dump_str(&text, &SpeciesMap::default()).map_err(traj_err)?;
        t.set_dt(input.lammps_dt);
        Ok(t)
    }
}

pub fn md_run(a: &MdRunArgs, cfg: &ConfigFile) -> Result<(), CliError> {
    let start = Instant::now();
    let preset = Preset::for_scale(usage(a.preset.parse::<ScalePreset>())?);
    let md_cfg = MDConfig {
        n_he: cfg.pick(a.n_he, "n_he", preset.md.n_he)?,
        n_ar: cfg.pick(a.n_ar, "n_ar", preset.md.n_ar)?,
        dt: cfg.pick(a.dt, "dt", preset.md.dt)?,
        temperature: cfg.pick(a.temp, "temp", preset.md.temperature)?,
        seed: cfg.pick(a.seed, "seed", preset.md.seed)?,
        sample_stride: cfg.pick(a.stride, "stride", preset.md.sample_stride)?,
        ..preset.md
    };
    let side = cfg.pick(a.box_side, "box", preset.box_side)?;
    let steps = cfg.pick(a.steps, "steps", preset.n_steps)?;
    let sim_box = SimBox::new(side).map_err(md_err)?;
    info!("md-run: {} He + {} Ar, box {side} Å, {steps} steps", md_cfg.n_he, md_cfg.n_ar);
    let run = md::run(&md_cfg, &sim_box, steps).map_err(md_err)?;
    trajio::write_native(&run.trajectory, &a.out).map_err(traj_err)?;

    let mut m = RunManifest::new("md-run", json!({ "md": md_cfg, "box_angstrom": side, "steps": steps }));
    m.seed = Some(md_cfg.seed);
    m.output(&a.out);
    m.summary = json!({
        "frames": run.trajectory.frames.len(),
        "relative_energy_drift": run.relative_energy_drift(),
        "thermo": run.thermo,
    });
    finish(m, start, &manifest::beside(&a.out))
}

#[derive(Serialize)]
struct SeriesManifest {
    n: usize,
    dim: usize,
    k: f64,
    diffusivity: f64,
    scheme: SchemeKind,
    steps: usize,
    stride: usize,
    frame_times: Vec<f64>,
    frame_files: Vec<String>,
    oracle: Option<OracleSummary>,
}

#[derive(Serialize)]
struct OracleSummary {
    modes: usize,
    files: Vec<String>,
    l2_errors: Vec<f64>,
    max_errors: Vec<f64>,
}

pub fn fd_run(a: &FdRunArgs, cfg: &ConfigFile) -> Result<(), CliError> {
    let start = Instant::now();
    let n = cfg.pick(a.n, "n", 64)?;
    let d = cfg.pick(a.d, "d", 3.18e-3)?;
    let k = cfg.pick(a.k, "k", 1e-4)?;
    let steps = cfg.pick(a.steps, "steps", 500)?;
    let stride = cfg.pick(a.stride, "stride", 100)?;
    let scheme: SchemeKind = usage(cfg.pick(a.scheme.clone(), "scheme", "cn".to_string())?.parse())?;
    let grid = GridSpec::square(n).map_err(|e| CliError::Usage(e.to_string()))?;
    let config = SolverConfig::new(grid, k, d, scheme, steps).map_err(fd_err)?;
    info!("fd-run: N={n} D={d} k={k} (k_c={:.3e}) {scheme:?}", critical_time_step(grid, d));
    let series = solve(&make_patch_initial(grid).map_err(fd_err)?, &config, stride).map_err(fd_err)?;
    let times = series.times();

    mkdir(&a.out)?;
    let mut m = RunManifest::new("fd-run", json!({ "solver": config, "stride": stride, "oracle": a.oracle }));
    let mut frame_files = Vec::new();
    for (i, (f, t)) in series.frames.iter().zip(&times).enumerate() {
        let name = format!("frame_{i:04}.csv");
        write_text(&a.out.join(&name), &field_csv(f, *t))?;
        if a.svg {
            write_text(&a.out.join(format!("frame_{i:04}.svg")), &render_heatmap(f, 8))?;
        }
        frame_files.push(name);
    }
    let oracle = a.oracle.then(|| {
        let s = PatchSeries::new(a.oracle_modes);
        let mut o = OracleSummary {
            modes: a.oracle_modes,
            files: Vec::new(),
            l2_errors: Vec::new(),
            max_errors: Vec::new(),
        };
        let h = grid.h();
        for (i, (f, t)) in series.frames.iter().zip(&times).enumerate() {
            let exact = s.on_grid(grid, *t, d);
            let sq: f64 = f.values().iter().zip(exact.values()).map(|(x, y)| (x - y) * (x - y)).sum();
            o.l2_errors.push((sq * h * h).sqrt());
            o.max_errors.push(f.max_abs_diff(&exact).unwrap_or(f64::NAN));
            let name = format!("oracle_{i:04}.csv");
            o.files.push(name.clone());
            let _ = write_text(&a.out.join(&name), &field_csv(&exact, *t));
        }
        o
    });
    let sm = SeriesManifest {
        n,
        dim: 2,
        k,
        diffusivity: d,
        scheme,
        steps,
        stride,
        frame_times: times,
        frame_files,
        oracle,
    };
    write_json(&a.out.join("series.json"), &sm)?;
    for f in sm.frame_files.iter().chain(sm.oracle.iter().flat_map(|o| o.files.iter())) {
        m.output(&a.out.join(f));
    }
    m.output(&a.out.join("series.json"));
    finish(m, start, &manifest::in_dir(&a.out))
}

#[derive(Serialize, Deserialize)]
pub struct BinnedManifest {
    pub n: usize,
    pub species: String,
    pub normalization: Normalization,
    pub normalization_max: u32,
    pub box_side_angstrom: f64,
    pub frame_times_fs: Vec<f64>,
    pub counts_files: Vec<String>,
    pub u_files: Vec<String>,
}

/// Writes counts and U CSVs plus `binned.json`; returns the files written.
pub fn write_binned(dir: &Path, series: &BinnedSeries, species: Species, box_side: f64, svg: bool) -> Result<Vec<PathBuf>, CliError> {
    mkdir(dir)?;
    let mut written = Vec::new();
    let mut bm = BinnedManifest {
        n: series.grid.n(),
        species: species.to_string(),
        normalization: series.normalization,
        normalization_max: series.normalization_max,
        box_side_angstrom: box_side,
        frame_times_fs: series.times_fs(),
        counts_files: Vec::new(),
        u_files: Vec::new(),
    };
    for (i, f) in series.frames.iter().enumerate() {
        let counts = ScalarField::new(series.grid, f.counts.iter().map(|&c| c as f64).collect()).expect("counts are finite");
        let cname = format!("counts_{i:04}.csv");
        let uname = format!("u_{i:04}.csv");
        write_text(&dir.join(&cname), &field_csv(&counts, f.time_fs))?;
        write_text(&dir.join(&uname), &field_csv(&f.u, f.time_fs))?;
        if svg {
            let p = dir.join(format!("u_{i:04}.svg"));
            write_text(&p, &render_heatmap(&f.u, 8))?;
            written.push(p);
        }
        written.push(dir.join(&cname));
        written.push(dir.join(&uname));
        bm.counts_files.push(cname);
        bm.u_files.push(uname);
    }
    write_json(&dir.join("binned.json"), &bm)?;
    written.push(dir.join("binned.json"));
    Ok(written)
}

pub fn read_binned(dir: &Path) -> Result<(BinnedSeries, BinnedManifest), CliError> {
    let path = dir.join("binned.json");
    let text = std::fs::read_to_string(&path).map_err(|e| CliError::io(&path, e))?;
    let bm: BinnedManifest = serde_json::from_str(&text).map_err(|e| CliError::Input(format!("{}: {e}", path.display())))?;
    if bm.u_files.len() != bm.frame_times_fs.len() || bm.counts_files.len() != bm.u_files.len() {
        return Err(CliError::Input(format!("{}: file lists do not match frame count", path.display())));
    }
    let grid = GridSpec::square(bm.n).map_err(|e| CliError::Input(e.to_string()))?;
    let mut frames = Vec::new();
    for ((c, u), t) in bm.counts_files.iter().zip(&bm.u_files).zip(&bm.frame_times_fs) {
        let (counts, _) = read_field(&dir.join(c))?;
        let (u, _) = read_field(&dir.join(u))?;
        if counts.grid() != grid || u.grid() != grid {
            return Err(CliError::Input(format!("{}: grid does not match binned.json", dir.display())));
        }
        frames.push(BinnedFrame {
            time_fs: *t,
            counts: counts.values().iter().map(|&v| v as u32).collect(),
            u,
        });
    }
    if frames.is_empty() {
        return Err(CliError::Input(format!("{}: no frames", dir.display())));
    }
    Ok((
        BinnedSeries {
            grid,
            frames,
            normalization_max: bm.normalization_max,
            normalization: bm.normalization,
        },
        bm,
    ))
}

pub fn bin(a: &BinArgs, cfg: &ConfigFile) -> Result<(), CliError> {
    let start = Instant::now();
    let traj = load_trajectory(&a.input)?;
    let n = cfg.pick(a.n, "n", 20)?;
    let species: Species = usage(a.species.parse())?;
    let normalization = if a.per_frame { Normalization::PerFrame } else { Normalization::Global };
    let grid = GridSpec::square(n).map_err(|e| CliError::Usage(e.to_string()))?;
    let series = bin_trajectory(&traj, species, grid, normalization).map_err(|e| CliError::Input(e.to_string()))?;
    let written = write_binned(&a.out, &series, species, traj.sim_box.side(), a.svg)?;
    let mut m = RunManifest::new("bin", json!({ "n": n, "species": species, "normalization": normalization }));
    m.seed = traj.seed;
    m.input(&a.input.traj);
    written.iter().for_each(|p| m.output(p));
    m.summary = json!({ "frames": series.frames.len(), "normalization_max": series.normalization_max });
    finish(m, start, &manifest::in_dir(&a.out))
}

struct Problem {
    problem: FitProblem,
    scale: UnitScale,
    substeps: usize,
    init: FdInit,
}

fn build_problem(p: &ProblemArgs, cfg: &ConfigFile) -> Result<Problem, CliError> {
    let (series, bm) = read_binned(&p.binned)?;
    let box_cm = cfg.pick(p.scale_box_cm, "scale_box_cm", bm.box_side_angstrom * 1e-8)?;
    let time_s = cfg.pick(p.scale_time_s, "scale_time_s", 1e-9)?;
    let scale = usage(UnitScale::new(box_cm, time_s))?;
    let substeps = cfg.pick(p.substeps, "substeps", 10)?;
    let frame0 = p.init_from_frame0 || cfg.get::<bool>("init_from_frame0")?.unwrap_or(false);
    let init = if frame0 { FdInit::Frame0 } else { FdInit::Patch };
    let problem = FitProblem::from_binned(&series, &scale, substeps, init).map_err(fit_err)?;
    Ok(Problem {
        problem,
        scale,
        substeps,
        init,
    })
}

#[derive(Serialize)]
struct FitReport<'a> {
    d_opt_nd: f64,
    d_opt_cm2_s: f64,
    cost: f64,
    iterations: usize,
    ci95: f64,
    ci95_cm2_s: f64,
    converged: bool,
    cost_trace: &'a [f64],
}

fn fit_report(f: &FitResult) -> FitReport<'_> {
    FitReport {
        d_opt_nd: f.d_opt_nd,
        d_opt_cm2_s: f.d_opt_cm2_s,
        cost: f.final_cost,
        iterations: f.iterations,
        ci95: f.ci95_nd,
        ci95_cm2_s: f.ci95_cm2_s,
        converged: f.converged,
        cost_trace: &f.cost_trace,
    }
}

pub fn fit(a: &FitArgs, cfg: &ConfigFile) -> Result<(), CliError> {
    let start = Instant::now();
    let p = build_problem(&a.problem, cfg)?;
    let defaults = FitConfig::default();
    let fc = FitConfig {
        d0: cfg.pick(a.d0, "d0", defaults.d0)?,
        max_iter: cfg.pick(a.max_iter, "max_iter", defaults.max_iter)?,
        ..defaults
    };
    let result = lm_fit(&p.problem, &fc, &p.scale).map_err(fit_err)?;
    info!("fit: D = {:.6e} cm²/s after {} iterations", result.d_opt_cm2_s, result.iterations);
    write_json(&a.out, &fit_report(&result))?;
    let mut m = RunManifest::new(
        "fit",
        json!({ "fit": fc, "scale": p.scale, "substeps": p.substeps, "init": p.init }),
    );
    m.input(&a.problem.binned);
    m.output(&a.out);
    finish(m, start, &manifest::beside(&a.out))
}

pub fn cost_curve(a: &CostCurveArgs, cfg: &ConfigFile) -> Result<(), CliError> {
    let start = Instant::now();
    if !(a.d_min > 0.0 && a.d_max > a.d_min) || a.points < 2 {
        return Err(CliError::Usage("need 0 < d-min < d-max and at least 2 points".into()));
    }
    let p = build_problem(&a.problem, cfg)?;
    let grid: Vec<f64> = (0..a.points)
        .map(|i| {
            let s = i as f64 / (a.points - 1) as f64;
            if a.log {
                a.d_min * (a.d_max / a.d_min).powf(s)
            } else {
                a.d_min + (a.d_max - a.d_min) * s
            }
        })
        .collect();
    let curve = p.problem.cost_curve(&grid).map_err(fit_err)?;
    let mut csv = String::from("d_nd,d_cm2_s,cost\n");
    for (d, c) in &curve {
        csv.push_str(&format!("{d:e},{:e},{c:e}\n", diffusion_core::nd_to_physical_d(*d, &p.scale)));
    }
    write_text(&a.out, &csv)?;
    let mut m = RunManifest::new(
        "cost-curve",
        json!({ "d_min": a.d_min, "d_max": a.d_max, "points": a.points, "log": a.log, "scale": p.scale, "substeps": p.substeps, "init": p.init }),
    );
    m.input(&a.problem.binned);
    m.output(&a.out);
    finish(m, start, &manifest::beside(&a.out))
}

pub fn msd(a: &MsdArgs, _cfg: &ConfigFile) -> Result<(), CliError> {
    let start = Instant::now();
    let traj = load_trajectory(&a.input)?;
    let species: Species = usage(a.species.parse())?;
    let divisor = match a.divisor.to_ascii_lowercase().as_str() {
        "2d" | "4" => MsdDivisor::TwoDim,
        "6" => MsdDivisor::Six,
        other => return Err(CliError::Usage(format!("unknown divisor '{other}' (expected 2d or 6)"))),
    };
    let times = traj.times_fs();
    let window = (
        a.t_min.unwrap_or(times.first().copied().unwrap_or(0.0)),
        a.t_max.unwrap_or(times.last().copied().unwrap_or(0.0)),
    );
    let est = md::msd_diffusion_estimate(&traj, species, window, divisor).map_err(|e| CliError::Input(e.to_string()))?;
    println!("D = {:.6e} cm^2/s ({:.6e} Å^2/fs)", est.diffusion_cm2_s(), est.diffusion);
    if !est.looks_linear() {
        log::warn!(
            "MSD is not linear over the window (R^2 {:.4}, slope ratio {:.3}); the estimate is not a diffusive one",
            est.r_squared,
            est.slope_ratio
        );
    }
    write_json(
        &a.out,
        &json!({
            "species": species,
            "divisor": divisor,
            "window_fs": [window.0, window.1],
            "diffusion_a2_per_fs": est.diffusion,
            "diffusion_cm2_s": est.diffusion_cm2_s(),
            "slope": est.slope,
            "intercept": est.intercept,
            "r_squared": est.r_squared,
            "slope_ratio": est.slope_ratio,
            "looks_linear": est.looks_linear(),
            "n_points": est.n_points,
            "curve": est.curve,
        }),
    )?;
    let mut m = RunManifest::new("msd", json!({ "species": species, "divisor": divisor, "window_fs": [window.0, window.1] }));
    m.seed = traj.seed;
    m.input(&a.input.traj);
    m.output(&a.out);
    finish(m, start, &manifest::beside(&a.out))
}

pub fn convert(a: &ConvertArgs) -> Result<(), CliError> {
    let start = Instant::now();
    let traj = load_trajectory(&TrajInput {
        traj: a.input.clone(),
        lammps_dt: a.lammps_dt,
    })?;
    match a.to.to_ascii_lowercase().as_str() {
        "native" => trajio::write_native(&traj, &a.output).map_err(traj_err)?,
        "lammps" => write_text(&a.output, &traj.to_lammps_dump(&SpeciesMap::default()))?,
        other => return Err(CliError::Usage(format!("unknown target format '{other}' (expected native or lammps)"))),
    }
    let mut m = RunManifest::new("convert", json!({ "to": a.to, "lammps_dt": a.lammps_dt }));
    m.seed = traj.seed;
    m.input(&a.input);
    m.output(&a.output);
    finish(m, start, &manifest::beside(&a.output))
}

pub fn amp_plot(a: &AmpPlotArgs) -> Result<(), CliError> {
    let start = Instant::now();
    let grid = GridSpec::new(a.dim, a.n).map_err(|e| CliError::Usage(e.to_string()))?;
    if !(a.d > 0.0) {
        return Err(CliError::Usage("--D must be positive".into()));
    }
    let schemes = match a.scheme.to_ascii_lowercase().as_str() {
        "both" => vec![SchemeKind::ForwardEuler, SchemeKind::CrankNicolson],
        s => vec![usage(s.parse::<SchemeKind>())?],
    };
    let kc = critical_time_step(grid, a.d);
    let mut csv = String::from("scheme,k_over_kc,k,m_over_n,rho\n");
    for scheme in &schemes {
        let label = match scheme {
            SchemeKind::ForwardEuler => "fe",
            SchemeKind::CrankNicolson => "cn",
        };
        for &f in &a.k_factors.0 {
            for (x, rho) in amplification_curve(*scheme, grid, f * kc, a.d) {
                csv.push_str(&format!("{label},{f},{:e},{x},{rho:e}\n", f * kc));
            }
        }
    }
    write_text(&a.out, &csv)?;
    let mut m = RunManifest::new(
        "amp-plot",
        json!({ "n": a.n, "d": a.d, "dim": a.dim, "k_factors": a.k_factors.0, "k_c": kc }),
    );
    m.output(&a.out);
    finish(m, start, &manifest::beside(&a.out))
}

pub fn heatmap(a: &HeatmapArgs) -> Result<(), CliError> {
    let start = Instant::now();
    if a.cell_px == 0 {
        return Err(CliError::Usage("--cell-px must be at least 1".into()));
    }
    let (field, _) = read_field(&a.field)?;
    write_text(&a.out, &render_heatmap(&field, a.cell_px))?;
    let mut m = RunManifest::new("heatmap", json!({ "cell_px": a.cell_px }));
    m.input(&a.field);
    m.output(&a.out);
    finish(m, start, &manifest::beside(&a.out))
}

fn reproduce_preset(a: &ReproduceArgs, cfg: &ConfigFile) -> Result<(ScalePreset, Preset, Vec<u64>), CliError> {
    let scale: ScalePreset = usage(a.scale.parse())?;
    let base = Preset::for_scale(scale);
    let md_cfg = MDConfig {
        n_he: cfg.pick(None, "n_he", base.md.n_he)?,
        n_ar: cfg.pick(None, "n_ar", base.md.n_ar)?,
        dt: cfg.pick(None, "dt", base.md.dt)?,
        temperature: cfg.pick(None, "temp", base.md.temperature)?,
        sample_stride: cfg.pick(None, "stride", base.md.sample_stride)?,
        ..base.md
    };
    let init = if a.init_from_frame0 {
        FdInit::Frame0
    } else if a.init_patch {
        FdInit::Patch
    } else {
        match cfg.raw("init") {
            Some("frame0") => FdInit::Frame0,
            Some("patch") => FdInit::Patch,
            Some(other) => return Err(CliError::Usage(format!("config key 'init': expected frame0 or patch, got '{other}'"))),
            None => base.init,
        }
    };
    let preset = Preset {
        md: md_cfg,
        box_side: cfg.pick(None, "box", base.box_side)?,
        n_steps: cfg.pick(a.steps, "steps", base.n_steps)?,
        grid_sizes: cfg.pick(a.grid_sizes.clone(), "n", List(base.grid_sizes.clone()))?.0,
        fd_substeps: cfg.pick(a.substeps, "substeps", base.fd_substeps)?,
        fit: FitConfig {
            d0: cfg.pick(a.d0, "d0", base.fit.d0)?,
            ..base.fit
        },
        init,
        ..base
    };
    let seeds = cfg.pick(a.seeds.clone(), "seeds", List(vec![1]))?.0;
    Ok((scale, preset, seeds))
}

fn write_seed(dir: &Path, preset: &Preset, run: &SeedRun, save_trajectory: bool) -> Result<(), CliError> {
    let seed_dir = dir.join(format!("seed_{}", run.seed));
    mkdir(&seed_dir)?;
    let md_cfg = MDConfig { seed: run.seed, ..preset.md };

    let mut m = RunManifest::new("reproduce:md", json!({ "md": md_cfg, "box_angstrom": preset.box_side, "steps": preset.n_steps }));
    m.seed = Some(run.seed);
    if save_trajectory {
        let p = seed_dir.join("trajectory.traj");
        trajio::write_native(&run.md.trajectory, &p).map_err(traj_err)?;
        m.output(&p);
    }
    m.summary = json!({
        "frames": run.md.trajectory.frames.len(),
        "relative_energy_drift": run.md.relative_energy_drift(),
    });
    m.write(&seed_dir.join("md.manifest.json"))?;

    let msd_path = seed_dir.join("msd.json");
    write_json(
        &msd_path,
        &json!({
            "diffusion_cm2_s": run.msd.diffusion_cm2_s(),
            "r_squared": run.msd.r_squared,
            "slope_ratio": run.msd.slope_ratio,
            "looks_linear": run.msd.looks_linear(),
        }),
    )?;
    let mut m = RunManifest::new("reproduce:msd", json!({ "species": Species::Ar, "divisor": MsdDivisor::TwoDim }));
    m.seed = Some(run.seed);
    m.output(&msd_path);
    m.write(&manifest::beside(&msd_path))?;

    for (binned, gf) in run.binned.iter().zip(&run.fits) {
        let n_dir = seed_dir.join(format!("N_{}", gf.n));
        let bin_dir = n_dir.join("binned");
        let written = write_binned(&bin_dir, binned, Species::Ar, preset.box_side, false)?;
        let mut m = RunManifest::new("reproduce:bin", json!({ "n": gf.n, "species": Species::Ar, "normalization": preset.normalization }));
        m.seed = Some(run.seed);
        written.iter().for_each(|p| m.output(p));
        m.write(&manifest::in_dir(&bin_dir))?;

        let report = n_dir.join("report.json");
        write_json(&report, &fit_report(&gf.fit))?;
        let mut m = RunManifest::new(
            "reproduce:fit",
            json!({ "fit": preset.fit, "substeps": preset.fd_substeps, "init": preset.init }),
        );
        m.seed = Some(run.seed);
        m.input(&bin_dir);
        m.output(&report);
        m.write(&manifest::beside(&report))?;
    }
    Ok(())
}

pub fn reproduce(a: &ReproduceArgs, cfg: &ConfigFile) -> Result<(), CliError> {
    let start = Instant::now();
    let (scale, preset, seeds) = reproduce_preset(a, cfg)?;
    info!("reproduce: {scale:?} scale, seeds {seeds:?}, N {:?}", preset.grid_sizes);
    let runs = pipeline::reproduce(&preset, &seeds).map_err(pipeline_err)?;
    mkdir(&a.out)?;
    for run in &runs {
        write_seed(&a.out, &preset, run, a.save_trajectory)?;
    }
    let report = Report::from_runs(Some(scale), &runs);
    let table = a.out.join("table2.csv");
    let per_seed = a.out.join("per_seed.csv");
    let report_json = a.out.join("report.json");
    write_text(&table, &report.table_csv())?;
    write_text(&per_seed, &report.per_seed_csv())?;
    write_json(&report_json, &report)?;
    print!("{}", report.table_csv());

    let mut m = RunManifest::new("reproduce", json!({ "scale": scale, "preset": preset, "seeds": seeds }));
    m.seed = seeds.first().copied();
    for p in [&table, &per_seed, &report_json] {
        m.output(p);
    }
    m.summary = json!({ "msd_cm2_s": report.msd_cm2_s });
    finish(m, start, &manifest::in_dir(&a.out))
}
