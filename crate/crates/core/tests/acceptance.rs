//! Acceptance suite. Prints one PASS/FAIL line per criterion and exits
//! non-zero if any criterion fails.

use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::PathBuf;
use std::time::Instant;

use diffusion_core::analytic::PatchSeries;
use diffusion_core::binning::{bin_counts, bin_trajectory, normalize_series, Normalization};
use diffusion_core::estimator::{lm_fit, FitConfig, FitProblem};
use diffusion_core::fdsolver::{
    amplification_factor, cosine_mode, critical_time_step, make_patch_initial, solve, step, SchemeKind, SolverConfig,
};
use diffusion_core::md::{
    compute_forces, compute_forces_brute, compute_forces_parallel, compute_forces_serial, init_state, verlet_step,
    MDConfig, SimBox, Species, KB_KCAL_PER_MOL_K,
};
use diffusion_core::pipeline::{bin_and_fit, msd_estimate, run_md, Preset};
use diffusion_core::trajio::{parse_lammps_dump, parse_lammps_dump_str, read_native_str, SpeciesMap, TrajError, Trajectory};
use diffusion_core::{field_energy, field_mass, GridSpec, ScalarField, UnitScale};
use proptest::prelude::*;
use proptest::test_runner::{Config, TestRunner};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

type Outcome = Result<String, String>;

fn ensure(cond: bool, msg: impl Into<String>) -> Result<(), String> {
    if cond {
        Ok(())
    } else {
        Err(msg.into())
    }
}

fn fixture(name: &str) -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("tests/fixtures/lammps").join(name)
}

fn l2_error(a: &ScalarField, b: &ScalarField) -> f64 {
    let h = a.grid().h();
    let sq: f64 = a.values().iter().zip(b.values()).map(|(x, y)| (x - y) * (x - y)).sum();
    (h * h * sq).sqrt()
}

fn patch_error(n: usize, d: f64, t: f64, k: f64, oracle: &PatchSeries) -> f64 {
    let steps = (t / k).round() as usize;
    let g = GridSpec::square(n).unwrap();
    let cfg = SolverConfig::new(g, k, d, SchemeKind::CrankNicolson, steps).unwrap();
    let u = solve(&make_patch_initial(g).unwrap(), &cfg, steps).unwrap();
    l2_error(u.frames.last().unwrap(), &oracle.on_grid(g, t, d))
}

fn criterion_1() -> Outcome {
    let start = Instant::now();
    let (d, t, k) = (3.18e-3, 0.05, 1e-4);
    let oracle = PatchSeries::new(64);
    let errors: Vec<f64> = [32, 64, 128].iter().map(|&n| patch_error(n, d, t, k, &oracle)).collect();
    let ratios = [errors[0] / errors[1], errors[1] / errors[2]];
    let elapsed = start.elapsed().as_secs_f64();
    // one more refinement, outside the timed part, shows where the asymptotic regime starts
    let next = errors[2] / patch_error(256, d, t, k, &PatchSeries::new(128));
    let detail = format!(
        "L2 errors {:.3e} {:.3e} {:.3e}, ratios {:.3} {:.3} (128->256: {next:.3}), {elapsed:.2}s",
        errors[0], errors[1], errors[2], ratios[0], ratios[1]
    );
    ensure(ratios.iter().all(|r| (3.2..=4.8).contains(r)), format!("ratio outside 4 +/- 20%: {detail}"))?;
    ensure(elapsed < 10.0, format!("too slow: {detail}"))?;
    Ok(detail)
}

fn energies(u0: &ScalarField, cfg: &SolverConfig) -> Vec<f64> {
    let mut u = u0.clone();
    let mut e = vec![field_energy(&u)];
    for _ in 0..cfg.n_max {
        u = step(&u, cfg).unwrap();
        e.push(field_energy(&u));
    }
    e
}

fn criterion_2() -> Outcome {
    let n = 32;
    let g = GridSpec::square(n).unwrap();
    let d = 1.0;
    let kc = critical_time_step(g, d);
    let patch = make_patch_initial(g).unwrap();

    let fe_stable = energies(&patch, &SolverConfig::new(g, 0.99 * kc, d, SchemeKind::ForwardEuler, 500).unwrap());
    ensure(
        fe_stable.windows(2).all(|w| w[1] <= w[0] * (1.0 + 1e-14)),
        "FE at 0.99 k_c: energy increased",
    )?;

    let seeded = cosine_mode(g, [n / 2, n / 2]);
    let fe_unstable = energies(&seeded, &SolverConfig::new(g, 1.01 * kc, d, SchemeKind::ForwardEuler, 200).unwrap());
    let growth = fe_unstable.last().unwrap() / fe_unstable[0];
    ensure(growth >= 10.0, format!("FE at 1.01 k_c grew only {growth:.3}x"))?;

    let cn = energies(&patch, &SolverConfig::new(g, 100.0 * kc, d, SchemeKind::CrankNicolson, 500).unwrap());
    ensure(cn.windows(2).all(|w| w[1] <= w[0] * (1.0 + 1e-14)), "CN at 100 k_c: energy increased")?;

    let mut runner = TestRunner::new(Config {
        cases: 10_000,
        failure_persistence: None,
        ..Config::default()
    });
    let strategy = (2usize..=256, 0usize..256, 0usize..256, -8.0f64..4.0, -3.0f64..3.0);
    runner
        .run(&strategy, |(n, m1, m2, log_k, log_d)| {
            let g = GridSpec::square(n).unwrap();
            let rho = amplification_factor(SchemeKind::CrankNicolson, [m1 % n, m2 % n], 10f64.powf(log_k), 10f64.powf(log_d), g);
            prop_assert!(rho.abs() <= 1.0, "rho = {rho}");
            Ok(())
        })
        .map_err(|e| format!("|rho_CN| <= 1 property: {e}"))?;
    Ok(format!(
        "FE 0.99k_c non-increasing over 500 steps; FE 1.01k_c growth {growth:.1}x in 200 steps; CN 100k_c non-increasing; |rho_CN|<=1 on 1e4 cases"
    ))
}

fn criterion_3() -> Outcome {
    let g = GridSpec::square(32).unwrap();
    let d = 0.5;
    let kc = critical_time_step(g, d);
    let mut worst = Vec::new();
    for (scheme, k) in [(SchemeKind::ForwardEuler, 0.9 * kc), (SchemeKind::CrankNicolson, 10.0 * kc)] {
        let cfg = SolverConfig::new(g, k, d, scheme, 1000).unwrap();
        let mut u = make_patch_initial(g).unwrap();
        let m0 = field_mass(&u);
        let mut drift: f64 = 0.0;
        for _ in 0..1000 {
            u = step(&u, &cfg).unwrap();
            drift = drift.max((field_mass(&u) - m0).abs());
        }
        ensure(drift <= 1e-13, format!("{scheme:?}: mass drift {drift:.3e}"))?;
        worst.push(drift);
    }
    Ok(format!("mass drift FE {:.2e}, CN {:.2e} over 1000 steps", worst[0], worst[1]))
}

fn criterion_4() -> Outcome {
    // cell list against brute force on a dense 500-particle system
    let dense_box = SimBox::new(300.0).unwrap();
    let dense = MDConfig {
        n_he: 250,
        n_ar: 250,
        seed: 11,
        ..MDConfig::default()
    };
    let state = init_state(&dense, &dense_box).unwrap();
    let brute = compute_forces_brute(&state, &dense_box).unwrap();
    let mut force_err: f64 = 0.0;
    for fast in [compute_forces_serial(&state, &dense_box).unwrap(), compute_forces_parallel(&state, &dense_box).unwrap()] {
        for (a, b) in fast.forces.iter().zip(&brute.forces) {
            force_err = force_err.max((a[0] - b[0]).abs()).max((a[1] - b[1]).abs());
        }
        force_err = force_err.max((fast.potential - brute.potential).abs());
    }
    ensure(force_err <= 1e-10, format!("cell list vs brute force differ by {force_err:.3e}"))?;

    // momentum per step on the same dense system
    let mut s = state.clone();
    let mut f = compute_forces(&s, &dense_box).unwrap();
    let scale = s.momentum_scale();
    let mut p_prev = s.momentum();
    let mut p_step: f64 = 0.0;
    for _ in 0..200 {
        verlet_step(&mut s, &mut f, &dense, &dense_box).unwrap();
        let p = s.momentum();
        p_step = p_step.max(((p[0] - p_prev[0]).abs()).max((p[1] - p_prev[1]).abs()) / scale);
        p_prev = p;
    }
    ensure(p_step <= 1e-9, format!("momentum change per step {p_step:.3e} (relative)"))?;

    // NVE drift at desk scale
    let desk = Preset::desk();
    let cfg = MDConfig {
        sample_stride: 50,
        ..desk.md
    };
    let run = diffusion_core::md::run(&cfg, &desk.sim_box().unwrap(), 10_000).map_err(|e| e.to_string())?;
    let drift = run.relative_energy_drift();
    ensure(drift <= 1e-3, format!("NVE relative drift {drift:.3e}"))?;

    // equipartition at paper-scale particle counts
    let paper = Preset::paper();
    let init = init_state(&paper.md, &paper.sim_box().unwrap()).unwrap();
    let ke_per = init.kinetic_energy() / init.len() as f64;
    let target = KB_KCAL_PER_MOL_K * paper.md.temperature;
    let rel = (ke_per - target).abs() / target;
    ensure(rel <= 0.02, format!("mean KE per particle off by {:.2}%", rel * 100.0))?;

    Ok(format!(
        "force err {force_err:.1e}; momentum/step {p_step:.1e}; NVE drift {drift:.2e} over 1e4 steps; KE/particle within {:.2}% of kB T",
        rel * 100.0
    ))
}

fn synthetic_problem(d_star: f64, sigma: f64, seed: u64) -> FitProblem {
    let g = GridSpec::square(50).unwrap();
    let u0 = make_patch_initial(g).unwrap();
    let (k, stride) = (5e-4, 10);
    let clean = FitProblem::new(vec![u0.clone(); 11], u0.clone(), k, stride)
        .unwrap()
        .model(d_star)
        .unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let noise = Normal::new(0.0, sigma.max(f64::MIN_POSITIVE)).unwrap();
    let observed = clean
        .into_iter()
        .map(|f| {
            let v = f.values().iter().map(|x| if sigma > 0.0 { x + noise.sample(&mut rng) } else { *x }).collect();
            ScalarField::new(g, v).unwrap()
        })
        .collect();
    FitProblem::new(observed, u0, k, stride).unwrap()
}

fn criterion_5() -> Outcome {
    let start = Instant::now();
    let d_star = 0.8;
    let scale = UnitScale::default();
    let clean = synthetic_problem(d_star, 0.0, 0);
    let mut notes = Vec::new();
    for d0 in [0.08, 8.0] {
        let fit = lm_fit(&clean, &FitConfig { d0, ..FitConfig::default() }, &scale).map_err(|e| e.to_string())?;
        let rel = (fit.d_opt_nd - d_star).abs() / d_star;
        ensure(rel <= 1e-6, format!("noiseless from D0={d0}: rel err {rel:.3e}"))?;
        ensure(fit.cost_trace.windows(2).all(|w| w[1] < w[0]), "cost trace not strictly decreasing")?;
        notes.push(format!("D0={d0}: rel {rel:.1e}"));
    }
    let noisy = synthetic_problem(d_star, 0.01, 42);
    let fit = lm_fit(&noisy, &FitConfig { d0: 0.08, ..FitConfig::default() }, &scale).map_err(|e| e.to_string())?;
    let rel = (fit.d_opt_nd - d_star).abs() / d_star;
    ensure(rel <= 0.01, format!("noisy recovery rel err {rel:.3e}"))?;
    ensure(fit.cost_trace.windows(2).all(|w| w[1] < w[0]), "noisy cost trace not strictly decreasing")?;
    let elapsed = start.elapsed().as_secs_f64();
    ensure(elapsed < 30.0, format!("took {elapsed:.1}s"))?;
    Ok(format!("{}; noisy rel {rel:.2e} (ci95 {:.2e}); {elapsed:.2}s", notes.join(", "), fit.ci95_nd))
}

fn criterion_6(run: &diffusion_core::md::MdRun) -> Outcome {
    let preset = Preset::desk();
    let msd = msd_estimate(run).map_err(|e| e.to_string())?;
    let d_msd = msd.diffusion_cm2_s();
    ensure(d_msd.is_finite() && d_msd > 0.0, format!("MSD estimate {d_msd}"))?;
    let mut parts = vec![format!("MSD {d_msd:.3e} cm2/s")];
    for &n in &preset.grid_sizes {
        let (_, fit) = bin_and_fit(&preset, run, n).map_err(|e| e.to_string())?;
        let d_fit = fit.d_opt_cm2_s;
        ensure(d_fit.is_finite() && d_fit > 0.0, format!("N={n}: fitted D {d_fit}"))?;
        let ratio = d_fit / d_msd;
        ensure((0.5..=2.0).contains(&ratio), format!("N={n}: fit {d_fit:.3e} vs MSD {d_msd:.3e} (ratio {ratio:.2})"))?;
        parts.push(format!("N={n} fit {d_fit:.3e} (ratio {ratio:.2})"));
    }
    Ok(parts.join("; "))
}

const FUZZ_TOKENS: &[&str] = &[
    "ITEM: TIMESTEP",
    "ITEM: NUMBER OF ATOMS",
    "ITEM: BOX BOUNDS pp pp pp",
    "ITEM: BOX BOUNDS xy xz yz pp pp pp",
    "ITEM: ATOMS id type x y",
    "ITEM: ATOMS id type xs ys vx vy",
    "ITEM: ATOMS type id xu yu",
    "0",
    "1",
    "2",
    "3",
    "-1",
    "18446744073709551616",
    "1e400",
    "nan",
    "inf",
    "0.0 100.0",
    "0 0",
    "-0.5 0.5",
    "1 1 10.0 10.0",
    "2 2 40 45",
    "1 1 nan 3",
    "",
    "   ",
    "#format diffusion-traj 1",
    "#box 100",
    "FRAME 0 0",
];

fn fuzz_input(rng: &mut ChaCha8Rng, base: &str) -> String {
    match rng.random_range(0..3) {
        0 => {
            let len = rng.random_range(0..400);
            let bytes: Vec<u8> = (0..len).map(|_| rng.random()).collect();
            String::from_utf8_lossy(&bytes).into_owned()
        }
        1 => {
            let lines = rng.random_range(0..40);
            (0..lines)
                .map(|_| FUZZ_TOKENS[rng.random_range(0..FUZZ_TOKENS.len())])
                .collect::<Vec<_>>()
                .join("\n")
        }
        _ => {
            let mut lines: Vec<String> = base.lines().map(String::from).collect();
            for _ in 0..rng.random_range(1..5) {
                if lines.is_empty() {
                    break;
                }
                let i = rng.random_range(0..lines.len());
                match rng.random_range(0..5) {
                    0 => {
                        lines.remove(i);
                    }
                    1 => {
                        let l = lines[i].clone();
                        lines.insert(i, l);
                    }
                    2 => {
                        let j = rng.random_range(0..lines.len());
                        lines.swap(i, j);
                    }
                    3 => {
                        let mut chars: Vec<char> = lines[i].chars().collect();
                        if !chars.is_empty() {
                            let c = rng.random_range(0..chars.len());
                            chars[c] = ['x', '9', '-', '.', ' ', 'e', '\u{fffd}'][rng.random_range(0..7)];
                        }
                        lines[i] = chars.into_iter().collect();
                    }
                    _ => lines.truncate(i),
                }
            }
            lines.join("\n")
        }
    }
}

fn criterion_7() -> Outcome {
    let map = SpeciesMap::default();

    let well = parse_lammps_dump(fixture("well_formed.dump"), &map).map_err(|e| e.to_string())?;
    ensure(well.frames.len() == 2 && well.particles.len() == 4, "well_formed: wrong shape")?;
    ensure(well.count(Species::Ar) == 2, "well_formed: wrong Ar count")?;
    // atom 2 crosses x = 100 between frames and must come out unwrapped
    ensure((well.frames[1].positions[1][0] - 102.0).abs() < 1e-12, "well_formed: not unwrapped")?;

    let reordered = parse_lammps_dump(fixture("reordered.dump"), &map).map_err(|e| e.to_string())?;
    let ids: Vec<u64> = reordered.particles.iter().map(|p| p.id).collect();
    ensure(ids == [1, 2, 3], "reordered: rows not sorted by id")?;
    ensure(reordered.frames[0].positions[0] == [10.0, 70.0], "reordered: xlo offset or column mapping wrong")?;
    ensure(reordered.frames[0].velocities[2] == [-0.25, 0.5], "reordered: velocity columns wrong")?;
    ensure(reordered.has_velocities, "reordered: velocities not flagged")?;

    let scaled = parse_lammps_dump(fixture("scaled.dump"), &map).map_err(|e| e.to_string())?;
    let p = scaled.frames[1].positions[1];
    ensure((p[0] - 204.0).abs() < 1e-9 && (p[1] + 2.0).abs() < 1e-9, format!("scaled: got {p:?}"))?;

    match parse_lammps_dump(fixture("truncated.dump"), &map) {
        Err(TrajError::Truncated { expected: 4, found: 3, .. }) => {}
        other => return Err(format!("truncated: {other:?}")),
    }
    match parse_lammps_dump(fixture("missing_section.dump"), &map) {
        Err(TrajError::MissingSection { line: 3, .. }) => {}
        other => return Err(format!("missing_section: {other:?}")),
    }

    let base = std::fs::read_to_string(fixture("well_formed.dump")).unwrap();
    let native = well.to_native_string();
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let mut crashes = 0;
    let mut accepted = 0;
    let hook = std::panic::take_hook();
    std::panic::set_hook(Box::new(|_| {}));
    for i in 0..10_000 {
        let input = fuzz_input(&mut rng, if i % 2 == 0 { &base } else { &native });
        let res = catch_unwind(AssertUnwindSafe(|| {
            let a = parse_lammps_dump_str(&input, &map).is_ok();
            let b = read_native_str(&input).is_ok();
            a as usize + b as usize
        }));
        match res {
            Ok(n) => accepted += n,
            Err(_) => crashes += 1,
        }
    }
    std::panic::set_hook(hook);
    ensure(crashes == 0, format!("{crashes} fuzz inputs crashed the parser"))?;
    Ok(format!("5 fixtures handled; 1e4 fuzz inputs, 0 crashes ({accepted} parses accepted)"))
}

fn check_binning(traj: &Trajectory, sizes: &[usize]) -> Result<usize, String> {
    let n_ar = traj.count(Species::Ar) as u32;
    let selected = traj.indices_of(Species::Ar);
    let mut frames = 0;
    for &n in sizes {
        let g = GridSpec::square(n).unwrap();
        for f in &traj.frames {
            let c = bin_counts(&f.positions, &selected, &traj.sim_box, g).map_err(|e| e.to_string())?;
            ensure(c.iter().sum::<u32>() == n_ar, format!("N={n}, t={}: counts do not sum to {n_ar}", f.time_fs))?;
            frames += 1;
        }
        if n_ar > 0 {
            let s = bin_trajectory(traj, Species::Ar, g, Normalization::Global).map_err(|e| e.to_string())?;
            ensure(
                s.frames.iter().all(|f| f.u.values().iter().all(|v| (0.0..=1.0).contains(v))),
                "U outside [0, 1]",
            )?;
        }
    }
    Ok(frames)
}

fn criterion_8(desk_run: &diffusion_core::md::MdRun) -> Outcome {
    let map = SpeciesMap::default();
    let mut trajectories = vec![desk_run.trajectory.clone()];
    for name in ["well_formed.dump", "reordered.dump", "scaled.dump"] {
        trajectories.push(parse_lammps_dump(fixture(name), &map).map_err(|e| e.to_string())?);
    }
    let small = diffusion_core::md::run(
        &MDConfig {
            n_he: 40,
            n_ar: 60,
            sample_stride: 20,
            seed: 5,
            ..MDConfig::default()
        },
        &SimBox::new(200.0).unwrap(),
        200,
    )
    .map_err(|e| e.to_string())?;
    trajectories.push(small.trajectory);
    let mut frames = 0;
    for t in &trajectories {
        frames += check_binning(t, &[4, 10, 20, 50])?;
    }

    let g = GridSpec::square(2).unwrap();
    let s = normalize_series(g, vec![(0.0, vec![10, 3, 0, 1]), (1.0, vec![4, 2, 1, 0])], Normalization::Global)
        .map_err(|e| e.to_string())?;
    ensure(s.frames[0].u.max_abs() == 1.0 && s.frames[1].u.max_abs() == 0.4, "global normalization 10 -> 1.0, 4 -> 0.4")?;
    Ok(format!(
        "count sums exact over {frames} binned frames from {} trajectories; U in [0,1]; peaks 10,4 -> 1.0,0.4",
        trajectories.len()
    ))
}

fn report(id: usize, name: &str, outcome: std::thread::Result<Outcome>) -> bool {
    let (ok, detail) = match outcome {
        Ok(Ok(d)) => (true, d),
        Ok(Err(d)) => (false, d),
        Err(p) => (
            false,
            format!(
                "panicked: {}",
                p.downcast_ref::<String>().cloned().or_else(|| p.downcast_ref::<&str>().map(|s| s.to_string())).unwrap_or_default()
            ),
        ),
    };
    println!("criterion {id} {name}: {} ({detail})", if ok { "PASS" } else { "FAIL" });
    ok
}

fn main() {
    // `cargo test -- --list` and filters from other harnesses are not meaningful here
    if std::env::args().any(|a| a == "--list") {
        println!("acceptance: test");
        return;
    }
    let desk_start = Instant::now();
    let desk = run_md(&Preset::desk(), 1);
    let desk_secs = desk_start.elapsed().as_secs_f64();
    let mut ok = true;
    ok &= report(1, "FD vs analytic convergence", catch_unwind(criterion_1));
    ok &= report(2, "stability thresholds", catch_unwind(criterion_2));
    ok &= report(3, "mass conservation", catch_unwind(criterion_3));
    ok &= report(4, "MD correctness", catch_unwind(criterion_4));
    ok &= report(5, "estimator oracle", catch_unwind(criterion_5));
    match &desk {
        Ok(run) => {
            ok &= report(
                6,
                "desk end-to-end consistency",
                catch_unwind(AssertUnwindSafe(|| criterion_6(run).map(|d| format!("{d}; MD {desk_secs:.1}s")))),
            );
        }
        Err(e) => {
            ok &= report(6, "desk end-to-end consistency", Ok(Err(format!("desk MD failed: {e}"))));
        }
    }
    ok &= report(7, "parser robustness", catch_unwind(criterion_7));
    match &desk {
        Ok(run) => ok &= report(8, "binning exactness", catch_unwind(AssertUnwindSafe(|| criterion_8(run)))),
        Err(e) => ok &= report(8, "binning exactness", Ok(Err(format!("desk MD failed: {e}")))),
    }
    if !ok {
        std::process::exit(1);
    }
}
