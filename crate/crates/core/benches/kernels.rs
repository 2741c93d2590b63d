//! Serial kernels against their data-parallel counterparts. Build with
//! `--no-default-features` to time the sequential fallback of the `par`
//! helpers; the group names carry the mode so reports do not mix.

use std::hint::black_box;

use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};

use diffusion_core::binning::{bin_trajectory, Normalization};
use diffusion_core::estimator::FitProblem;
use diffusion_core::fdsolver::{make_patch_initial, solve, step_forward_euler_stencil, step_with, SchemeKind, SolverConfig, Spectral};
use diffusion_core::md::{self, MDConfig, SimBox, Species};
use diffusion_core::{par, GridSpec};

fn mode() -> &'static str {
    if par::is_parallel() {
        "rayon"
    } else {
        "sequential"
    }
}

fn md_config(n: usize) -> MDConfig {
    MDConfig {
        n_he: n / 2,
        n_ar: n / 2,
        seed: 11,
        ..MDConfig::default()
    }
}

fn forces(c: &mut Criterion) {
    let mut g = c.benchmark_group(format!("forces/{}", mode()));
    g.sample_size(20);
    for &n in &[1_000usize, 4_000] {
        // same number density as the desk preset
        let side = 5_000.0 * (n as f64 / 1_000.0).sqrt();
        let sim_box = SimBox::new(side).unwrap();
        let state = md::init_state(&md_config(n), &sim_box).unwrap();
        g.bench_with_input(BenchmarkId::new("cell_serial", n), &n, |b, _| {
            b.iter(|| md::compute_forces_serial(black_box(&state), &sim_box).unwrap())
        });
        g.bench_with_input(BenchmarkId::new("cell_parallel", n), &n, |b, _| {
            b.iter(|| md::compute_forces_parallel(black_box(&state), &sim_box).unwrap())
        });
        if n <= 1_000 {
            g.bench_with_input(BenchmarkId::new("brute", n), &n, |b, _| {
                b.iter(|| md::compute_forces_brute(black_box(&state), &sim_box).unwrap())
            });
        }
    }
    g.finish();
}

fn fd_steps(c: &mut Criterion) {
    let mut g = c.benchmark_group(format!("fd_step/{}", mode()));
    for &n in &[32usize, 128] {
        let grid = GridSpec::square(n).unwrap();
        let u = make_patch_initial(grid).unwrap();
        let spectral = Spectral::new(grid);
        g.bench_with_input(BenchmarkId::new("fe_stencil", n), &n, |b, _| {
            b.iter(|| step_forward_euler_stencil(black_box(&u), 1e-5, 1.0))
        });
        g.bench_with_input(BenchmarkId::new("cn_spectral", n), &n, |b, _| {
            b.iter(|| step_with(&spectral, black_box(&u), SchemeKind::CrankNicolson, 1e-3, 1.0))
        });
    }
    g.finish();
}

fn fit_kernels(c: &mut Criterion) {
    let grid = GridSpec::square(20).unwrap();
    let u0 = make_patch_initial(grid).unwrap();
    let cfg = SolverConfig::new(grid, 1e-3, 0.05, SchemeKind::CrankNicolson, 100).unwrap();
    let observed = solve(&u0, &cfg, 10).unwrap().frames;
    let problem = FitProblem::new(observed, u0, 1e-3, 10).unwrap();
    let ds: Vec<f64> = (1..=16).map(|i| 0.01 * i as f64).collect();

    let mut g = c.benchmark_group(format!("fit/{}", mode()));
    g.sample_size(20);
    g.bench_function("cost_curve_16", |b| b.iter(|| problem.cost_curve(black_box(&ds)).unwrap()));
    g.bench_function("cost_curve_16_in_order", |b| {
        b.iter(|| ds.iter().map(|&d| problem.cost(black_box(d)).unwrap()).collect::<Vec<_>>())
    });
    g.bench_function("jacobian", |b| b.iter(|| problem.jacobian(black_box(0.05), 1e-6).unwrap()));
    g.finish();
}

fn binning(c: &mut Criterion) {
    let sim_box = SimBox::new(5_000.0).unwrap();
    let run = md::run(&MDConfig { sample_stride: 10, ..md_config(1_000) }, &sim_box, 200).unwrap();
    let grid = GridSpec::square(20).unwrap();
    let mut g = c.benchmark_group(format!("binning/{}", mode()));
    g.bench_function("bin_trajectory_21_frames", |b| {
        b.iter(|| bin_trajectory(black_box(&run.trajectory), Species::Ar, grid, Normalization::Global).unwrap())
    });
    g.finish();
}

criterion_group!(benches, forces, fd_steps, fit_kernels, binning);
criterion_main!(benches);
