//! Runs the desk preset for one seed and prints the fitted and MSD estimates.

use diffusion_core::estimator::FdInit;
use diffusion_core::pipeline::{bin_and_fit, msd_estimate, run_md, Preset};

fn main() {
    let seed = std::env::args().nth(1).and_then(|s| s.parse().ok()).unwrap_or(1);
    let mut preset = Preset::desk();
    let t = std::time::Instant::now();
    let run = run_md(&preset, seed).expect("md");
    println!("md: {:.1?}, drift {:.2e}", t.elapsed(), run.relative_energy_drift());
    let msd = msd_estimate(&run).expect("msd");
    println!("msd: {:.4e} cm2/s (r2 {:.4}, ratio {:.3})", msd.diffusion_cm2_s(), msd.r_squared, msd.slope_ratio);
    for init in [FdInit::Patch, FdInit::Frame0] {
        preset.init = init;
        for &n in &preset.grid_sizes {
            let (_, fit) = bin_and_fit(&preset, &run, n).expect("fit");
            println!(
                "{init:?} N={n}: D={:.4e} cm2/s cost={:.4e} ci={:.2e} it={} conv={}",
                fit.d_opt_cm2_s, fit.final_cost, fit.ci95_cm2_s, fit.iterations, fit.converged
            );
        }
    }
}
