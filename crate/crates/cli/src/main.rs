//! `diffusion`: MD simulation, FD solving, binning and fitting from the
//! command line. Every command writes its artifacts plus one manifest.
//!
//! Exit codes: 0 success, 2 usage error, 3 input or parse error,
//! 4 numerical-instability abort.

mod commands;
mod config;
mod manifest;
mod svg;

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use config::{ConfigFile, List};

#[derive(Debug)]
pub enum CliError {
    Usage(String),
    Input(String),
    Unstable(String),
}

impl CliError {
    pub fn io(path: &Path, e: std::io::Error) -> Self {
        Self::Input(format!("{}: {e}", path.display()))
    }

    fn code(&self) -> u8 {
        match self {
            Self::Usage(_) => 2,
            Self::Input(_) => 3,
            Self::Unstable(_) => 4,
        }
    }
}

impl std::fmt::Display for CliError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Self::Usage(m) => write!(f, "usage error: {m}"),
            Self::Input(m) => write!(f, "input error: {m}"),
            Self::Unstable(m) => write!(f, "numerical instability: {m}"),
        }
    }
}

#[derive(Parser, Debug)]
#[command(name = "diffusion", version, about = "Estimate gas diffusion coefficients from 2D Lennard-Jones MD")]
struct Cli {
    /// key=value file; command-line flags take precedence over it
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Worker threads for data-parallel kernels
    #[arg(long, global = true)]
    threads: Option<usize>,
    #[arg(short, long, global = true)]
    verbose: bool,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Run an NVE Lennard-Jones simulation and write a trajectory
    MdRun(MdRunArgs),
    /// Solve the periodic diffusion equation from the patch initial condition
    FdRun(FdRunArgs),
    /// Bin a trajectory onto an N×N grid
    Bin(BinArgs),
    /// Fit the diffusion coefficient to a binned series
    Fit(FitArgs),
    /// Evaluate the fit cost over a range of D
    CostCurve(CostCurveArgs),
    /// Diffusion coefficient from the mean squared displacement
    Msd(MsdArgs),
    /// Convert between the native trajectory format and LAMMPS dumps
    Convert(ConvertArgs),
    /// Amplification factors along the grid diagonal
    AmpPlot(AmpPlotArgs),
    /// Render a field CSV as an SVG heatmap
    Heatmap(HeatmapArgs),
    /// MD, binning and fitting for several seeds and grid sizes
    Reproduce(ReproduceArgs),
}

#[derive(Args, Debug)]
pub struct MdRunArgs {
    /// Built-in starting point for every unset value (desk or paper)
    #[arg(long, default_value = "desk")]
    pub preset: String,
    #[arg(long)]
    pub n_he: Option<usize>,
    #[arg(long)]
    pub n_ar: Option<usize>,
    /// Box side, Å
    #[arg(long = "box")]
    pub box_side: Option<f64>,
    /// Time step, fs
    #[arg(long)]
    pub dt: Option<f64>,
    #[arg(long)]
    pub steps: Option<usize>,
    #[arg(long)]
    pub stride: Option<usize>,
    /// Temperature, K
    #[arg(long)]
    pub temp: Option<f64>,
    #[arg(long)]
    pub seed: Option<u64>,
    /// Trajectory file (native format)
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Args, Debug)]
pub struct FdRunArgs {
    #[arg(long = "N", alias = "n")]
    pub n: Option<usize>,
    #[arg(long = "D", alias = "d")]
    pub d: Option<f64>,
    #[arg(long)]
    pub k: Option<f64>,
    #[arg(long)]
    pub steps: Option<usize>,
    /// fe or cn
    #[arg(long)]
    pub scheme: Option<String>,
    #[arg(long)]
    pub stride: Option<usize>,
    /// Also write the Fourier-series solution and per-frame errors
    #[arg(long)]
    pub oracle: bool,
    /// Truncation order of the oracle series
    #[arg(long, default_value_t = 64)]
    pub oracle_modes: usize,
    /// Write an SVG heatmap per frame
    #[arg(long)]
    pub svg: bool,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Args, Debug)]
pub struct TrajInput {
    /// Native trajectory or LAMMPS text dump (detected from content)
    #[arg(long)]
    pub traj: PathBuf,
    /// MD step used to turn LAMMPS timesteps into times, fs
    #[arg(long, default_value_t = 1.0)]
    pub lammps_dt: f64,
}

#[derive(Args, Debug)]
pub struct BinArgs {
    #[command(flatten)]
    pub input: TrajInput,
    #[arg(long = "N", alias = "n")]
    pub n: Option<usize>,
    #[arg(long, default_value = "ar")]
    pub species: String,
    /// Normalize each frame by its own maximum instead of the series maximum
    #[arg(long)]
    pub per_frame: bool,
    #[arg(long)]
    pub svg: bool,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Args, Debug)]
pub struct ProblemArgs {
    /// Directory written by `bin`
    #[arg(long)]
    pub binned: PathBuf,
    /// Box length in cm (defaults to the binned trajectory's box)
    #[arg(long)]
    pub scale_box_cm: Option<f64>,
    /// Nondimensional time unit in s
    #[arg(long)]
    pub scale_time_s: Option<f64>,
    /// FD steps per binned frame interval
    #[arg(long)]
    pub substeps: Option<usize>,
    /// Start the FD solution from the first binned frame instead of the patch
    #[arg(long)]
    pub init_from_frame0: bool,
}

#[derive(Args, Debug)]
pub struct FitArgs {
    #[command(flatten)]
    pub problem: ProblemArgs,
    /// Initial guess, nondimensional
    #[arg(long)]
    pub d0: Option<f64>,
    #[arg(long)]
    pub max_iter: Option<usize>,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Args, Debug)]
pub struct CostCurveArgs {
    #[command(flatten)]
    pub problem: ProblemArgs,
    #[arg(long)]
    pub d_min: f64,
    #[arg(long)]
    pub d_max: f64,
    #[arg(long, default_value_t = 50)]
    pub points: usize,
    /// Geometric instead of linear spacing
    #[arg(long)]
    pub log: bool,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Args, Debug)]
pub struct MsdArgs {
    #[command(flatten)]
    pub input: TrajInput,
    #[arg(long, default_value = "ar")]
    pub species: String,
    /// Window start, fs (default: first frame)
    #[arg(long)]
    pub t_min: Option<f64>,
    /// Window end, fs (default: last frame)
    #[arg(long)]
    pub t_max: Option<f64>,
    /// 2d (Einstein relation in two dimensions) or 6
    #[arg(long, default_value = "2d")]
    pub divisor: String,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Args, Debug)]
pub struct ConvertArgs {
    #[arg(long)]
    pub input: PathBuf,
    #[arg(long)]
    pub output: PathBuf,
    /// native or lammps
    #[arg(long)]
    pub to: String,
    /// MD step for LAMMPS input timesteps, fs
    #[arg(long, default_value_t = 1.0)]
    pub lammps_dt: f64,
}

#[derive(Args, Debug)]
pub struct AmpPlotArgs {
    #[arg(long = "N", alias = "n", default_value_t = 32)]
    pub n: usize,
    #[arg(long = "D", alias = "d", default_value_t = 1.0)]
    pub d: f64,
    #[arg(long, default_value_t = 2)]
    pub dim: usize,
    /// Time steps as multiples of the critical step
    #[arg(long, default_value = "0.5,1,1.5")]
    pub k_factors: List<f64>,
    /// fe, cn or both
    #[arg(long, default_value = "both")]
    pub scheme: String,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Args, Debug)]
pub struct HeatmapArgs {
    #[arg(long)]
    pub field: PathBuf,
    #[arg(long, default_value_t = 8)]
    pub cell_px: usize,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Args, Debug)]
pub struct ReproduceArgs {
    /// desk or paper
    #[arg(long, default_value = "desk")]
    pub scale: String,
    #[arg(long)]
    pub seeds: Option<List<u64>>,
    #[arg(long = "N", alias = "n")]
    pub grid_sizes: Option<List<usize>>,
    #[arg(long)]
    pub steps: Option<usize>,
    #[arg(long)]
    pub substeps: Option<usize>,
    #[arg(long)]
    pub d0: Option<f64>,
    /// Force the first-binned-frame FD initial condition
    #[arg(long, conflicts_with = "init_patch")]
    pub init_from_frame0: bool,
    /// Force the analytic patch FD initial condition
    #[arg(long)]
    pub init_patch: bool,
    /// Also write each seed's trajectory (large at paper scale)
    #[arg(long)]
    pub save_trajectory: bool,
    #[arg(long)]
    pub out: PathBuf,
}

fn run(cli: Cli) -> Result<(), CliError> {
    let cfg = match &cli.config {
        Some(p) => ConfigFile::load(p)?,
        None => ConfigFile::default(),
    };
    let threads = match cli.threads {
        Some(n) => Some(n),
        None => cfg.get::<usize>("threads")?,
    };
    if let Some(n) = threads {
        if n == 0 {
            return Err(CliError::Usage("--threads must be at least 1".into()));
        }
        diffusion_core::par::set_threads(n).map_err(CliError::Usage)?;
    }
    match &cli.command {
        Command::MdRun(a) => commands::md_run(a, &cfg),
        Command::FdRun(a) => commands::fd_run(a, &cfg),
        Command::Bin(a) => commands::bin(a, &cfg),
        Command::Fit(a) => commands::fit(a, &cfg),
        Command::CostCurve(a) => commands::cost_curve(a, &cfg),
        Command::Msd(a) => commands::msd(a, &cfg),
        Command::Convert(a) => commands::convert(a),
        Command::AmpPlot(a) => commands::amp_plot(a),
        Command::Heatmap(a) => commands::heatmap(a),
        Command::Reproduce(a) => commands::reproduce(a, &cfg),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    env_logger::Builder::new()
        .filter_level(if cli.verbose { log::LevelFilter::Info } else { log::LevelFilter::Warn })
        .format_timestamp(None)
        .init();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.code())
        }
    }
}
