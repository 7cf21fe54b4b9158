//! `oamreg` command-line tool.

mod commands;
mod config;

use std::fmt;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

/// Environment variable overriding the worker-thread count.
pub const THREADS_ENV: &str = "OAMREG_THREADS";

#[derive(Debug, Parser)]
#[command(name = "oamreg", version, about = "Reconstruct OAM superposition states from intensity images")]
pub struct Cli {
    /// Master seed for sampling, splits and tree building.
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Output directory.
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,
    /// TOML config file; flags override its values.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Simulate a dataset of random states and their images.
    Gen(GenArgs),
    /// Fit PCA compressor(s) and a regressor on a dataset.
    Train(TrainArgs),
    /// Score a model on a dataset's test split.
    Eval(EvalArgs),
    /// Mean fidelity against the number of latent dimensions.
    Sweep(SweepArgs),
    /// Single versus pair images, scored against true and flipped states.
    Symmetry(SymmetryArgs),
    /// Circle fits of the qubit family in a 3-dimensional latent space.
    Geometry(GeometryArgs),
    /// Build a dataset from image files listed in a TOML manifest.
    Ingest(IngestArgs),
    /// Print the tool version, or the manifest of a dataset or model.
    Info(InfoArgs),
}

#[derive(Debug, Args)]
pub struct GenArgs {
    /// Dimension; selects the symmetric basis when --basis is absent.
    #[arg(long)]
    pub dim: Option<usize>,
    /// Azimuthal indices, e.g. -3,-1,1,3.
    #[arg(long, allow_hyphen_values = true)]
    pub basis: Option<String>,
    #[arg(long)]
    pub samples: Option<usize>,
    /// single | pair
    #[arg(long)]
    pub mode: Option<String>,
    /// uniform-box | haar
    #[arg(long)]
    pub sampler: Option<String>,
    #[arg(long)]
    pub train_fraction: Option<f64>,
    /// Image side in pixels.
    #[arg(long)]
    pub grid: Option<usize>,
    /// Half side of the imaged window, in waist units.
    #[arg(long)]
    pub halfwidth: Option<f64>,
    #[arg(long)]
    pub waist: Option<f64>,
    #[arg(long)]
    pub wavenumber: Option<f64>,
    #[arg(long, allow_hyphen_values = true)]
    pub plane_z: Option<f64>,
    #[arg(long)]
    pub supersample: Option<usize>,
    /// Gaussian noise std relative to the image maximum.
    #[arg(long)]
    pub noise_sigma: Option<f64>,
    /// Expected photon count per image for shot noise.
    #[arg(long)]
    pub poisson_scale: Option<f64>,
    /// Std of the beam-centre jitter in pixels.
    #[arg(long)]
    pub jitter: Option<f64>,
}

#[derive(Debug, Args, Default)]
pub struct FitArgs {
    /// linear | etr
    #[arg(long)]
    pub regressor: Option<String>,
    /// Ridge penalty for the linear regressor.
    #[arg(long)]
    pub ridge: Option<f64>,
    /// dual | joint
    #[arg(long)]
    pub compressor: Option<String>,
    #[arg(long)]
    pub trees: Option<usize>,
    #[arg(long)]
    pub min_samples_split: Option<usize>,
    #[arg(long)]
    pub max_depth: Option<usize>,
    #[arg(long)]
    pub candidate_features: Option<usize>,
}

#[derive(Debug, Args)]
pub struct TrainArgs {
    /// Dataset directory.
    #[arg(long)]
    pub data: Option<PathBuf>,
    /// single | pair
    #[arg(long)]
    pub mode: Option<String>,
    #[arg(long, conflicts_with = "latent_total")]
    pub latent_per_channel: Option<usize>,
    /// Total latent dimensions, split between channels; default d²−1.
    #[arg(long)]
    pub latent_total: Option<usize>,
    #[command(flatten)]
    pub fit: FitArgs,
}

#[derive(Debug, Args)]
pub struct EvalArgs {
    #[arg(long)]
    pub model: Option<PathBuf>,
    #[arg(long)]
    pub data: Option<PathBuf>,
    /// correct | flipped
    #[arg(long)]
    pub against: Option<String>,
    /// Write predictions only; works on unlabeled datasets.
    #[arg(long)]
    pub predict_only: bool,
}

#[derive(Debug, Args)]
pub struct SweepArgs {
    #[arg(long)]
    pub data: Option<PathBuf>,
    /// Total latent dimensions, e.g. 1-15 or 1,5,15.
    #[arg(long)]
    pub dims: Option<String>,
    /// Comma separated image modes.
    #[arg(long)]
    pub modes: Option<String>,
    /// Comma separated regressors.
    #[arg(long)]
    pub regressors: Option<String>,
    #[command(flatten)]
    pub fit: FitArgs,
}

#[derive(Debug, Args)]
pub struct SymmetryArgs {
    #[arg(long)]
    pub data: Option<PathBuf>,
    /// Total latent dimensions for both modes; default d²−1.
    #[arg(long)]
    pub dims: Option<usize>,
    #[command(flatten)]
    pub fit: FitArgs,
}

#[derive(Debug, Args)]
pub struct GeometryArgs {
    /// Comma separated angles such as pi/2,3pi/4.
    #[arg(long)]
    pub thetas: Option<String>,
    #[arg(long)]
    pub phi_samples: Option<usize>,
    #[arg(long)]
    pub grid: Option<usize>,
    #[arg(long)]
    pub halfwidth: Option<f64>,
}

#[derive(Debug, Args)]
pub struct IngestArgs {
    /// TOML manifest listing the images.
    #[arg(long)]
    pub manifest: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct InfoArgs {
    /// Dataset or model directory.
    pub path: Option<PathBuf>,
}

#[derive(Debug)]
pub enum CliError {
    Core(oamreg::Error),
    Config(String),
    Usage(String),
    Io(String),
}

impl CliError {
    pub fn category(&self) -> &'static str {
        match self {
            CliError::Core(e) => e.category(),
            CliError::Config(_) => "config",
            CliError::Usage(_) => "usage",
            CliError::Io(_) => "io",
        }
    }

    fn exit_code(&self) -> u8 {
        match self {
            CliError::Usage(_) => 2,
            _ => 1,
        }
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CliError::Core(e) => write!(f, "{e}"),
            CliError::Config(m) | CliError::Usage(m) | CliError::Io(m) => f.write_str(m),
        }
    }
}

impl From<oamreg::Error> for CliError {
    fn from(e: oamreg::Error) -> Self {
        CliError::Core(e)
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            use clap::error::ErrorKind;
            if matches!(e.kind(), ErrorKind::DisplayHelp | ErrorKind::DisplayVersion) {
                print!("{e}");
                return ExitCode::SUCCESS;
            }
            let first = e.to_string();
            let first = first.lines().next().unwrap_or("").trim_start_matches("error: ");
            return fail(&CliError::Usage(first.to_string()));
        }
    };
    match commands::run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => fail(&e),
    }
}

fn fail(e: &CliError) -> ExitCode {
    let msg = e.to_string().replace('\n', " ");
    eprintln!("error: {}: {msg}", e.category());
    ExitCode::from(e.exit_code())
}
