use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};

mod commands;
mod config;
mod manifest;

/// Bad flags, config files or parameter values; exits with status 2.
#[derive(Debug)]
pub struct UsageError(pub String);

impl std::fmt::Display for UsageError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for UsageError {}

#[derive(Parser, Debug)]
#[command(
    name = "epr-revival",
    version,
    about = "Two-photon correlations, EPR products and entanglement revival"
)]
pub struct Cli {
    /// key = value configuration file; paper parameters when omitted
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Directory for CSV artifacts and the run manifest
    #[arg(long, global = true, default_value = ".")]
    out: PathBuf,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
pub enum Command {
    /// Derived crystal/pump parameters
    Params,
    /// Joint position distribution P(y_s, y_i; z)
    PositionDist {
        #[arg(long)]
        z_cm: f64,
    },
    /// Joint angle distribution P(θ_s, θ_i; z)
    AngleDist {
        #[arg(long)]
        z_cm: f64,
        #[arg(long, value_enum, default_value_t = AngleDistMethod::Quadrature)]
        method: AngleDistMethod,
    },
    /// Conditional uncertainty over the configured z range
    UncertaintyScan {
        #[arg(long, value_enum)]
        basis: ScanBasis,
        #[arg(long, value_enum, default_value_t = AngleEstimator::Stddev)]
        estimator: AngleEstimator,
    },
    /// EPR products in both bases over the configured z range
    EprScan,
    /// Entanglement loss and revival distances
    Revival {
        /// Place the turbulence plane of the config in the path
        #[arg(long)]
        turbulent: bool,
    },
    /// Conditional angle uncertainty and EPR product beyond the turbulence plane
    TurbulenceScan,
    /// Signal OAM spectrum beyond the turbulence plane
    OamSpectrum {
        #[arg(long)]
        z_cm: f64,
    },
    /// Synthetic frame stacks
    #[command(subcommand)]
    Frames(FramesCommand),
}

#[derive(Subcommand, Debug)]
pub enum FramesCommand {
    /// Generate a frame stack file
    Gen(GenArgs),
    /// Coincidence maps and fits from a frame stack file
    Analyze(AnalyzeArgs),
}

#[derive(Args, Debug)]
pub struct GenArgs {
    #[arg(long)]
    pub output: PathBuf,
    #[arg(long, default_value_t = 1000)]
    pub frames: usize,
    #[arg(long)]
    pub z_cm: f64,
    #[arg(long, default_value_t = 512)]
    pub width: u32,
    #[arg(long, default_value_t = 512)]
    pub height: u32,
    #[arg(long, default_value_t = 16.0)]
    pub pixel_pitch_um: f64,
    #[arg(long, default_value_t = 1.0)]
    pub magnification: f64,
    /// Mean pairs per frame
    #[arg(long, default_value_t = 10.0)]
    pub pair_rate: f64,
    /// Mean background counts per pixel per frame
    #[arg(long, default_value_t = 1e-4)]
    pub background_rate: f64,
    #[arg(long, default_value_t = 0.9)]
    pub qe: f64,
    /// Overrides the config seed
    #[arg(long)]
    pub seed: Option<u64>,
    /// Pass the pairs through the configured turbulence plane
    #[arg(long)]
    pub turbulent: bool,
}

#[derive(Args, Debug)]
pub struct AnalyzeArgs {
    #[arg(long)]
    pub input: PathBuf,
    #[arg(long, value_enum, default_value_t = Binning::Strips)]
    pub binning: Binning,
    #[arg(long, default_value_t = epr_revival::coincidence::DEFAULT_STRIP_HEIGHT)]
    pub strip_height: u32,
    #[arg(long, default_value_t = epr_revival::coincidence::DEFAULT_SECTORS)]
    pub sectors: usize,
    /// Skip the nonlinear fit
    #[arg(long)]
    pub no_fit: bool,
}

#[derive(ValueEnum, Clone, Copy, Debug, PartialEq, Eq)]
pub enum AngleDistMethod {
    Quadrature,
    ClosedForm,
}

#[derive(ValueEnum, Clone, Copy, Debug, PartialEq, Eq)]
pub enum ScanBasis {
    Position,
    Angle,
}

#[derive(ValueEnum, Clone, Copy, Debug, PartialEq, Eq)]
pub enum AngleEstimator {
    Stddev,
    Fwhm,
}

#[derive(ValueEnum, Clone, Copy, Debug, PartialEq, Eq)]
pub enum Binning {
    Strips,
    Sectors,
}

fn exit_code(err: &anyhow::Error) -> u8 {
    for cause in err.chain() {
        if cause.downcast_ref::<UsageError>().is_some() {
            return 2;
        }
        if let Some(e) = cause.downcast_ref::<epr_revival::Error>() {
            return match e {
                epr_revival::Error::ParameterDomain { .. } | epr_revival::Error::Config(_) => 2,
                _ => 1,
            };
        }
    }
    1
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    match commands::run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(exit_code(&e))
        }
    }
}
