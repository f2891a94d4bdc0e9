//! Command-line experiment runner for the Geometric Langevin Algorithm.

pub mod config;
pub mod experiments;
pub mod output;

use std::path::PathBuf;

use clap::{Parser, Subcommand};

use gla_core::GlaError;

pub use config::{parse_config, ConfigError, Experiment, ExperimentConfig, RawConfig};
pub use experiments::{compute, run_experiment, Diverged, Outcome};

#[derive(Debug, Parser)]
#[command(name = "gla", version, about = "Geometric Langevin Algorithm experiments")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Clone, clap::Args)]
pub struct ExperimentArgs {
    /// JSON file with flat keys; flags take precedence.
    #[arg(long, short)]
    pub config: Option<PathBuf>,
    #[command(flatten)]
    pub flags: RawConfig,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Stationary covariance on the unit oscillator: Lyapunov vs Monte Carlo.
    HarmonicCovariance(ExperimentArgs),
    /// Error in the q² time average per step size.
    Table1(ExperimentArgs),
    /// Pathwise convergence on coupled noise.
    StrongOrder(ExperimentArgs),
    /// Local energy error and global error on the oscillator.
    EnergyOrder(ExperimentArgs),
    /// Total variation between stationary and Gibbs laws on the oscillator.
    TvCurve(ExperimentArgs),
    /// A thinned trajectory.
    Sample(ExperimentArgs),
}

impl Command {
    pub fn into_parts(self) -> (Experiment, ExperimentArgs) {
        match self {
            Command::HarmonicCovariance(a) => (Experiment::HarmonicCovariance, a),
            Command::Table1(a) => (Experiment::Table1, a),
            Command::StrongOrder(a) => (Experiment::StrongOrder, a),
            Command::EnergyOrder(a) => (Experiment::EnergyOrder, a),
            Command::TvCurve(a) => (Experiment::TvCurve, a),
            Command::Sample(a) => (Experiment::Sample, a),
        }
    }
}

pub const EXIT_CONFIG: u8 = 2;
pub const EXIT_DIVERGENCE: u8 = 3;
pub const EXIT_NUMERIC: u8 = 4;

/// Exit status for a failed run.
pub fn exit_code(err: &anyhow::Error) -> u8 {
    for cause in err.chain() {
        if cause.is::<ConfigError>() {
            return EXIT_CONFIG;
        }
        if cause.is::<Diverged>() {
            return EXIT_DIVERGENCE;
        }
        if let Some(e) = cause.downcast_ref::<GlaError>() {
            return match e {
                GlaError::InvalidInput(_) | GlaError::DimensionMismatch { .. } | GlaError::NotSpd(_) => EXIT_CONFIG,
                GlaError::NonFiniteState { .. } => EXIT_DIVERGENCE,
                _ => EXIT_NUMERIC,
            };
        }
    }
    1
}

/// Parses the configuration of a command; the subcommand names the experiment.
pub fn resolve_command(command: Command) -> anyhow::Result<ExperimentConfig> {
    let (experiment, args) = command.into_parts();
    let flags = RawConfig { experiment: Some(experiment), ..args.flags };
    parse_config(args.config.as_deref(), flags)
}

/// Full run: parse, compute, write.
pub fn run(cli: Cli) -> anyhow::Result<(ExperimentConfig, Outcome)> {
    let config = resolve_command(cli.command)?;
    let outcome = run_experiment(&config)?;
    Ok((config, outcome))
}
