//! Command-line workflow for encforge: synthesize data, train, sweep latent
//! codes, score disentanglement and rationality, and serve a trained model
//! over local HTTP.

pub mod commands;
pub mod config;
pub mod serve;

use std::fmt;
use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};

/// Errors carry the process exit code: 2 for usage and configuration
/// problems, 1 for everything that fails at run time.
#[derive(Debug)]
pub enum CliError {
    Config(String),
    Runtime(anyhow::Error),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config(_) => 2,
            CliError::Runtime(_) => 1,
        }
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CliError::Config(m) => write!(f, "configuration error: {m}"),
            CliError::Runtime(e) => write!(f, "{e:#}"),
        }
    }
}

impl std::error::Error for CliError {}

impl From<encforge::Error> for CliError {
    fn from(e: encforge::Error) -> Self {
        match e {
            encforge::Error::Config(m) => CliError::Config(m),
            other => CliError::Runtime(other.into()),
        }
    }
}

impl From<anyhow::Error> for CliError {
    fn from(e: anyhow::Error) -> Self {
        CliError::Runtime(e)
    }
}

#[derive(Debug, Parser)]
#[command(
    name = "encforge",
    version,
    about = "Sequence-VAE toolkit for two-vehicle encounters"
)]
pub struct Cli {
    #[command(flatten)]
    pub global: Global,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Clone, Args)]
pub struct Global {
    /// TOML file with settings for the subcommand.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Override one setting, e.g. `--set beta=4`. Repeatable.
    #[arg(long = "set", value_name = "KEY=VALUE", global = true)]
    pub overrides: Vec<String>,
    /// Random seed; falls back to ENCFORGE_SEED.
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Output directory.
    #[arg(long, global = true, default_value = "out")]
    pub out: PathBuf,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Generate a synthetic encounter dataset (CSV + manifest).
    Synth(commands::SynthArgs),
    /// Train a model on a dataset CSV.
    Train(commands::TrainArgs),
    /// Decode a sweep of one latent code.
    Sweep(commands::SweepArgs),
    /// Run the disentanglement scan, variance ratios and prior metric.
    Disentangle(commands::DisentangleArgs),
    /// Distance, speed and direction profiles of one encounter.
    Rationality(commands::RationalityArgs),
    /// Serve a checkpoint over local HTTP.
    Serve(commands::ServeArgs),
}

pub fn run(cli: Cli) -> Result<(), CliError> {
    let g = &cli.global;
    match cli.command {
        Command::Synth(a) => commands::synth(g, &a),
        Command::Train(a) => commands::train(g, &a),
        Command::Sweep(a) => commands::sweep(g, &a),
        Command::Disentangle(a) => commands::disentangle(g, &a),
        Command::Rationality(a) => commands::rationality(g, &a),
        Command::Serve(a) => commands::serve(g, &a),
    }
}
