//! Batch front end for training, interpreting and testing a tabular
//! classifier for individual discrimination. The `fairtest` binary is a
//! thin wrapper around [`run`].
//!
//! Exit codes: 0 success, 2 configuration error, 3 no discrimination found,
//! 4 runtime failure.

pub mod artifacts;
mod commands;
pub mod config;
mod report;

use clap::{Parser, Subcommand};
use std::fmt;
use std::path::PathBuf;

use config::Overrides;

#[derive(Parser)]
#[command(name = "fairtest", version, about = "White-box individual-fairness testing for dense classifiers")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
    /// Suppress progress logging.
    #[arg(long, global = true)]
    pub quiet: bool,
    /// Worker threads (default: all cores). Results do not depend on it.
    #[arg(long, global = true)]
    pub workers: Option<usize>,
}

#[derive(Subcommand)]
pub enum Command {
    /// Train a classifier on the configured dataset.
    Train(RunArgs),
    /// Per-layer AS curves and biased neurons of the trained model.
    Interpret(RunArgs),
    /// Global and local search for discriminatory instances.
    Generate {
        #[command(flatten)]
        run: RunArgs,
        /// Record wall time in provenance.json (makes it non-reproducible).
        #[arg(long)]
        timing: bool,
    },
    /// GSR, diversity, DM-RS and coverage against a random-walk baseline.
    Evaluate(RunArgs),
    /// Retrain on a sample of the generated instances and compare fairness.
    Retrain(RunArgs),
    /// Human-readable summary of whatever artifacts exist.
    Report(RunArgs),
    /// Write a synthetic census-style dataset, schema and config.
    Synth {
        /// Directory to create the files in.
        dir: PathBuf,
        #[arg(long, default_value_t = 8000)]
        rows: usize,
        /// Weight of the sensitive attribute in the label.
        #[arg(long, default_value_t = 2.0)]
        bias: f64,
        #[arg(long, default_value_t = 1)]
        seed: u64,
    },
}

#[derive(clap::Args)]
pub struct RunArgs {
    /// Run configuration (JSON).
    pub config: PathBuf,
    #[command(flatten)]
    pub overrides: Overrides,
}

/// Why a command stopped.
#[derive(Debug)]
pub enum Failure {
    Config(String),
    /// Nothing to act on, e.g. the model shows no discrimination.
    Advisory(String),
    Runtime(anyhow::Error),
}

impl Failure {
    pub fn exit_code(&self) -> u8 {
        match self {
            Failure::Config(_) => 2,
            Failure::Advisory(_) => 3,
            Failure::Runtime(_) => 4,
        }
    }
}

impl fmt::Display for Failure {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Failure::Config(m) => write!(f, "configuration error: {m}"),
            Failure::Advisory(m) => write!(f, "{m}"),
            Failure::Runtime(e) => write!(f, "error: {e:#}"),
        }
    }
}

macro_rules! runtime_from {
    ($($t:ty),*) => {$(
        impl From<$t> for Failure {
            fn from(e: $t) -> Self {
                Failure::Runtime(e.into())
            }
        }
    )*};
}

runtime_from!(
    anyhow::Error,
    std::io::Error,
    fairtest::data::DataError,
    fairtest::nn::NnError,
    fairtest::interpret::InterpretError,
    fairtest::generate::GenerateError,
    fairtest::metrics::MetricsError
);

/// Runs one parsed command. Logging and the worker pool are left to the
/// caller.
pub fn run(cli: Cli) -> Result<(), Failure> {
    match cli.command {
        Command::Train(a) => commands::load(&a.config, &a.overrides).and_then(|c| commands::train(&c)),
        Command::Interpret(a) => commands::load(&a.config, &a.overrides).and_then(|c| commands::interpret(&c)),
        Command::Generate { run, timing } => {
            commands::load(&run.config, &run.overrides).and_then(|c| commands::generate(&c, timing))
        }
        Command::Evaluate(a) => commands::load(&a.config, &a.overrides).and_then(|c| commands::evaluate(&c)),
        Command::Retrain(a) => commands::load(&a.config, &a.overrides).and_then(|c| commands::retrain(&c)),
        Command::Report(a) => commands::load(&a.config, &a.overrides).and_then(|c| commands::report(&c)),
        Command::Synth { dir, rows, bias, seed } => commands::synth(&dir, rows, bias, seed),
    }
}

/// Parses `args` (program name first) and runs the command.
pub fn run_args<I, T>(args: I) -> Result<(), Failure>
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = Cli::try_parse_from(args).map_err(|e| Failure::Config(e.to_string()))?;
    run(cli)
}
