//! `moodlens`: runs the mood-prediction pipeline one stage at a time.
//!
//! Every stage reads the artifacts of earlier stages from the data directory
//! and writes its own, so stages can be rerun and inspected independently.
//! Success prints one JSON line to stdout; failure prints one JSON error
//! line to stderr and exits non-zero.

mod config;
mod error;
mod stages;

use std::path::PathBuf;
use std::process::ExitCode;

use chrono::NaiveDate;
use clap::{Parser, Subcommand};

use config::{ModelChoice, Overrides, RunConfig, DATA_DIR_ENV};
use error::CliError;

#[derive(Debug, Parser)]
#[command(name = "moodlens", version, about = "Explainable mood prediction from personal tracking data")]
struct Cli {
    /// Run configuration (TOML). Defaults apply when omitted.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Seed for data generation and network initialization.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Data directory for all artifacts.
    #[arg(long, global = true, env = DATA_DIR_ENV)]
    out: Option<PathBuf>,
    /// Name of the predicted daily series.
    #[arg(long, global = true)]
    target: Option<String>,
    #[arg(long, global = true, value_enum)]
    model: Option<ModelChoice>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Generate a synthetic dataset with known ground truth.
    Synth,
    /// Read the manifest's CSV sources into the canonical store.
    Import,
    /// Aggregate to a daily feature matrix and drop sparse features and days.
    Featurize,
    /// Correlate every feature with the target, with FDR-adjusted p-values.
    Correlate,
    /// Fit the elastic net and/or the MLP.
    Train,
    /// Predict the target for one day.
    Predict {
        /// Day to predict; defaults to the latest day in the feature matrix.
        #[arg(long)]
        date: Option<NaiveDate>,
    },
    /// Render per-feature contribution charts for one day.
    Explain {
        #[arg(long)]
        date: Option<NaiveDate>,
    },
    /// Render the target time series and the strongest correlations.
    Plot,
    /// Write the weight and correlation tables.
    Report,
}

fn run(cli: Cli) -> Result<stages::StageOutput, CliError> {
    let overrides = Overrides {
        data_dir: cli.out,
        seed: cli.seed,
        target: cli.target,
        model: cli.model,
    };
    let config = RunConfig::load(cli.config.as_deref(), overrides)?;
    match cli.command {
        Command::Synth => stages::synth(&config),
        Command::Import => stages::import(&config),
        Command::Featurize => stages::featurize(&config),
        Command::Correlate => stages::correlate(&config),
        Command::Train => stages::train(&config),
        Command::Predict { date } => stages::predict(&config, date),
        Command::Explain { date } => stages::explain(&config, date),
        Command::Plot => stages::plot(&config),
        Command::Report => stages::report(&config),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(output) => {
            println!("{}", serde_json::to_string(&output).expect("stage output serializes"));
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("{}", e.to_json_line());
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
