//! `memoqcd`: feature-map search, training, density estimation and
//! evaluation from the command line.
//!
//! Exit codes: 0 on success, 1 on numerical or runtime failure, 2 on usage
//! errors (bad flags, unreadable inputs).

mod commands;
mod manifest;

use std::process::ExitCode;

use clap::{Parser, Subcommand};

use commands::{DatagenArgs, EstimateArgs, KldArgs, SearchArgs, TrainArgs};

#[derive(Parser, Debug)]
#[command(name = "memoqcd", version, about = "Quantum density estimation with searched feature maps")]
struct Cli {
    /// Worker threads for parallel sections.
    #[arg(long, global = true, env = "MEMOQCD_THREADS")]
    threads: Option<usize>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Search a feature-map circuit and write a model stub.
    QfmSearch(SearchArgs),
    /// Fit the training-state circuit of a model stub to a dataset.
    Train(TrainArgs),
    /// Evaluate a trained model at a point or on a grid.
    Estimate(EstimateArgs),
    /// KL divergence between a dataset and samples from the model.
    Kld(KldArgs),
    /// Write a synthetic 2-D dataset.
    Datagen(DatagenArgs),
}

#[derive(Debug)]
pub enum CliError {
    Usage(String),
    Failure(String),
}

impl CliError {
    fn code(&self) -> u8 {
        match self {
            CliError::Usage(_) => 2,
            CliError::Failure(_) => 1,
        }
    }
}

impl std::fmt::Display for CliError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            CliError::Usage(m) | CliError::Failure(m) => f.write_str(m),
        }
    }
}

impl From<memoqcd::Error> for CliError {
    fn from(e: memoqcd::Error) -> Self {
        use memoqcd::Error as E;
        match e {
            E::Diverged { .. } | E::NonFinite(_) | E::InvalidDensity(_) | E::Io(_) => CliError::Failure(e.to_string()),
            _ => CliError::Usage(e.to_string()),
        }
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        CliError::Failure(e.to_string())
    }
}

fn run(cli: Cli) -> Result<(), CliError> {
    if let Some(t) = cli.threads {
        if t == 0 {
            return Err(CliError::Usage("--threads must be at least 1".into()));
        }
        rayon::ThreadPoolBuilder::new()
            .num_threads(t)
            .build_global()
            .map_err(|e| CliError::Failure(e.to_string()))?;
    }
    match cli.command {
        Command::QfmSearch(a) => commands::qfm_search(&a),
        Command::Train(a) => commands::train(&a),
        Command::Estimate(a) => commands::estimate(&a),
        Command::Kld(a) => commands::kld(&a),
        Command::Datagen(a) => commands::datagen(&a),
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        // clap prints help and usage errors itself, exiting 0 or 2.
        Err(e) => e.exit(),
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.code())
        }
    }
}
