//! Operator-facing command line for the pose diffusion lab.
//!
//! Every run resolves its configuration from defaults, then an optional
//! declarative TOML file, then command-line overrides, and snapshots the
//! result next to its outputs. All randomness flows from a single
//! `--seed`; `--workers` only sets the thread pool and never changes any
//! output byte. Wall-clock telemetry goes to a sidecar file so result
//! files stay deterministic.

mod commands;
mod config;

use clap::{Parser, Subcommand};
use std::path::PathBuf;
use std::process::ExitCode;

/// Exit codes: 0 success, 2 config error, 3 data error, 4 numerical failure.
#[derive(Debug)]
pub enum CliError {
    Config(Vec<String>),
    Data(String),
    Numerical(String),
}

impl CliError {
    fn code(&self) -> u8 {
        match self {
            CliError::Config(_) => 2,
            CliError::Data(_) => 3,
            CliError::Numerical(_) => 4,
        }
    }

    fn config(msg: impl Into<String>) -> Self {
        CliError::Config(vec![msg.into()])
    }
}

pub type CliResult<T> = Result<T, CliError>;

#[derive(Parser)]
#[command(name = "gpdm", version, about = "Generative pose estimation lab")]
struct Cli {
    /// Declarative TOML config; flags override file values.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Master seed governing every random draw.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Worker threads; affects speed only, never results.
    #[arg(long, global = true)]
    workers: Option<usize>,
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Generate a synthetic dataset plus its manifest.
    GenData(commands::gen_data::Args),
    /// Train a score or energy checkpoint on a dataset.
    Train(commands::train::Args),
    /// Estimate poses for a dataset and write predictions plus a report.
    Estimate(commands::estimate::Args),
    /// Track a trajectory file frame by frame.
    Track(commands::track::Args),
    /// Audit energy ranking against ODE-likelihood ranking (Kendall tau-b).
    LikelihoodCheck(commands::likelihood::Args),
    /// Sweep K, delta, and ranking modes into ablation tables.
    Ablate(commands::ablate::Args),
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let file = match config::FileConfig::load(cli.config.as_deref()) {
        Ok(f) => f,
        Err(e) => {
            eprintln!("error: config: {e}");
            return ExitCode::from(2);
        }
    };
    let common = config::Common {
        seed: cli.seed.or(file.common.as_ref().and_then(|c| c.seed)).unwrap_or(0),
        workers: cli.workers.or(file.common.as_ref().and_then(|c| c.workers)),
    };
    if let Some(n) = common.workers {
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(n).build_global() {
            eprintln!("error: config: worker pool: {e}");
            return ExitCode::from(2);
        }
    }
    let result = match cli.cmd {
        Cmd::GenData(args) => commands::gen_data::run(args, &file, &common),
        Cmd::Train(args) => commands::train::run(args, &file, &common),
        Cmd::Estimate(args) => commands::estimate::run(args, &file, &common),
        Cmd::Track(args) => commands::track::run(args, &file, &common),
        Cmd::LikelihoodCheck(args) => commands::likelihood::run(args, &file, &common),
        Cmd::Ablate(args) => commands::ablate::run(args, &file, &common),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            match &e {
                CliError::Config(violations) => {
                    for v in violations {
                        eprintln!("error: config: {v}");
                    }
                }
                CliError::Data(msg) => eprintln!("error: data: {msg}"),
                CliError::Numerical(msg) => eprintln!("error: numerical: {msg}"),
            }
            ExitCode::from(e.code())
        }
    }
}
