//! `tef`: reproducible experiment runs for the two-stage treatment-effect estimator.

mod commands;
mod config;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use tef_core::ErrorClass;

use crate::commands::Output;
use crate::config::ExperimentConfig;

#[derive(Debug)]
pub struct CliError {
    pub code: u8,
    pub message: String,
}

impl CliError {
    pub fn config(message: impl Into<String>) -> Self {
        CliError {
            code: 2,
            message: message.into(),
        }
    }

    pub fn data(message: impl Into<String>) -> Self {
        CliError {
            code: 3,
            message: message.into(),
        }
    }
}

impl From<tef_core::Error> for CliError {
    fn from(e: tef_core::Error) -> Self {
        let code = match e.class() {
            ErrorClass::Config => 2,
            ErrorClass::Data => 3,
            ErrorClass::Numeric => 4,
        };
        CliError {
            code,
            message: e.to_string(),
        }
    }
}

#[derive(Parser, Debug)]
#[command(name = "tef", version, about = "Two-stage kernel estimation of treatment effect functions")]
struct Cli {
    #[command(subcommand)]
    command: Command,

    /// Experiment configuration (TOML).
    #[arg(long, global = true)]
    config: Option<PathBuf>,

    /// Output directory; overrides `out_dir` from the config.
    #[arg(long, global = true)]
    out: Option<PathBuf>,

    /// Worker threads.
    #[arg(long, global = true, env = "TEF_THREADS")]
    threads: Option<usize>,

    /// Master seed; overrides `seed` from the config.
    #[arg(long, global = true)]
    seed: Option<u64>,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Generate a dataset and its metadata sidecar.
    Simulate,
    /// Fit an estimator and predict on a grid over the treatment domain.
    Fit {
        /// Dataset CSV; generated from `[dgp]` when omitted.
        #[arg(long)]
        data: Option<PathBuf>,
    },
    /// Run proxy validation and report every candidate.
    Select {
        #[arg(long)]
        data: Option<PathBuf>,
    },
    /// Multi-seed benchmark over methods and sample sizes.
    Bench,
    /// Convergence-rate or overlap sweep.
    Rates,
    /// Gram spectrum, effective dimension and eigendecay fit.
    Spectral {
        #[arg(long)]
        data: Option<PathBuf>,
    },
}

fn run(cli: Cli) -> Result<(), CliError> {
    let path = cli
        .config
        .ok_or_else(|| CliError::config("--config <path> is required"))?;
    let mut cfg = ExperimentConfig::load(&path)?;
    if let Some(seed) = cli.seed {
        cfg.seed = seed;
    }
    if let Some(out) = cli.out {
        cfg.out_dir = out;
    }
    if let Some(k) = cli.threads {
        if k == 0 {
            return Err(CliError::config("--threads must be at least 1"));
        }
        rayon::ThreadPoolBuilder::new()
            .num_threads(k)
            .build_global()
            .map_err(|e| CliError::config(format!("thread pool: {e}")))?;
    }
    // The output directory does not change results, so it stays out of the hash.
    let out_dir = std::mem::take(&mut cfg.out_dir);
    let out = Output::new(&out_dir, cfg.hash())?;
    match cli.command {
        Command::Simulate => commands::simulate(&cfg, &out),
        Command::Fit { data } => commands::fit(&cfg, &out, data.as_deref()),
        Command::Select { data } => commands::select(&cfg, &out, data.as_deref()),
        Command::Bench => commands::bench(&cfg, &out),
        Command::Rates => commands::rates(&cfg, &out),
        Command::Spectral { data } => commands::spectral(&cfg, &out, data.as_deref()),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {}", e.message);
            ExitCode::from(e.code)
        }
    }
}
