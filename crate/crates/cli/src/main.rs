use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, ValueEnum};
use gfsim::harness::{run_experiment, AlgorithmConfig, ExperimentConfig, RunOptions};
use gfsim::Error;

#[derive(Clone, Copy, Debug, ValueEnum)]
enum Algorithm {
    Ridge,
    Bic,
}

/// Monte Carlo sweep of device identification and multiuser detection.
#[derive(Debug, Parser)]
#[command(name = "simulate", version)]
struct Args {
    /// Experiment configuration (JSON).
    #[arg(long)]
    config: PathBuf,
    /// Metrics CSV output.
    #[arg(long)]
    out: PathBuf,
    /// Master seed, overriding `system.seed`.
    #[arg(long)]
    seed: Option<u64>,
    /// Trials per grid point, overriding `trials`.
    #[arg(long)]
    trials: Option<usize>,
    /// Algorithm with default parameters, unless the config already selects it.
    #[arg(long, value_enum)]
    algorithm: Option<Algorithm>,
    /// Comma-separated SNR grid in dB, overriding `sweep.snr_db`.
    #[arg(long, value_delimiter = ',', allow_hyphen_values = true)]
    snr_db: Option<Vec<f64>>,
    /// Provenance JSON output.
    #[arg(long)]
    emit_json: Option<PathBuf>,
    /// Worker threads.
    #[arg(long)]
    threads: Option<usize>,
    /// Keep rows already in the output CSV and skip their grid points.
    #[arg(long)]
    resume: bool,
}

const EXIT_FAILURE: u8 = 1;
const EXIT_CONFIG: u8 = 2;
const EXIT_IO: u8 = 3;

fn exit_code(e: &Error) -> u8 {
    match e {
        Error::Config(_) | Error::Serde(_) => EXIT_CONFIG,
        Error::Io { .. } => EXIT_IO,
        Error::Trial { source, .. } => exit_code(source),
        _ => EXIT_FAILURE,
    }
}

fn build_config(args: &Args) -> gfsim::Result<ExperimentConfig> {
    let mut cfg = ExperimentConfig::load(&args.config)?;
    if let Some(seed) = args.seed {
        cfg.system.seed = seed;
    }
    if let Some(t) = args.trials {
        cfg.trials = t;
    }
    if let Some(a) = args.algorithm {
        let name = match a {
            Algorithm::Ridge => "ridge",
            Algorithm::Bic => "bic",
        };
        if cfg.algorithm.name() != name {
            cfg.algorithm = AlgorithmConfig::from_name(name)?;
        }
    }
    if let Some(snr) = &args.snr_db {
        cfg.sweep.snr_db = snr.clone();
    }
    cfg.validate()?;
    Ok(cfg)
}

fn main() -> ExitCode {
    let args = Args::parse();
    let cfg = match build_config(&args) {
        Ok(c) => c,
        Err(e) => {
            eprintln!("simulate: {e}");
            // A missing or unreadable config file is a configuration problem
            // from the caller's point of view.
            return ExitCode::from(match e {
                Error::Io { .. } => EXIT_CONFIG,
                ref other => exit_code(other),
            });
        }
    };
    let opts = RunOptions {
        threads: args.threads,
        csv: Some(args.out.clone()),
        json: args.emit_json.clone(),
        resume: args.resume,
    };
    match run_experiment(&cfg, &opts) {
        Ok(rows) => {
            eprintln!("simulate: wrote {} rows to {}", rows.len(), args.out.display());
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("simulate: {e}");
            ExitCode::from(exit_code(&e))
        }
    }
}
