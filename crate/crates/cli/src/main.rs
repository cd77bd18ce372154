use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

mod commands;
mod config;
mod error;
mod output;

use config::ExperimentConfig;
use error::CliError;
use output::Writer;

#[derive(Parser)]
#[command(name = "randtomo", version, about = "Random-field quantum state tomography experiments")]
struct Cli {
    /// JSON experiment config.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Overrides the config seed.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Overrides the config output directory.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Worker threads for parallel sections (default: all cores).
    #[arg(long, global = true)]
    threads: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Sample pulses and write pulse files, expectation traces and records.
    Simulate,
    /// Reconstruct a state from records.
    Reconstruct {
        /// `records.json` written by `simulate`.
        #[arg(long)]
        records: Option<PathBuf>,
        /// Simulate the configured protocol and state, then reconstruct.
        #[arg(long)]
        end_to_end: bool,
        /// State to compare against.
        #[arg(long)]
        reference: Option<PathBuf>,
    },
    /// Dynamical Lie algebra dimension of the configured system.
    Controllability,
    /// Statistics of the measurement-matrix inverse norm versus pulse length.
    Conditioning,
    /// Optimize a preparation pulse or a tomography pulse set.
    Optimize,
}

fn run(cli: Cli) -> Result<(), CliError> {
    let mut cfg = match &cli.config {
        Some(path) => ExperimentConfig::load(path)?,
        None => ExperimentConfig::parse(r#"{"schema_version": 1}"#)?,
    };
    if let Some(seed) = cli.seed {
        cfg.seed = seed;
    }
    if let Some(out) = &cli.out {
        cfg.output_dir = out.clone();
    }
    if let Some(n) = cli.threads {
        if n == 0 {
            return Err(CliError::Config("--threads must be at least 1".into()));
        }
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .map_err(|e| CliError::Config(e.to_string()))?;
    }
    let resolved = cfg.resolve()?;
    let writer = Writer::new(&cfg.output_dir, cfg.hash(), cfg.seed)?;
    match &cli.command {
        Command::Simulate => commands::simulate(&cfg, &resolved, &writer),
        Command::Reconstruct { records, end_to_end, reference } => commands::reconstruct(
            &cfg,
            &resolved,
            &writer,
            commands::ReconstructArgs { records: records.as_deref(), end_to_end: *end_to_end, reference: reference.as_deref() },
        ),
        Command::Controllability => commands::controllability(&resolved, &writer),
        Command::Conditioning => commands::conditioning(&cfg, &resolved, &writer),
        Command::Optimize => commands::optimize(&resolved, &writer),
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("randtomo: {e}");
            e.exit_code()
        }
    }
}
