//! Experiment runners behind the `fexpo` binary.

pub mod commands;
pub mod config;
pub mod error;
pub mod report;

use std::path::PathBuf;

use config::{Command, ExperimentConfig};
use error::{CliError, CliResult};
use report::Outputs;

/// Environment variable capping the number of worker threads.
pub const THREADS_ENV: &str = "FEXPO_THREADS";

/// Result of one command.
#[derive(Debug, Clone, PartialEq)]
pub struct Outcome {
    /// False when a check of the command failed.
    pub passed: bool,
    pub outputs: Outputs,
}

/// Runs the configured command without touching the filesystem.
pub fn execute(cfg: &ExperimentConfig) -> CliResult<Outcome> {
    let (passed, outputs) = match cfg.command {
        Command::KernelCheck => {
            let (r, o) = commands::kernel_check::run(cfg)?;
            (r.passed, o)
        }
        Command::Simulate => {
            let (r, o) = commands::simulate::run(cfg)?;
            (r.passed, o)
        }
        Command::MalliavinCheck => {
            let (r, o) = commands::malliavin_check::run(cfg)?;
            (r.passed, o)
        }
        Command::DistanceSweep => {
            let (r, o) = commands::distance_sweep::run(cfg)?;
            (r.passed, o)
        }
    };
    Ok(Outcome { passed, outputs })
}

/// Runs the command and writes its files under `cfg.out`.
pub fn run(cfg: &ExperimentConfig) -> CliResult<(Outcome, Vec<PathBuf>)> {
    let outcome = execute(cfg)?;
    let written = outcome.outputs.write(&cfg.out)?;
    Ok((outcome, written))
}

/// Parses a thread cap as given in [`THREADS_ENV`].
pub fn parse_threads(value: &str) -> CliResult<usize> {
    match value.trim().parse::<usize>() {
        Ok(n) if n >= 1 => Ok(n),
        _ => Err(CliError::Config {
            field: "FEXPO_THREADS",
            reason: format!("expected a positive integer, got `{value}`"),
        }),
    }
}

/// Sizes the global worker pool from [`THREADS_ENV`], if set. Results do
/// not depend on the thread count.
pub fn init_threads() -> CliResult<()> {
    if let Ok(v) = std::env::var(THREADS_ENV) {
        let n = parse_threads(&v)?;
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .map_err(|e| CliError::Output(e.to_string()))?;
    }
    Ok(())
}
