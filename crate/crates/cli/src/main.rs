use std::path::PathBuf;
use std::process::ExitCode;

use clap::Parser;

use fexpo_cli::config::{parse_real_list, Command, ExperimentConfig, Settings};
use fexpo_cli::error::CliResult;

/// Comma-separated reals as one flag value.
#[derive(Debug, Clone)]
struct RealList(Vec<f64>);

fn real_list(text: &str) -> Result<RealList, String> {
    parse_real_list(text).map(RealList)
}

/// Numerical experiments on exponential functionals of fractional Brownian
/// motion.
///
/// Exit status: 0 when every check passes, 1 when a check fails, 2 on
/// invalid input or I/O errors.
#[derive(Debug, Parser)]
#[command(name = "fexpo", version)]
struct Args {
    command: Command,
    /// JSON config; flags override its keys.
    #[arg(long)]
    config: PathBuf,
    #[arg(long)]
    h: Option<f64>,
    /// Hurst indices for kernel-check and malliavin-check.
    #[arg(long, value_parser = real_list)]
    h_list: Option<RealList>,
    #[arg(long, value_parser = real_list)]
    delta: Option<RealList>,
    #[arg(long, allow_negative_numbers = true)]
    a: Option<f64>,
    #[arg(long, allow_negative_numbers = true)]
    sigma: Option<f64>,
    #[arg(long)]
    t: Option<f64>,
    #[arg(long)]
    n: Option<usize>,
    /// Grid for the second-derivative check; must divide `n`.
    #[arg(long)]
    n_second: Option<usize>,
    #[arg(long)]
    paths: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long)]
    alpha: Option<f64>,
    #[arg(long)]
    quad_tol: Option<f64>,
    /// volterra, cholesky or circulant.
    #[arg(long)]
    generator: Option<String>,
    /// Also write `paths.bin` (simulate).
    #[arg(long)]
    write_paths: bool,
    /// clip01[:κ], cos, sigmoid[:κ] or const:c.
    #[arg(long)]
    test_function: Option<String>,
    /// Relative slack of the pathwise inequalities.
    #[arg(long)]
    tolerance: Option<f64>,
    #[arg(long, hide = true)]
    fault_ch_scale: Option<f64>,
}

impl Args {
    fn settings(&self) -> Settings {
        Settings {
            command: None,
            h: self.h,
            h_list: self.h_list.clone().map(|l| l.0),
            delta: self.delta.clone().map(|l| l.0),
            a: self.a,
            sigma: self.sigma,
            t: self.t,
            n: self.n,
            n_second: self.n_second,
            paths: self.paths,
            seed: self.seed,
            out: self.out.clone(),
            alpha: self.alpha,
            quad_tol: self.quad_tol,
            generator: self.generator.clone(),
            write_paths: self.write_paths.then_some(true),
            test_function: self.test_function.clone(),
            tolerance: self.tolerance,
            fault_ch_scale: self.fault_ch_scale,
        }
    }
}

fn main_inner(args: &Args) -> CliResult<bool> {
    fexpo_cli::init_threads()?;
    let text = std::fs::read_to_string(&args.config)?;
    let settings = Settings::from_json(&text)?.overlay(args.settings());
    let cfg = ExperimentConfig::resolve(args.command, settings)?;
    let (outcome, written) = fexpo_cli::run(&cfg)?;
    for p in written {
        eprintln!("wrote {}", p.display());
    }
    eprintln!("{}: {}", cfg.command, if outcome.passed { "PASS" } else { "FAIL" });
    Ok(outcome.passed)
}

fn main() -> ExitCode {
    let args = match Args::try_parse() {
        Ok(a) => a,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { 2 } else { 0 });
        }
    };
    match main_inner(&args) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(1),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(2)
        }
    }
}
