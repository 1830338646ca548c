//! Experiment configuration: one JSON document, with every command-line
//! flag overriding the key of the same name.

use std::fmt;
use std::path::PathBuf;

use clap::ValueEnum;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use fexpo_core::fbm::GeneratorKind;
use fexpo_core::stats::TestFunction;

use crate::error::{CliError, CliResult};

/// Largest grid accepted for path simulation (weights are `n × n`).
pub const MAX_STEPS: usize = 4096;
/// Largest grid for the second derivative, whose operator is `O(n^3)`.
pub const MAX_SECOND_STEPS: usize = 128;
pub const MAX_PATHS: usize = 100_000_000;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, ValueEnum)]
#[serde(rename_all = "kebab-case")]
pub enum Command {
    KernelCheck,
    Simulate,
    MalliavinCheck,
    DistanceSweep,
}

impl fmt::Display for Command {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Command::KernelCheck => "kernel-check",
            Command::Simulate => "simulate",
            Command::MalliavinCheck => "malliavin-check",
            Command::DistanceSweep => "distance-sweep",
        })
    }
}

/// Raw settings from the config file or the command line. Every key is
/// optional; missing keys fall back to per-command defaults.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Settings {
    pub command: Option<Command>,
    pub h: Option<f64>,
    pub h_list: Option<Vec<f64>>,
    pub delta: Option<Vec<f64>>,
    pub a: Option<f64>,
    pub sigma: Option<f64>,
    pub t: Option<f64>,
    pub n: Option<usize>,
    pub n_second: Option<usize>,
    pub paths: Option<usize>,
    pub seed: Option<u64>,
    pub out: Option<PathBuf>,
    pub alpha: Option<f64>,
    pub quad_tol: Option<f64>,
    pub generator: Option<String>,
    pub write_paths: Option<bool>,
    pub test_function: Option<String>,
    pub tolerance: Option<f64>,
    /// Test hook: multiplies the calibrated `c_H` by this factor.
    pub fault_ch_scale: Option<f64>,
}

impl Settings {
    pub fn from_json(text: &str) -> CliResult<Self> {
        serde_json::from_str(text).map_err(|e| CliError::Config {
            field: "config",
            reason: e.to_string(),
        })
    }

    /// Keys set in `over` replace those in `self`.
    pub fn overlay(self, over: Settings) -> Settings {
        Settings {
            command: over.command.or(self.command),
            h: over.h.or(self.h),
            h_list: over.h_list.or(self.h_list),
            delta: over.delta.or(self.delta),
            a: over.a.or(self.a),
            sigma: over.sigma.or(self.sigma),
            t: over.t.or(self.t),
            n: over.n.or(self.n),
            n_second: over.n_second.or(self.n_second),
            paths: over.paths.or(self.paths),
            seed: over.seed.or(self.seed),
            out: over.out.or(self.out),
            alpha: over.alpha.or(self.alpha),
            quad_tol: over.quad_tol.or(self.quad_tol),
            generator: over.generator.or(self.generator),
            write_paths: over.write_paths.or(self.write_paths),
            test_function: over.test_function.or(self.test_function),
            tolerance: over.tolerance.or(self.tolerance),
            fault_ch_scale: over.fault_ch_scale.or(self.fault_ch_scale),
        }
    }
}

/// Comma-separated list of finite reals, as taken by `--delta`.
pub fn parse_real_list(text: &str) -> Result<Vec<f64>, String> {
    let text = text.trim();
    if text.is_empty() {
        return Err("empty list".into());
    }
    text.split(',')
        .map(|item| {
            let item = item.trim();
            match item.parse::<f64>() {
                Ok(v) if v.is_finite() => Ok(v),
                _ => Err(format!("`{item}` is not a finite number")),
            }
        })
        .collect()
}

/// Validated configuration. `out` is excluded from serialization so the
/// config hash, and every file that embeds the config, does not depend on
/// where the outputs go.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ExperimentConfig {
    pub command: Command,
    pub h: f64,
    pub h_list: Vec<f64>,
    pub delta: Vec<f64>,
    pub a: f64,
    pub sigma: f64,
    pub t: f64,
    pub n: usize,
    pub n_second: usize,
    pub paths: usize,
    pub seed: u64,
    #[serde(skip)]
    pub out: PathBuf,
    pub alpha: f64,
    pub quad_tol: f64,
    #[serde(serialize_with = "display")]
    pub generator: GeneratorKind,
    pub write_paths: bool,
    pub test_function: TestFunction,
    pub tolerance: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub fault_ch_scale: Option<f64>,
}

fn display<S: serde::Serializer, T: fmt::Display>(v: &T, s: S) -> Result<S::Ok, S::Error> {
    s.collect_str(v)
}

fn bad(field: &'static str, reason: impl Into<String>) -> CliError {
    CliError::Config {
        field,
        reason: reason.into(),
    }
}

fn check_hurst(field: &'static str, v: f64) -> CliResult<f64> {
    if v.is_finite() && v > 0.0 && v < 1.0 {
        Ok(v)
    } else {
        Err(bad(field, format!("Hurst index must lie in (0, 1), got {v}")))
    }
}

impl ExperimentConfig {
    /// Applies per-command defaults and validates every field.
    pub fn resolve(command: Command, s: Settings) -> CliResult<Self> {
        if let Some(c) = s.command {
            if c != command {
                return Err(bad("command", format!("config file is for `{c}`, invoked as `{command}`")));
            }
        }
        let pathwise = command == Command::MalliavinCheck;
        let h = check_hurst("h", s.h.unwrap_or(0.4))?;
        let h_list = s.h_list.unwrap_or_else(|| vec![0.3, 0.5, 0.7]);
        if h_list.is_empty() {
            return Err(bad("h_list", "needs at least one Hurst index"));
        }
        for v in &h_list {
            check_hurst("h_list", *v)?;
        }
        let delta = s.delta.unwrap_or_else(|| vec![0.05, 0.1, 0.2]);
        if delta.is_empty() {
            return Err(bad("delta", "needs at least one value"));
        }
        for d in &delta {
            if !(d.is_finite() && *d >= 0.0) {
                return Err(bad("delta", format!("values must be finite and >= 0, got {d}")));
            }
            if command == Command::DistanceSweep {
                check_hurst("delta", h + d).map_err(|_| bad("delta", format!("h + delta = {} leaves (0, 1)", h + d)))?;
            }
        }
        let a = s.a.unwrap_or(if pathwise { 0.5 } else { 0.0 });
        if !a.is_finite() {
            return Err(bad("a", format!("must be finite, got {a}")));
        }
        let sigma = s.sigma.unwrap_or(1.0);
        if !sigma.is_finite() {
            return Err(bad("sigma", format!("must be finite, got {sigma}")));
        }
        if sigma == 0.0 && matches!(command, Command::MalliavinCheck | Command::DistanceSweep) {
            return Err(bad(
                "sigma",
                "must be nonzero: the Malliavin derivative and its energy vanish at sigma = 0",
            ));
        }
        let t = s.t.unwrap_or(1.0);
        if !(t.is_finite() && t > 0.0) {
            return Err(bad("t", format!("horizon must be positive, got {t}")));
        }
        let n = s.n.unwrap_or(if pathwise { 256 } else { 512 });
        if !(2..=MAX_STEPS).contains(&n) {
            return Err(bad("n", format!("grid steps must lie in [2, {MAX_STEPS}], got {n}")));
        }
        let n_second = s.n_second.unwrap_or(64.min(n));
        if !(2..=MAX_SECOND_STEPS).contains(&n_second) {
            return Err(bad("n_second", format!("must lie in [2, {MAX_SECOND_STEPS}], got {n_second}")));
        }
        if pathwise && !n.is_multiple_of(n_second) {
            return Err(bad("n_second", format!("must divide n = {n}, got {n_second}")));
        }
        let paths = s.paths.unwrap_or(if pathwise { 10_000 } else { 100_000 });
        if !(1..=MAX_PATHS).contains(&paths) {
            return Err(bad("paths", format!("must lie in [1, {MAX_PATHS}], got {paths}")));
        }
        let alpha = s.alpha.unwrap_or(0.01);
        if !(alpha > 0.0 && alpha < 1.0) {
            return Err(bad("alpha", format!("must lie in (0, 1), got {alpha}")));
        }
        let quad_tol = s.quad_tol.unwrap_or(1e-8);
        if !(quad_tol > 0.0 && quad_tol < 1e-2) {
            return Err(bad("quad_tol", format!("must lie in (0, 0.01), got {quad_tol}")));
        }
        let generator: GeneratorKind = s
            .generator
            .as_deref()
            .unwrap_or("volterra")
            .parse()
            .map_err(|e: fexpo_core::Error| bad("generator", e.to_string()))?;
        let test_function: TestFunction = s
            .test_function
            .as_deref()
            .unwrap_or("cos")
            .parse()
            .map_err(|e: fexpo_core::Error| bad("test_function", e.to_string()))?;
        let tolerance = s.tolerance.unwrap_or(0.02);
        if !(0.0..1.0).contains(&tolerance) {
            return Err(bad("tolerance", format!("must lie in [0, 1), got {tolerance}")));
        }
        if let Some(f) = s.fault_ch_scale {
            if !(f.is_finite() && f > 0.0) {
                return Err(bad("fault_ch_scale", format!("must be positive, got {f}")));
            }
        }
        Ok(ExperimentConfig {
            command,
            h,
            h_list,
            delta,
            a,
            sigma,
            t,
            n,
            n_second,
            paths,
            seed: s.seed.unwrap_or(42),
            out: s.out.unwrap_or_else(|| PathBuf::from("out")),
            alpha,
            quad_tol,
            generator,
            write_paths: s.write_paths.unwrap_or(false),
            test_function,
            tolerance,
            fault_ch_scale: s.fault_ch_scale,
        })
    }

    /// Compact JSON of the resolved configuration, `out` excluded.
    pub fn canonical_json(&self) -> String {
        serde_json::to_string(self).expect("config serializes")
    }

    /// Hex SHA-256 of [`canonical_json`](Self::canonical_json).
    pub fn hash(&self) -> String {
        let digest = Sha256::digest(self.canonical_json().as_bytes());
        digest.iter().map(|b| format!("{b:02x}")).collect()
    }
}
