//! Deterministic kernel identities over a lattice of Hurst indices.

use rayon::prelude::*;
use serde::Serialize;

use fexpo_core::kernel::{double_covariance_integral, fbm_covariance, HurstIndex, KernelEvaluator};

use crate::config::ExperimentConfig;
use crate::error::CliResult;
use crate::report::{csv_table, Outputs, Provenance};

/// Points of the `(0, T]` lattice, as fractions of `T`.
pub const LATTICE: [f64; 5] = [0.2, 0.4, 0.6, 0.8, 1.0];

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct CheckRow {
    #[serde(rename = "H")]
    pub h: f64,
    pub check: &'static str,
    pub s: f64,
    pub t: f64,
    pub value: f64,
    pub expected: f64,
    pub abs_err: f64,
    pub tolerance: f64,
    pub pass: bool,
}

impl CheckRow {
    fn new(h: f64, check: &'static str, s: f64, t: f64, value: f64, expected: f64, tolerance: f64) -> Self {
        let abs_err = (value - expected).abs();
        CheckRow {
            h,
            check,
            s,
            t,
            value,
            expected,
            abs_err,
            tolerance,
            pass: abs_err <= tolerance,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Constant {
    #[serde(rename = "H")]
    pub h: f64,
    pub c_h: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct KernelCheckReport {
    #[serde(flatten)]
    pub provenance: Provenance,
    pub normalizing_constants: Vec<Constant>,
    pub rows: Vec<CheckRow>,
    pub failures: usize,
    pub passed: bool,
}

/// Pointwise tolerance for the kernel identities.
pub fn identity_tolerance(expected: f64) -> f64 {
    1e-5f64.max(1e-4 * expected.abs())
}

pub const DOUBLE_INTEGRAL_REL_TOL: f64 = 1e-6;

fn check_one(cfg: &ExperimentConfig, hv: f64) -> CliResult<(Constant, Vec<CheckRow>)> {
    let h = HurstIndex::new(hv)?;
    let mut ev = KernelEvaluator::new(h, cfg.quad_tol)?;
    if let Some(f) = cfg.fault_ch_scale {
        ev = KernelEvaluator::with_constant(h, ev.normalizing_constant() * f, cfg.quad_tol)?;
    }
    let ev = ev.with_horizon(cfg.t)?;
    let pts: Vec<f64> = LATTICE.iter().map(|x| x * cfg.t).collect();
    let mut rows = Vec::new();
    for &s in &pts {
        let want = s.powf(2.0 * hv);
        rows.push(CheckRow::new(hv, "l2_norm", s, s, ev.kernel_l2_norm(s)?, want, identity_tolerance(want)));
    }
    for &s in &pts {
        for &t in &pts {
            let want = fbm_covariance(h, s, t)?;
            let got = ev.kernel_cross_integral(s, t)?;
            rows.push(CheckRow::new(hv, "covariance", s, t, got, want, identity_tolerance(want)));
        }
    }
    let p = 2.0 * hv + 2.0;
    let want = cfg.t.powf(p) / p;
    let got = double_covariance_integral(h, cfg.t, cfg.quad_tol)?;
    rows.push(CheckRow::new(hv, "double_covariance", 0.0, cfg.t, got, want, DOUBLE_INTEGRAL_REL_TOL * want));
    Ok((
        Constant {
            h: hv,
            c_h: ev.normalizing_constant(),
        },
        rows,
    ))
}

pub fn run(cfg: &ExperimentConfig) -> CliResult<(KernelCheckReport, Outputs)> {
    let per_h: Vec<(Constant, Vec<CheckRow>)> = cfg
        .h_list
        .par_iter()
        .map(|hv| check_one(cfg, *hv))
        .collect::<CliResult<_>>()?;
    let mut constants = Vec::new();
    let mut rows = Vec::new();
    for (c, r) in per_h {
        constants.push(c);
        rows.extend(r);
    }
    let failures = rows.iter().filter(|r| !r.pass).count();
    let provenance = Provenance::new(cfg);
    let csv = csv_table(
        &provenance,
        &["H", "check", "s", "t", "value", "expected", "abs_err", "tolerance", "pass"],
        rows.iter(),
    )?;
    let report = KernelCheckReport {
        provenance,
        normalizing_constants: constants,
        rows,
        failures,
        passed: failures == 0,
    };
    let outputs = Outputs::new(&report, csv)?;
    Ok((report, outputs))
}
