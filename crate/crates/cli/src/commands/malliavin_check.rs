//! Pathwise inequality suite on pinned-seed paths:
//! `‖DF‖^2 >= lower bound` and `∫∫|DDF|^2 <= second-derivative bound`.

use ndarray::{s, Array2};
use rayon::prelude::*;
use serde::Serialize;

use fexpo_core::fbm::simulate;
use fexpo_core::functional::{
    evaluate_batch, second_derivative_bound, FunctionalSample, MalliavinOperator, ModelParams,
    SecondDerivativeOperator,
};
use fexpo_core::grid::TimeGrid;
use fexpo_core::io::write_functional_csv;
use fexpo_core::kernel::HurstIndex;
use fexpo_core::rng::RngStreamSpec;

use super::{evaluator, sampler};
use crate::config::ExperimentConfig;
use crate::error::CliResult;
use crate::report::{Outputs, Provenance};

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct HurstSummary {
    #[serde(rename = "H")]
    pub h: f64,
    pub n_paths: usize,
    pub n: usize,
    pub energy_violations: usize,
    /// Smallest `energy / lower_bound` over the paths.
    pub min_energy_ratio: f64,
    pub n_second: usize,
    pub second_violations: usize,
    /// Largest `∫∫|DDF|^2 / bound` over the paths.
    pub max_second_ratio: f64,
    pub passed: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MalliavinReport {
    #[serde(flatten)]
    pub provenance: Provenance,
    pub tolerance: f64,
    pub summaries: Vec<HurstSummary>,
    pub passed: bool,
}

fn check_one(cfg: &ExperimentConfig, index: usize, hv: f64) -> CliResult<(HurstSummary, Vec<FunctionalSample>)> {
    let h = HurstIndex::new(hv)?;
    let params = ModelParams::new(cfg.a, cfg.sigma, cfg.t)?;
    let grid = TimeGrid::new(cfg.t, cfg.n)?;
    let ev = evaluator(cfg, h)?;
    let batch = simulate(
        sampler(cfg, h, grid)?.as_ref(),
        cfg.paths,
        RngStreamSpec::new(cfg.seed, index as u64),
    )?;
    let op = MalliavinOperator::new(&ev, &grid)?;
    let samples = evaluate_batch(&batch, &params, &op)?;
    let tol = cfg.tolerance;
    let energy_violations = samples
        .iter()
        .filter(|s| s.energy < s.lower_bound * (1.0 - tol))
        .count();
    let min_energy_ratio = samples
        .iter()
        .map(|s| s.energy / s.lower_bound)
        .fold(f64::INFINITY, f64::min);

    // Same paths, read on the coarse grid.
    let stride = cfg.n / cfg.n_second;
    let coarse = TimeGrid::new(cfg.t, cfg.n_second)?;
    let sub: Array2<f64> = batch.values().slice(s![.., ..;stride]).to_owned();
    let op2 = SecondDerivativeOperator::new(&ev, &coarse)?;
    let norms = op2.squared_norm_batch(sub.view(), &params)?;
    let bounds: Vec<f64> = (0..sub.nrows())
        .into_par_iter()
        .map(|i| second_derivative_bound(sub.row(i), &params, h, &coarse))
        .collect::<fexpo_core::Result<_>>()?;
    let second_violations = norms
        .iter()
        .zip(&bounds)
        .filter(|(v, b)| **v > **b * (1.0 + tol))
        .count();
    let max_second_ratio = norms
        .iter()
        .zip(&bounds)
        .map(|(v, b)| v / b)
        .fold(0.0, f64::max);
    Ok((
        HurstSummary {
            h: hv,
            n_paths: cfg.paths,
            n: cfg.n,
            energy_violations,
            min_energy_ratio,
            n_second: cfg.n_second,
            second_violations,
            max_second_ratio,
            passed: energy_violations == 0 && second_violations == 0,
        },
        samples,
    ))
}

pub fn run(cfg: &ExperimentConfig) -> CliResult<(MalliavinReport, Outputs)> {
    let mut summaries = Vec::new();
    let mut all = Vec::new();
    for (i, hv) in cfg.h_list.iter().enumerate() {
        let (summary, samples) = check_one(cfg, i, *hv)?;
        summaries.push(summary);
        all.extend(samples);
    }
    let provenance = Provenance::new(cfg);
    let mut csv = provenance.csv_comment().into_bytes();
    write_functional_csv(&all, &mut csv)?;
    let report = MalliavinReport {
        provenance,
        tolerance: cfg.tolerance,
        passed: summaries.iter().all(|s| s.passed),
        summaries,
    };
    let outputs = Outputs::new(&report, csv)?;
    Ok((report, outputs))
}
