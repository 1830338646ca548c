//! Path simulation with moment checks against closed forms.

use ndarray::{Array2, Axis};
use serde::Serialize;

use fexpo_core::fbm::PathBatch;
use fexpo_core::functional::{exp_functional, mean_oracle, second_moment_oracle, ModelParams};
use fexpo_core::grid::TimeGrid;
use fexpo_core::io::encode_paths;
use fexpo_core::kernel::HurstIndex;
use fexpo_core::rng::{map_blocks, RngStreamSpec, GAUSSIAN_METHOD};
use fexpo_core::stats::Estimate;

use super::sampler;
use crate::config::ExperimentConfig;
use crate::error::CliResult;
use crate::report::{csv_table, Outputs, Provenance};

/// Monte Carlo estimates must land within this many standard errors.
pub const Z_GATE: f64 = 4.0;
/// Relative allowance for the trapezoid bias of `F` against the
/// continuous-time oracles.
pub const QUADRATURE_ALLOWANCE: f64 = 1e-5;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MomentCheck {
    pub name: &'static str,
    pub estimate: f64,
    pub stderr: f64,
    pub expected: f64,
    pub tolerance: f64,
    pub pass: bool,
}

impl MomentCheck {
    fn new(name: &'static str, e: Estimate, expected: f64) -> Self {
        let tolerance = Z_GATE * e.stderr + QUADRATURE_ALLOWANCE * expected.abs();
        MomentCheck {
            name,
            estimate: e.value,
            stderr: e.stderr,
            expected,
            tolerance,
            pass: (e.value - expected).abs() <= tolerance,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SimulateReport {
    #[serde(flatten)]
    pub provenance: Provenance,
    #[serde(rename = "H")]
    pub h: f64,
    pub generator: String,
    pub gaussian_method: &'static str,
    pub n_paths: usize,
    pub checks: Vec<MomentCheck>,
    pub passed: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
struct NodeRow {
    t: f64,
    mean: f64,
    second_moment: f64,
    expected_second_moment: f64,
}

struct Block {
    f: Vec<f64>,
    terminal: Vec<f64>,
    sums: Vec<f64>,
    squares: Vec<f64>,
    paths: Option<Array2<f64>>,
}

pub fn run(cfg: &ExperimentConfig) -> CliResult<(SimulateReport, Outputs)> {
    let h = HurstIndex::new(cfg.h)?;
    let grid = TimeGrid::new(cfg.t, cfg.n)?;
    let params = ModelParams::new(cfg.a, cfg.sigma, cfg.t)?;
    let sampler = sampler(cfg, h, grid)?;
    let spec = RngStreamSpec::new(cfg.seed, 0);
    let blocks = map_blocks(cfg.paths, spec, |_, rng, rows| {
        let paths = sampler.sample_block(rng, rows)?;
        let mut f = Vec::with_capacity(rows);
        for row in paths.axis_iter(Axis(0)) {
            f.push(exp_functional(row, &params, &grid)?);
        }
        let terminal = paths.column(cfg.n).to_vec();
        let sums = paths.sum_axis(Axis(0)).to_vec();
        let squares = paths.mapv(|x| x * x).sum_axis(Axis(0)).to_vec();
        Ok(Block {
            f,
            terminal,
            sums,
            squares,
            paths: cfg.write_paths.then_some(paths),
        })
    })?;

    let nodes = grid.nodes_len();
    let mut f = Vec::with_capacity(cfg.paths);
    let mut terminal = Vec::with_capacity(cfg.paths);
    let mut sums = vec![0.0; nodes];
    let mut squares = vec![0.0; nodes];
    let mut kept = Vec::new();
    for b in blocks {
        f.extend(b.f);
        terminal.extend(b.terminal);
        for k in 0..nodes {
            sums[k] += b.sums[k];
            squares[k] += b.squares[k];
        }
        kept.extend(b.paths);
    }

    let terminal_sq: Vec<f64> = terminal.iter().map(|x| x * x).collect();
    let f_sq: Vec<f64> = f.iter().map(|x| x * x).collect();
    let checks = vec![
        MomentCheck::new("terminal_variance", Estimate::from_sample(&terminal_sq)?, cfg.t.powf(2.0 * cfg.h)),
        MomentCheck::new("mean_F", Estimate::from_sample(&f)?, mean_oracle(&params, h)?),
        MomentCheck::new("second_moment_F", Estimate::from_sample(&f_sq)?, second_moment_oracle(&params, h)?),
    ];

    let provenance = Provenance::new(cfg);
    let n_paths = cfg.paths as f64;
    let rows = (0..nodes).map(|k| NodeRow {
        t: grid.node(k),
        mean: sums[k] / n_paths,
        second_moment: squares[k] / n_paths,
        expected_second_moment: grid.node(k).powf(2.0 * cfg.h),
    });
    let csv = csv_table(&provenance, &["t", "mean", "second_moment", "expected_second_moment"], rows)?;
    let report = SimulateReport {
        provenance,
        h: cfg.h,
        generator: sampler.kind().to_string(),
        gaussian_method: GAUSSIAN_METHOD,
        n_paths: cfg.paths,
        passed: checks.iter().all(|c| c.pass),
        checks,
    };
    let mut outputs = Outputs::new(&report, csv)?;
    if cfg.write_paths {
        let mut values = Array2::<f64>::zeros((cfg.paths, nodes));
        let mut at = 0;
        for b in kept {
            let r = b.nrows();
            values.slice_mut(ndarray::s![at..at + r, ..]).assign(&b);
            at += r;
        }
        let batch = PathBatch::new(h, grid, values, sampler.kind(), spec)?;
        outputs.paths = Some(encode_paths(&batch)?);
    }
    Ok((report, outputs))
}
