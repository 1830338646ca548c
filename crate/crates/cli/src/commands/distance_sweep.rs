//! δ-sweep of coupled distances between `F^{H}` and `F^{H+δ}` with log-log
//! slope fits.

use ndarray::{Array2, Axis};
use serde::Serialize;

use fexpo_core::fbm::{sup_from_moments, CoupledSampler, GeneratorKind, VolterraSampler};
use fexpo_core::functional::{exp_functional_batch, MalliavinOperator, ModelParams};
use fexpo_core::grid::TimeGrid;
use fexpo_core::kernel::HurstIndex;
use fexpo_core::rng::{map_blocks, RngStreamSpec};
use fexpo_core::stats::{
    coupled_bounded_function_distance, coupled_l2_distance, ks_two_sample, loglog_slope, DistanceReport, Estimate,
    SlopeFit, REPORT_SCHEMA_VERSION,
};

use super::evaluator;
use crate::config::ExperimentConfig;
use crate::error::{CliError, CliResult};
use crate::report::{csv_table, Outputs, Provenance};

/// Standard-error multiple below which an L² or test-function estimate is
/// treated as noise: the two-sided Gaussian tail bound at level `alpha`.
pub fn noise_z(alpha: f64) -> f64 {
    (2.0 * (2.0 / alpha).ln()).sqrt()
}

/// Metrics with a fitted slope: name, target exponent, tolerance.
pub const SLOPE_TARGETS: [(&str, f64, f64); 5] = [
    ("ks_stat", 1.0, 0.3),
    ("l2_F", 2.0, 0.3),
    ("l2_DF", 2.0, 0.4),
    ("sup_l2_path", 2.0, 0.3),
    ("test_function", 1.0, 0.4),
];

#[allow(non_snake_case)]
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct NoiseFlags {
    pub ks_stat: bool,
    pub l2_F: bool,
    pub l2_DF: bool,
    pub sup_l2_path: bool,
    pub test_function: bool,
}

impl NoiseFlags {
    fn get(&self, metric: &str) -> bool {
        match metric {
            "ks_stat" => self.ks_stat,
            "l2_F" => self.l2_F,
            "l2_DF" => self.l2_DF,
            "sup_l2_path" => self.sup_l2_path,
            _ => self.test_function,
        }
    }
}

/// Per-δ values that sit beside the distance report.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct CellSummary {
    pub delta: f64,
    pub test_function_distance: Estimate,
    /// Node of the grid where the sup distance is attained.
    pub sup_node: usize,
    pub noise_dominated: NoiseFlags,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct SlopeCheck {
    pub metric: &'static str,
    pub target: f64,
    pub tolerance: f64,
    pub points_used: usize,
    /// Absent when fewer than three points rise above the noise floor.
    pub fit: Option<SlopeFit>,
    pub pass: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SweepReport {
    #[serde(flatten)]
    pub provenance: Provenance,
    #[serde(rename = "H")]
    pub h: f64,
    pub test_function: String,
    pub noise_z: f64,
    pub reports: Vec<DistanceReport>,
    pub cells: Vec<CellSummary>,
    pub slopes: Vec<SlopeCheck>,
    pub passed: bool,
}

#[derive(Debug, Clone, Copy, Serialize)]
struct CsvRow {
    delta: f64,
    h1: f64,
    h2: f64,
    ks_stat: f64,
    ks_conf_radius: f64,
    l2_f: f64,
    l2_f_stderr: f64,
    l2_df: f64,
    l2_df_stderr: f64,
    sup_l2_path: f64,
    sup_l2_path_stderr: f64,
    test_function: f64,
    test_function_stderr: f64,
    n_paths: usize,
    seed: u64,
    ks_noise: bool,
    l2_f_noise: bool,
    l2_df_noise: bool,
    sup_noise: bool,
    test_function_noise: bool,
}

const CSV_HEADER: [&str; 20] = [
    "delta",
    "H1",
    "H2",
    "ks_stat",
    "ks_conf_radius",
    "l2_F",
    "l2_F_stderr",
    "l2_DF",
    "l2_DF_stderr",
    "sup_l2_path",
    "sup_l2_path_stderr",
    "test_function",
    "test_function_stderr",
    "n_paths",
    "seed",
    "ks_noise",
    "l2_F_noise",
    "l2_DF_noise",
    "sup_l2_path_noise",
    "test_function_noise",
];

struct Block {
    /// `F` per member.
    f: Vec<Vec<f64>>,
    /// `∫|DF^{H} - DF^{H+δ}|^2` per δ and path.
    l2_df: Vec<Vec<f64>>,
    /// Per δ, per-node sums of `d^2` and `d^4`.
    sums: Vec<Vec<f64>>,
    squares: Vec<Vec<f64>>,
}

/// Distinct Hurst values and, for each δ, the member index of `H + δ`.
fn members(h: f64, deltas: &[f64]) -> (Vec<f64>, Vec<usize>) {
    let mut hs = vec![h];
    let mut index = Vec::with_capacity(deltas.len());
    for d in deltas {
        let v = h + d;
        let i = match hs.iter().position(|x| *x == v) {
            Some(i) => i,
            None => {
                hs.push(v);
                hs.len() - 1
            }
        };
        index.push(i);
    }
    (hs, index)
}

pub fn run(cfg: &ExperimentConfig) -> CliResult<(SweepReport, Outputs)> {
    if cfg.generator != GeneratorKind::Volterra {
        return Err(CliError::Config {
            field: "generator",
            reason: "distance-sweep couples paths through the volterra generator".into(),
        });
    }
    let grid = TimeGrid::new(cfg.t, cfg.n)?;
    let params = ModelParams::new(cfg.a, cfg.sigma, cfg.t)?;
    params.require_volatility()?;
    let (hs, index) = members(cfg.h, &cfg.delta);
    let mut samplers = Vec::with_capacity(hs.len());
    let mut ops = Vec::with_capacity(hs.len());
    for hv in &hs {
        let ev = evaluator(cfg, HurstIndex::new(*hv)?)?;
        samplers.push(VolterraSampler::from_evaluator(&ev, &grid)?);
        ops.push(MalliavinOperator::new(&ev, &grid)?);
    }
    let coupled = CoupledSampler::new(samplers)?;
    let weights = grid.trapezoid_weights();
    let nodes = grid.nodes_len();

    let blocks = map_blocks(cfg.paths, RngStreamSpec::new(cfg.seed, 0), |_, rng, rows| {
        let (_, paths) = coupled.sample_block(rng, rows)?;
        let f = paths
            .iter()
            .map(|p| exp_functional_batch(p.view(), &params, &grid))
            .collect::<fexpo_core::Result<Vec<_>>>()?;
        let df = paths
            .iter()
            .zip(&ops)
            .map(|(p, op)| op.derivative_batch(p.view(), &params))
            .collect::<fexpo_core::Result<Vec<Array2<f64>>>>()?;
        let mut l2_df = Vec::with_capacity(index.len());
        let mut sums = Vec::with_capacity(index.len());
        let mut squares = Vec::with_capacity(index.len());
        for &m in &index {
            let per_path: Vec<f64> = df[0]
                .axis_iter(Axis(0))
                .zip(df[m].axis_iter(Axis(0)))
                .map(|(x, y)| {
                    x.iter()
                        .zip(y.iter())
                        .zip(&weights)
                        .map(|((u, v), w)| w * (u - v) * (u - v))
                        .sum()
                })
                .collect();
            l2_df.push(per_path);
            let d2 = (&paths[0] - &paths[m]).mapv(|x| x * x);
            sums.push(d2.sum_axis(Axis(0)).to_vec());
            squares.push(d2.mapv(|x| x * x).sum_axis(Axis(0)).to_vec());
        }
        Ok(Block { f, l2_df, sums, squares })
    })?;

    let mut f: Vec<Vec<f64>> = vec![Vec::with_capacity(cfg.paths); hs.len()];
    let mut l2_df: Vec<Vec<f64>> = vec![Vec::with_capacity(cfg.paths); index.len()];
    let mut sums = vec![vec![0.0; nodes]; index.len()];
    let mut squares = vec![vec![0.0; nodes]; index.len()];
    for b in blocks {
        for (acc, part) in f.iter_mut().zip(b.f) {
            acc.extend(part);
        }
        for (acc, part) in l2_df.iter_mut().zip(b.l2_df) {
            acc.extend(part);
        }
        for j in 0..index.len() {
            for k in 0..nodes {
                sums[j][k] += b.sums[j][k];
                squares[j][k] += b.squares[j][k];
            }
        }
    }

    let z = noise_z(cfg.alpha);
    let mut reports = Vec::with_capacity(index.len());
    let mut cells = Vec::with_capacity(index.len());
    for (j, (&m, &delta)) in index.iter().zip(&cfg.delta).enumerate() {
        let ks = ks_two_sample(&f[0], &f[m], cfg.alpha)?;
        let l2_f = coupled_l2_distance(&f[0], &f[m])?;
        let l2_df_est = Estimate::from_sample(&l2_df[j])?;
        let sup = sup_from_moments(&sums[j], &squares[j], cfg.paths as f64);
        let tf = coupled_bounded_function_distance(&f[0], &f[m], cfg.test_function)?;
        reports.push(DistanceReport {
            schema_version: REPORT_SCHEMA_VERSION,
            h1: cfg.h,
            h2: hs[m],
            ks_stat: ks.statistic,
            ks_conf_radius: ks.radius,
            l2_F: l2_f,
            l2_DF: l2_df_est,
            sup_l2_path: sup.estimate,
            n_paths: cfg.paths,
            seed: cfg.seed,
        });
        cells.push(CellSummary {
            delta,
            test_function_distance: tf,
            sup_node: sup.node,
            noise_dominated: NoiseFlags {
                ks_stat: ks.statistic <= ks.radius,
                l2_F: l2_f.is_noise(z),
                l2_DF: l2_df_est.is_noise(z),
                sup_l2_path: sup.estimate.is_noise(z),
                test_function: tf.is_noise(z),
            },
        });
    }

    let slopes = SLOPE_TARGETS
        .iter()
        .map(|&(metric, target, tolerance)| slope_check(metric, target, tolerance, &reports, &cells))
        .collect::<CliResult<Vec<_>>>()?;

    let provenance = Provenance::new(cfg);
    let rows: Vec<CsvRow> = reports
        .iter()
        .zip(&cells)
        .map(|(r, c)| CsvRow {
            delta: c.delta,
            h1: r.h1,
            h2: r.h2,
            ks_stat: r.ks_stat,
            ks_conf_radius: r.ks_conf_radius,
            l2_f: r.l2_F.value,
            l2_f_stderr: r.l2_F.stderr,
            l2_df: r.l2_DF.value,
            l2_df_stderr: r.l2_DF.stderr,
            sup_l2_path: r.sup_l2_path.value,
            sup_l2_path_stderr: r.sup_l2_path.stderr,
            test_function: c.test_function_distance.value,
            test_function_stderr: c.test_function_distance.stderr,
            n_paths: r.n_paths,
            seed: r.seed,
            ks_noise: c.noise_dominated.ks_stat,
            l2_f_noise: c.noise_dominated.l2_F,
            l2_df_noise: c.noise_dominated.l2_DF,
            sup_noise: c.noise_dominated.sup_l2_path,
            test_function_noise: c.noise_dominated.test_function,
        })
        .collect();
    let csv = csv_table(&provenance, &CSV_HEADER, rows)?;
    let report = SweepReport {
        provenance,
        h: cfg.h,
        test_function: cfg.test_function.to_string(),
        noise_z: z,
        passed: slopes.iter().all(|s| s.pass),
        reports,
        cells,
        slopes,
    };
    let outputs = Outputs::new(&report, csv)?;
    Ok((report, outputs))
}

fn metric_value(metric: &str, r: &DistanceReport, c: &CellSummary) -> f64 {
    match metric {
        "ks_stat" => r.ks_stat,
        "l2_F" => r.l2_F.value,
        "l2_DF" => r.l2_DF.value,
        "sup_l2_path" => r.sup_l2_path.value,
        _ => c.test_function_distance.value,
    }
}

fn slope_check(
    metric: &'static str,
    target: f64,
    tolerance: f64,
    reports: &[DistanceReport],
    cells: &[CellSummary],
) -> CliResult<SlopeCheck> {
    let mut deltas = Vec::new();
    let mut values = Vec::new();
    for (r, c) in reports.iter().zip(cells) {
        let v = metric_value(metric, r, c);
        if c.delta != 0.0 && !c.noise_dominated.get(metric) && v > 0.0 {
            deltas.push(c.delta.abs());
            values.push(v);
        }
    }
    let fit = if deltas.len() >= 3 {
        Some(loglog_slope(&deltas, &values)?)
    } else {
        None
    };
    Ok(SlopeCheck {
        metric,
        target,
        tolerance,
        points_used: deltas.len(),
        pass: fit.is_some_and(|f| f.within(target, tolerance)),
        fit,
    })
}
