//! The exponential functional `F_H = ∫_0^T e^{as + σB^H_s} ds`, its first
//! and second Malliavin derivatives, and the pathwise bounds around them.
//!
//! Integrals in `s` against the path use the composite trapezoid rule on
//! the grid. The derivatives treat `e^{as+σB_s}` as constant on each panel
//! (the mean of its two end values) and integrate the kernel over the
//! panel exactly, which keeps the `s -> r` singularity under control.
//!
//! `D_r F` blows up like `r^γ` at `r = 0` when `H != 1/2`. Node 0 therefore
//! carries the value whose trapezoid contribution on the first panel equals
//! the exact integral of `D_r F^2` under that power law,
//! `D_0 = D_1 · sqrt((1 - 2γ) / (1 + 2γ))`.

use ndarray::{s, Array1, Array2, ArrayView1, ArrayView2, Axis};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fbm::PathBatch;
use crate::grid::TimeGrid;
use crate::kernel::{outer_integral, panel_integral, HurstIndex, KernelEvaluator};
use crate::quad::{gauss_kronrod, Tolerance};

/// Largest exponent passed to `exp`; anything above is a range error.
pub const MAX_EXPONENT: f64 = 700.0;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ModelParams {
    pub a: f64,
    pub sigma: f64,
    #[serde(rename = "T")]
    pub horizon: f64,
}

impl ModelParams {
    pub fn new(a: f64, sigma: f64, horizon: f64) -> Result<Self> {
        if !a.is_finite() {
            return Err(Error::param("a", format!("must be finite, got {a}")));
        }
        if !sigma.is_finite() {
            return Err(Error::param("sigma", format!("must be finite, got {sigma}")));
        }
        if !(horizon.is_finite() && horizon > 0.0) {
            return Err(Error::param("T", format!("horizon must be positive, got {horizon}")));
        }
        Ok(ModelParams { a, sigma, horizon })
    }

    /// Derivative quantities vanish identically at `σ = 0`.
    pub fn require_volatility(&self) -> Result<()> {
        if self.sigma == 0.0 {
            Err(Error::param("sigma", "must be nonzero for Malliavin quantities"))
        } else {
            Ok(())
        }
    }

    fn check_grid(&self, grid: &TimeGrid) -> Result<()> {
        if (grid.horizon() - self.horizon).abs() > 1e-12 * self.horizon {
            return Err(Error::Mismatch(format!(
                "grid horizon {} differs from T = {}",
                grid.horizon(),
                self.horizon
            )));
        }
        Ok(())
    }
}

fn check_path(path: ArrayView1<'_, f64>, grid: &TimeGrid) -> Result<()> {
    if path.len() != grid.nodes_len() {
        return Err(Error::Mismatch(format!(
            "path has {} values, grid has {} nodes",
            path.len(),
            grid.nodes_len()
        )));
    }
    Ok(())
}

fn guarded_exp(node: usize, exponent: f64) -> Result<f64> {
    if exponent > MAX_EXPONENT || exponent.is_nan() {
        return Err(Error::ExponentRange { node, exponent });
    }
    Ok(exponent.exp())
}

/// `e^{a t_k + σ B_k}` at every node.
pub fn exponentials(path: ArrayView1<'_, f64>, params: &ModelParams, grid: &TimeGrid) -> Result<Vec<f64>> {
    params.check_grid(grid)?;
    check_path(path, grid)?;
    path.iter()
        .enumerate()
        .map(|(k, b)| guarded_exp(k, params.a * grid.node(k) + params.sigma * b))
        .collect()
}

fn panel_means(e: &[f64]) -> Vec<f64> {
    e.windows(2).map(|w| 0.5 * (w[0] + w[1])).collect()
}

pub fn exp_functional(path: ArrayView1<'_, f64>, params: &ModelParams, grid: &TimeGrid) -> Result<f64> {
    Ok(grid.trapezoid(&exponentials(path, params, grid)?))
}

/// `F_H` for every row of `paths`.
pub fn exp_functional_batch(paths: ArrayView2<'_, f64>, params: &ModelParams, grid: &TimeGrid) -> Result<Vec<f64>> {
    (0..paths.nrows())
        .into_par_iter()
        .map(|i| exp_functional(paths.row(i), params, grid))
        .collect()
}

/// Panel means of `e^{as+σB}` for every row, `rows × n`.
fn panel_mean_matrix(paths: ArrayView2<'_, f64>, params: &ModelParams, grid: &TimeGrid) -> Result<Array2<f64>> {
    let n = grid.steps();
    let rows: Vec<Vec<f64>> = (0..paths.nrows())
        .into_par_iter()
        .map(|i| exponentials(paths.row(i), params, grid).map(|e| panel_means(&e)))
        .collect::<Result<_>>()?;
    let mut out = Array2::<f64>::zeros((paths.nrows(), n));
    for (mut dst, src) in out.axis_iter_mut(Axis(0)).zip(rows) {
        dst.assign(&ArrayView1::from(&src));
    }
    Ok(out)
}

/// `∫_lo^hi Π_m K_H(s, r_m) ds` with every `r_m <= lo`. A factor with
/// `r_m == lo` is singular at the lower end; that case goes through
/// tanh-sinh with the gap `s - r_m` passed exactly.
fn panel_kernel_product(ev: &KernelEvaluator, lo: f64, hi: f64, rs: &[f64]) -> Result<f64> {
    if ev.is_brownian() {
        return Ok(ev.normalizing_constant().powi(rs.len() as i32) * (hi - lo));
    }
    let offsets: Vec<f64> = rs.iter().map(|r| lo - r).collect();
    let product = |da: f64| -> Result<f64> {
        offsets
            .iter()
            .zip(rs)
            .try_fold(1.0, |acc, (off, r)| Ok(acc * ev.kernel_with_gap(*r, off + da)?))
    };
    if offsets.contains(&0.0) {
        outer_integral(|_, da, _| product(da), lo, hi, ev.quad_tol())
    } else {
        panel_integral(|s| product(s - lo), lo, hi, ev.quad_tol())
    }
}

/// Node-0 factor that turns the value at node 1 into the effective value
/// at the origin.
fn origin_factor(ev: &KernelEvaluator) -> f64 {
    let g = ev.origin_exponent();
    ((1.0 - 2.0 * g) / (1.0 + 2.0 * g)).sqrt()
}

/// First Malliavin derivative as a linear map from panel means of
/// `e^{as+σB}` to `D_r F` at the nodes.
#[derive(Debug, Clone, PartialEq)]
pub struct MalliavinOperator {
    hurst: HurstIndex,
    grid: TimeGrid,
    // entry (k, j): ∫ over panel k+1 of K(s, t_j) ds, zero unless the
    // panel lies right of t_j
    kappa_t: Array2<f64>,
    origin: Option<f64>,
}

impl MalliavinOperator {
    pub fn new(ev: &KernelEvaluator, grid: &TimeGrid) -> Result<Self> {
        let n = grid.steps();
        let brownian = ev.is_brownian();
        let first = if brownian { 0 } else { 1 };
        let rows: Vec<(usize, Vec<f64>)> = (first..n)
            .into_par_iter()
            .map(|j| {
                let r = grid.node(j);
                let row = (j + 1..=n)
                    .map(|k| panel_kernel_product(ev, grid.node(k - 1), grid.node(k), &[r]))
                    .collect::<Result<Vec<f64>>>()?;
                Ok((j, row))
            })
            .collect::<Result<_>>()?;
        let mut kappa_t = Array2::<f64>::zeros((n, n + 1));
        for (j, row) in rows {
            for (offset, v) in row.into_iter().enumerate() {
                kappa_t[[j + offset, j]] = v;
            }
        }
        Ok(MalliavinOperator {
            hurst: ev.hurst(),
            grid: *grid,
            kappa_t,
            origin: (!brownian).then(|| origin_factor(ev)),
        })
    }

    pub fn hurst(&self) -> HurstIndex {
        self.hurst
    }

    pub fn grid(&self) -> &TimeGrid {
        &self.grid
    }

    /// `∫_{t_j}^T K_H(s, t_j) ds` at every node; node 0 uses the origin rule.
    pub fn kernel_tail_integrals(&self) -> Vec<f64> {
        let mut g: Vec<f64> = self.kappa_t.sum_axis(Axis(0)).to_vec();
        self.fix_origin(&mut g);
        g
    }

    fn fix_origin(&self, d: &mut [f64]) {
        if let Some(f) = self.origin {
            d[0] = f * d[1];
        }
    }

    /// `D_r F` at every node of one path.
    pub fn derivative(&self, path: ArrayView1<'_, f64>, params: &ModelParams) -> Result<Vec<f64>> {
        params.require_volatility()?;
        let means = panel_means(&exponentials(path, params, &self.grid)?);
        let mut d = (self.kappa_t.t().dot(&Array1::from(means)) * params.sigma).to_vec();
        self.fix_origin(&mut d);
        Ok(d)
    }

    /// `D_r F` for every row of `paths`, `rows × (n + 1)`.
    pub fn derivative_batch(&self, paths: ArrayView2<'_, f64>, params: &ModelParams) -> Result<Array2<f64>> {
        params.require_volatility()?;
        let means = panel_mean_matrix(paths, params, &self.grid)?;
        let mut d = means.dot(&self.kappa_t);
        d *= params.sigma;
        if let Some(f) = self.origin {
            let first = d.column(1).to_owned() * f;
            d.column_mut(0).assign(&first);
        }
        Ok(d)
    }
}

/// Second Malliavin derivative `D_θ D_r F` as a linear map from panel means
/// to the `(n + 1) × (n + 1)` node matrix. Storage is `O(n^3)`, so this is
/// meant for coarse grids.
#[derive(Debug, Clone, PartialEq)]
pub struct SecondDerivativeOperator {
    hurst: HurstIndex,
    grid: TimeGrid,
    // entry (k, i * (n + 1) + j): ∫ over panel k+1 of K(s, t_i) K(s, t_j) ds
    lambda_t: Array2<f64>,
    origin: Option<f64>,
}

impl SecondDerivativeOperator {
    pub fn new(ev: &KernelEvaluator, grid: &TimeGrid) -> Result<Self> {
        let n = grid.steps();
        let m = n + 1;
        let brownian = ev.is_brownian();
        let first = if brownian { 0 } else { 1 };
        let pairs: Vec<(usize, usize)> = (first..n).flat_map(|i| (i..n).map(move |j| (i, j))).collect();
        let cells: Vec<(usize, usize, Vec<f64>)> = pairs
            .into_par_iter()
            .map(|(i, j)| {
                let rs = [grid.node(i), grid.node(j)];
                let col = (j + 1..=n)
                    .map(|k| panel_kernel_product(ev, grid.node(k - 1), grid.node(k), &rs))
                    .collect::<Result<Vec<f64>>>()?;
                Ok((i, j, col))
            })
            .collect::<Result<_>>()?;
        let mut lambda_t = Array2::<f64>::zeros((n, m * m));
        for (i, j, col) in cells {
            for (offset, v) in col.into_iter().enumerate() {
                lambda_t[[j + offset, i * m + j]] = v;
                lambda_t[[j + offset, j * m + i]] = v;
            }
        }
        Ok(SecondDerivativeOperator {
            hurst: ev.hurst(),
            grid: *grid,
            lambda_t,
            origin: (!brownian).then(|| origin_factor(ev)),
        })
    }

    pub fn hurst(&self) -> HurstIndex {
        self.hurst
    }

    pub fn grid(&self) -> &TimeGrid {
        &self.grid
    }

    fn assemble(&self, flat: ArrayView1<'_, f64>, sigma: f64) -> Array2<f64> {
        let m = self.grid.nodes_len();
        let mut dd = flat.to_owned().into_shape_with_order((m, m)).expect("square layout") * (sigma * sigma);
        if let Some(f) = self.origin {
            let row = dd.slice(s![1, 1..]).to_owned() * f;
            dd.slice_mut(s![0, 1..]).assign(&row);
            dd.slice_mut(s![1.., 0]).assign(&row);
            dd[[0, 0]] = f * f * dd[[1, 1]];
        }
        dd
    }

    /// Symmetric matrix of `D_θ D_r F` over node pairs.
    pub fn matrix(&self, path: ArrayView1<'_, f64>, params: &ModelParams) -> Result<Array2<f64>> {
        params.require_volatility()?;
        let means = Array1::from(panel_means(&exponentials(path, params, &self.grid)?));
        let flat = self.lambda_t.t().dot(&means);
        Ok(self.assemble(flat.view(), params.sigma))
    }

    /// `∫∫ |D_θ D_r F|^2 dθ dr` for every row of `paths`.
    pub fn squared_norm_batch(&self, paths: ArrayView2<'_, f64>, params: &ModelParams) -> Result<Vec<f64>> {
        params.require_volatility()?;
        let means = panel_mean_matrix(paths, params, &self.grid)?;
        let flat = means.dot(&self.lambda_t);
        Ok(flat
            .axis_iter(Axis(0))
            .map(|row| double_trapezoid(&self.assemble(row, params.sigma), &self.grid))
            .collect())
    }
}

/// `∫∫ g(θ, r)^2 dθ dr` by the tensor trapezoid rule.
pub fn double_trapezoid(values: &Array2<f64>, grid: &TimeGrid) -> f64 {
    let w = grid.trapezoid_weights();
    values
        .indexed_iter()
        .map(|((i, j), v)| w[i] * w[j] * v * v)
        .sum()
}

pub fn malliavin_derivative(
    path: ArrayView1<'_, f64>,
    params: &ModelParams,
    ev: &KernelEvaluator,
    grid: &TimeGrid,
) -> Result<Vec<f64>> {
    MalliavinOperator::new(ev, grid)?.derivative(path, params)
}

pub fn second_derivative(
    path: ArrayView1<'_, f64>,
    params: &ModelParams,
    ev: &KernelEvaluator,
    grid: &TimeGrid,
) -> Result<Array2<f64>> {
    SecondDerivativeOperator::new(ev, grid)?.matrix(path, params)
}

/// `‖DF‖^2 = ∫_0^T (D_r F)^2 dr`.
pub fn derivative_energy(df: &[f64], grid: &TimeGrid) -> Result<f64> {
    if df.len() != grid.nodes_len() {
        return Err(Error::Mismatch(format!(
            "derivative has {} values, grid has {} nodes",
            df.len(),
            grid.nodes_len()
        )));
    }
    let sq: Vec<f64> = df.iter().map(|d| d * d).collect();
    Ok(grid.trapezoid(&sq))
}

/// `T^{2H+2}/(2H+2) · σ^2 · e^{-2|a|T + 2 min_s σB_s}`, minimum over nodes.
pub fn energy_lower_bound(path: ArrayView1<'_, f64>, params: &ModelParams, hurst: HurstIndex) -> Result<f64> {
    params.require_volatility()?;
    if path.is_empty() {
        return Err(Error::EmptySample);
    }
    let min = path.iter().map(|b| params.sigma * b).fold(f64::INFINITY, f64::min);
    let p = 2.0 * hurst.value() + 2.0;
    let t = params.horizon;
    Ok(t.powf(p) / p * params.sigma * params.sigma * (-2.0 * params.a.abs() * t + 2.0 * min).exp())
}

/// `T σ^4 ∫_0^T s^{4H} e^{2as + 2σB_s} ds`.
pub fn second_derivative_bound(
    path: ArrayView1<'_, f64>,
    params: &ModelParams,
    hurst: HurstIndex,
    grid: &TimeGrid,
) -> Result<f64> {
    params.require_volatility()?;
    params.check_grid(grid)?;
    check_path(path, grid)?;
    let four_h = 4.0 * hurst.value();
    let vals = path
        .iter()
        .enumerate()
        .map(|(k, b)| {
            let s = grid.node(k);
            Ok(s.powf(four_h) * guarded_exp(k, 2.0 * (params.a * s + params.sigma * b))?)
        })
        .collect::<Result<Vec<f64>>>()?;
    Ok(params.horizon * params.sigma.powi(4) * grid.trapezoid(&vals))
}

const ORACLE_TOL: f64 = 1e-11;

/// `E[F_H] = ∫_0^T e^{as + σ^2 s^{2H}/2} ds`.
pub fn mean_oracle(params: &ModelParams, hurst: HurstIndex) -> Result<f64> {
    let two_h = 2.0 * hurst.value();
    let half_var = 0.5 * params.sigma * params.sigma;
    let x_max = params.a.max(0.0) * params.horizon + half_var * params.horizon.powf(two_h);
    guarded_exp(0, x_max)?;
    Ok(gauss_kronrod(
        |s| (params.a * s + half_var * s.powf(two_h)).exp(),
        0.0,
        params.horizon,
        Tolerance::relative(ORACLE_TOL),
    )?
    .value)
}

/// `E[F_H^2]` as the double integral of
/// `e^{a(s+t) + σ^2 (s^{2H} + t^{2H} + 2R_H(s,t))/2}`, folded onto `s < t`.
pub fn second_moment_oracle(params: &ModelParams, hurst: HurstIndex) -> Result<f64> {
    let two_h = 2.0 * hurst.value();
    let half_var = 0.5 * params.sigma * params.sigma;
    let t_max = params.horizon;
    guarded_exp(0, 2.0 * params.a.max(0.0) * t_max + 4.0 * half_var * t_max.powf(two_h))?;
    let integrand = |s: f64, t: f64, gap: f64| {
        // s^{2H} + t^{2H} + 2R = 2 s^{2H} + 2 t^{2H} - gap^{2H}
        let v = 2.0 * s.powf(two_h) + 2.0 * t.powf(two_h) - gap.powf(two_h);
        (params.a * (s + t) + half_var * v).exp()
    };
    let lower_triangle = outer_integral(
        |t, _, _| {
            if t == 0.0 {
                return Ok(0.0);
            }
            outer_integral(|s, _, gap| Ok(integrand(s, t, gap)), 0.0, t, ORACLE_TOL * 10.0)
        },
        0.0,
        t_max,
        ORACLE_TOL * 10.0,
    )?;
    Ok(2.0 * lower_triangle)
}

/// Per-path record of the functional, its derivative and the bounds.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FunctionalSample {
    pub path_id: usize,
    #[serde(rename = "H")]
    pub hurst: f64,
    pub params: ModelParams,
    pub n: usize,
    #[serde(rename = "F")]
    pub f: f64,
    #[serde(rename = "DF")]
    pub df: Vec<f64>,
    pub energy: f64,
    pub lower_bound: f64,
    pub second_deriv_bound: f64,
    pub seed: u64,
}

/// Functional, derivative, energy and both bounds for every path of a batch.
pub fn evaluate_batch(batch: &PathBatch, params: &ModelParams, op: &MalliavinOperator) -> Result<Vec<FunctionalSample>> {
    if op.hurst() != batch.hurst() || op.grid() != batch.grid() {
        return Err(Error::Mismatch("operator was built for a different H or grid".into()));
    }
    let grid = *batch.grid();
    let values = batch.values();
    let df = op.derivative_batch(values, params)?;
    (0..batch.n_paths())
        .into_par_iter()
        .map(|i| {
            let path = values.row(i);
            let d = df.row(i).to_vec();
            Ok(FunctionalSample {
                path_id: i,
                hurst: batch.hurst().value(),
                params: *params,
                n: grid.steps(),
                f: exp_functional(path, params, &grid)?,
                energy: derivative_energy(&d, &grid)?,
                df: d,
                lower_bound: energy_lower_bound(path, params, batch.hurst())?,
                second_deriv_bound: second_derivative_bound(path, params, batch.hurst(), &grid)?,
                seed: batch.rng().master_seed,
            })
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::kernel::DEFAULT_QUAD_TOL;
    use ndarray::Array1;

    fn h(v: f64) -> HurstIndex {
        HurstIndex::new(v).unwrap()
    }

    fn zero_path(grid: &TimeGrid) -> Array1<f64> {
        Array1::zeros(grid.nodes_len())
    }

    #[test]
    fn params_validation() {
        assert!(ModelParams::new(0.0, 1.0, 0.0).is_err());
        assert!(ModelParams::new(f64::NAN, 1.0, 1.0).is_err());
        assert!(ModelParams::new(0.0, 0.0, 1.0).unwrap().require_volatility().is_err());
    }

    #[test]
    fn deterministic_functional() {
        let grid = TimeGrid::new(1.0, 512).unwrap();
        let p = ModelParams::new(1.0, 0.0, 1.0).unwrap();
        let f = exp_functional(zero_path(&grid).view(), &p, &grid).unwrap();
        assert!((f - (std::f64::consts::E - 1.0)).abs() < 1e-6);
        let grid = TimeGrid::new(2.0, 16).unwrap();
        let p = ModelParams::new(0.0, 0.0, 2.0).unwrap();
        assert_eq!(exp_functional(zero_path(&grid).view(), &p, &grid).unwrap(), 2.0);
    }

    #[test]
    fn overflow_is_an_error() {
        let grid = TimeGrid::new(1.0, 4).unwrap();
        let p = ModelParams::new(0.0, 1.0, 1.0).unwrap();
        let mut path = zero_path(&grid);
        path[3] = 800.0;
        assert!(matches!(
            exp_functional(path.view(), &p, &grid),
            Err(Error::ExponentRange { node: 3, .. })
        ));
        path[3] = 360.0;
        assert!(exp_functional(path.view(), &p, &grid).is_ok());
        assert!(second_derivative_bound(path.view(), &p, h(0.5), &grid).is_err());
    }

    #[test]
    fn horizon_mismatch() {
        let grid = TimeGrid::new(1.0, 4).unwrap();
        let p = ModelParams::new(0.0, 1.0, 2.0).unwrap();
        assert!(matches!(exp_functional(zero_path(&grid).view(), &p, &grid), Err(Error::Mismatch(_))));
    }

    #[test]
    fn brownian_zero_path_derivatives() {
        let grid = TimeGrid::new(1.0, 64).unwrap();
        let ev = KernelEvaluator::new(h(0.5), DEFAULT_QUAD_TOL).unwrap();
        let p = ModelParams::new(0.0, 1.0, 1.0).unwrap();
        let path = zero_path(&grid);
        let d = malliavin_derivative(path.view(), &p, &ev, &grid).unwrap();
        for (k, v) in d.iter().enumerate() {
            assert!((v - (1.0 - grid.node(k))).abs() < 1e-12);
        }
        assert_eq!(d[64], 0.0);
        let e = derivative_energy(&d, &grid).unwrap();
        assert!((e - 1.0 / 3.0).abs() < 1.0 / 64.0);
        let dd = second_derivative(path.view(), &p, &ev, &grid).unwrap();
        for i in 0..=64 {
            for j in 0..=64 {
                let want = 1.0 - grid.node(i.max(j));
                assert!((dd[[i, j]] - want).abs() < 1e-12);
            }
        }
        let bound = second_derivative_bound(path.view(), &p, h(0.5), &grid).unwrap();
        assert!((bound - 1.0 / 3.0).abs() < 1e-3);
        assert!(double_trapezoid(&dd, &grid) <= bound);
    }

    #[test]
    fn energy_scales_with_sigma() {
        let grid = TimeGrid::new(1.0, 32).unwrap();
        let ev = KernelEvaluator::new(h(0.3), DEFAULT_QUAD_TOL).unwrap();
        let op = MalliavinOperator::new(&ev, &grid).unwrap();
        let path = zero_path(&grid);
        let p1 = ModelParams::new(0.0, 1.0, 1.0).unwrap();
        let p2 = ModelParams::new(0.0, 2.0, 1.0).unwrap();
        let d1 = op.derivative(path.view(), &p1).unwrap();
        let d2 = op.derivative(path.view(), &p2).unwrap();
        for (a, b) in d1.iter().zip(&d2) {
            assert!((2.0 * a - b).abs() <= 1e-14 * b.abs());
        }
        let e1 = derivative_energy(&d1, &grid).unwrap();
        let e2 = derivative_energy(&d2, &grid).unwrap();
        assert!((4.0 * e1 - e2).abs() < 1e-12 * e2);
        let b1 = second_derivative_bound(path.view(), &p1, h(0.3), &grid).unwrap();
        let b2 = second_derivative_bound(path.view(), &p2, h(0.3), &grid).unwrap();
        assert!((16.0 * b1 - b2).abs() < 1e-12 * b2);
    }

    #[test]
    fn lower_bound_constants() {
        let grid = TimeGrid::new(1.0, 8).unwrap();
        let p = ModelParams::new(0.0, 1.0, 1.0).unwrap();
        let path = zero_path(&grid);
        let lb = energy_lower_bound(path.view(), &p, h(0.5)).unwrap();
        assert!((lb - 1.0 / 3.0).abs() < 1e-15);
        let lb = energy_lower_bound(path.view(), &p, h(0.7)).unwrap();
        assert!((lb - 1.0 / 3.4).abs() < 1e-15);
    }

    #[test]
    fn negative_sigma_uses_signed_minimum() {
        let path = Array1::from(vec![0.0, 0.5, -0.25]);
        let up = ModelParams::new(0.0, 1.0, 1.0).unwrap();
        let down = ModelParams::new(0.0, -1.0, 1.0).unwrap();
        let c = 1.0 / 3.0;
        assert!((energy_lower_bound(path.view(), &up, h(0.5)).unwrap() - c * (-0.5f64).exp()).abs() < 1e-15);
        assert!((energy_lower_bound(path.view(), &down, h(0.5)).unwrap() - c * (-1.0f64).exp()).abs() < 1e-15);
    }

    #[test]
    fn tail_integrals_match_double_covariance_density() {
        // ∫_0^T (∫_r^T K(s, r) ds)^2 dr = T^{2H+2}/(2H+2); the trapezoid rule
        // converges slowly against the r^{2γ} singularity at the origin.
        for hv in [0.3, 0.7] {
            let want = 1.0 / (2.0 * hv + 2.0);
            let ev = KernelEvaluator::new(h(hv), DEFAULT_QUAD_TOL).unwrap();
            let err = |n: usize| {
                let grid = TimeGrid::new(1.0, n).unwrap();
                let g = MalliavinOperator::new(&ev, &grid).unwrap().kernel_tail_integrals();
                (derivative_energy(&g, &grid).unwrap() / want - 1.0).abs()
            };
            let (coarse, fine) = (err(32), err(128));
            assert!(coarse / fine > 3.0, "H={hv}: {coarse} -> {fine}");
            assert!(fine < 0.02, "H={hv}: {fine}");
        }
    }

    #[test]
    fn batch_matches_single_path() {
        let grid = TimeGrid::new(1.0, 16).unwrap();
        let ev = KernelEvaluator::new(h(0.7), DEFAULT_QUAD_TOL).unwrap();
        let op = MalliavinOperator::new(&ev, &grid).unwrap();
        let op2 = SecondDerivativeOperator::new(&ev, &grid).unwrap();
        let p = ModelParams::new(0.5, 1.0, 1.0).unwrap();
        let mut paths = Array2::<f64>::zeros((3, 17));
        for i in 0..3 {
            for k in 1..17 {
                paths[[i, k]] = ((i + 1) as f64 * k as f64 * 0.37).sin();
            }
        }
        let batch = op.derivative_batch(paths.view(), &p).unwrap();
        let norms = op2.squared_norm_batch(paths.view(), &p).unwrap();
        for i in 0..3 {
            let single = op.derivative(paths.row(i), &p).unwrap();
            for (a, b) in single.iter().zip(batch.row(i)) {
                assert!((a - b).abs() <= 1e-13 * a.abs().max(1.0));
            }
            let m = op2.matrix(paths.row(i), &p).unwrap();
            for x in 0..17 {
                for y in 0..17 {
                    assert_eq!(m[[x, y]], m[[y, x]]);
                }
            }
            assert!((double_trapezoid(&m, &grid) - norms[i]).abs() <= 1e-12 * norms[i]);
        }
    }

    #[test]
    fn derivative_sign_follows_sigma() {
        let grid = TimeGrid::new(1.0, 16).unwrap();
        let ev = KernelEvaluator::new(h(0.3), DEFAULT_QUAD_TOL).unwrap();
        let op = MalliavinOperator::new(&ev, &grid).unwrap();
        let path = Array1::from_iter((0..17).map(|k| (k as f64 * 0.3).sin()));
        let up = op.derivative(path.view(), &ModelParams::new(0.2, 0.8, 1.0).unwrap()).unwrap();
        let down = op.derivative(path.view(), &ModelParams::new(0.2, -0.8, 1.0).unwrap()).unwrap();
        assert!(up[..16].iter().all(|d| *d > 0.0));
        assert!(down[..16].iter().all(|d| *d < 0.0));
    }

    #[test]
    fn oracles_closed_forms() {
        let e = std::f64::consts::E;
        let p = ModelParams::new(0.0, 2f64.sqrt(), 1.0).unwrap();
        assert!((mean_oracle(&p, h(0.5)).unwrap() - (e - 1.0)).abs() < 1e-10);
        let p = ModelParams::new(0.7, 0.0, 1.5).unwrap();
        let m = ((0.7f64 * 1.5).exp() - 1.0) / 0.7;
        assert!((mean_oracle(&p, h(0.3)).unwrap() - m).abs() < 1e-10 * m);
        assert!((second_moment_oracle(&p, h(0.3)).unwrap() - m * m).abs() < 1e-9 * m * m);
        let p = ModelParams::new(0.0, 0.0, 2.0).unwrap();
        assert!((mean_oracle(&p, h(0.8)).unwrap() - 2.0).abs() < 1e-12);
        let p = ModelParams::new(0.0, 1e-4, 1.0).unwrap();
        assert!((second_moment_oracle(&p, h(0.5)).unwrap() - 1.0).abs() < 1e-7);
    }

    #[test]
    fn brownian_second_moment_closed_form() {
        // H = 1/2, a = 0, σ = 1: E F^2 = 2 ∫_0^1 ∫_0^t e^{(3s + t)/2} ds dt
        let want = 2.0 * (2.0 / 3.0) * ((2f64.exp() - 1.0) / 2.0 - 2.0 * (0.5f64.exp() - 1.0));
        let p = ModelParams::new(0.0, 1.0, 1.0).unwrap();
        let got = second_moment_oracle(&p, h(0.5)).unwrap();
        assert!((got - want).abs() < 1e-9 * want, "{got} vs {want}");
    }
}
