//! The Volterra kernel `K_H(t, s)` of fractional Brownian motion,
//! `B^H_t = ∫_0^t K_H(t, s) dW_s`, together with its calibrated normalizing
//! constant, the fBm covariance and panel-integrated kernel weights.
//!
//! Writing `L = (t - s) / s`, both branches reduce to a power of `s` times a
//! one-dimensional integral in `L`:
//!
//! * `H > 1/2`, `α = H - 1/2`:
//!   `K = c s^α J(L)`, `J(L) = ∫_0^L (1+y)^α y^(α-1) dy`
//! * `H < 1/2`, `ρ = H - 1/2`:
//!   `K = c s^ρ [ (L(1+L))^ρ - ρ M(L) ]`, `M(L) = ∫_0^L (1+y)^(ρ-1) y^ρ dy`
//!
//! Tails for `L > 1` are folded back onto `(0, 1]` with `y = 1/z`. Near
//! zero the integrals are summed as binomial series, which absorbs the
//! endpoint singularity exactly; only the regular part on `[1/2, 1]` goes
//! through adaptive quadrature. Nothing overflows however small `s` gets.

use ndarray::Array2;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::TimeGrid;
use crate::quad::{gauss_kronrod, tanh_sinh, Tolerance};

/// Hurst indices this close to 1/2 use the exact Brownian kernel.
pub const BROWNIAN_BAND: f64 = 1e-6;

pub const DEFAULT_QUAD_TOL: f64 = 1e-8;

#[derive(Debug, Clone, Copy, PartialEq, PartialOrd, Serialize, Deserialize)]
#[serde(try_from = "f64", into = "f64")]
pub struct HurstIndex(f64);

impl HurstIndex {
    pub fn new(value: f64) -> Result<Self> {
        if value > 0.0 && value < 1.0 {
            Ok(HurstIndex(value))
        } else {
            Err(Error::param("H", format!("Hurst index must lie in (0, 1), got {value}")))
        }
    }

    pub fn value(self) -> f64 {
        self.0
    }

    pub fn is_brownian(self) -> bool {
        (self.0 - 0.5).abs() < BROWNIAN_BAND
    }
}

impl TryFrom<f64> for HurstIndex {
    type Error = Error;
    fn try_from(value: f64) -> Result<Self> {
        HurstIndex::new(value)
    }
}

impl From<HurstIndex> for f64 {
    fn from(h: HurstIndex) -> f64 {
        h.0
    }
}

/// `E[B^H_s B^H_t] = (s^{2H} + t^{2H} - |t-s|^{2H}) / 2`.
pub fn fbm_covariance(hurst: HurstIndex, s: f64, t: f64) -> Result<f64> {
    if !(s.is_finite() && t.is_finite() && s >= 0.0 && t >= 0.0) {
        return Err(Error::param("s,t", format!("covariance needs nonnegative times, got ({s}, {t})")));
    }
    let two_h = 2.0 * hurst.value();
    Ok(0.5 * (s.powf(two_h) + t.powf(two_h) - (t - s).abs().powf(two_h)))
}

/// `∫_0^T ∫_0^T E[B^H_s B^H_t] ds dt`, by nested quadrature. The closed
/// form is `T^{2H+2} / (2H+2)`.
pub fn double_covariance_integral(hurst: HurstIndex, horizon: f64, quad_tol: f64) -> Result<f64> {
    let two_h = 2.0 * hurst.value();
    let tol = Tolerance::relative(quad_tol);
    let mut failure = None;
    let outer = tanh_sinh(
        |t, _, _| {
            let inner = tanh_sinh(
                |s, _, gap| 0.5 * (s.powf(two_h) + t.powf(two_h) - gap.powf(two_h)),
                0.0,
                t,
                tol,
            );
            match inner {
                Ok(r) => r.value,
                Err(e) => {
                    failure.get_or_insert(e);
                    0.0
                }
            }
        },
        0.0,
        horizon,
        tol,
    )?;
    match failure {
        Some(e) => Err(e),
        None => Ok(2.0 * outer.value),
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
enum Shape {
    Brownian,
    /// `H > 1/2`; `head = J(1)`, `tail = Q(1)`.
    Smooth { alpha: f64, head: f64, tail: f64 },
    /// `H < 1/2`; `head = M(1)`, `tail = N(1)`.
    Rough { rho: f64, head: f64, tail: f64 },
}

fn inner_tol(quad_tol: f64) -> f64 {
    (quad_tol * 1e-3).max(1e-14)
}

/// `∫_0^x (1+y)^p y^q dy` minus its first `k0` binomial terms, for
/// `0 < x <= 1/2`: `Σ_{k>=k0} C(p,k) x^{k+q+1} / (k+q+1)`.
fn binomial_series(p: f64, q: f64, x: f64, k0: usize) -> f64 {
    let mut coef = 1.0;
    for k in 0..k0 {
        coef *= (p - k as f64) / (k as f64 + 1.0);
    }
    let mut power = x.powf(k0 as f64 + q + 1.0);
    let mut sum = 0.0;
    let mut k = k0;
    loop {
        let term = coef * power / (k as f64 + q + 1.0);
        sum += term;
        if term.abs() <= 1e-17 * sum.abs() || k > 200 {
            return sum;
        }
        coef *= (p - k as f64) / (k as f64 + 1.0);
        power *= x;
        k += 1;
    }
}

const SERIES_EDGE: f64 = 0.5;

/// `∫_0^x (1+y)^p y^q dy`-type integral for `0 < x <= 1`: series up to
/// `1/2`, adaptive quadrature of the regular integrand beyond.
fn split_integral<F: FnMut(f64) -> f64>(p: f64, q: f64, k0: usize, x: f64, tol: f64, integrand: F) -> Result<f64> {
    let head = binomial_series(p, q, x.min(SERIES_EDGE), k0);
    if x <= SERIES_EDGE {
        return Ok(head);
    }
    let rest = gauss_kronrod(integrand, SERIES_EDGE, x, Tolerance::new(tol * head.abs(), tol))?.value;
    Ok(head + rest)
}

// J(L) = ∫_0^L (1+y)^α y^(α-1) dy, 0 < L <= 1
fn smooth_head(alpha: f64, l: f64, tol: f64) -> Result<f64> {
    split_integral(alpha, alpha - 1.0, 0, l, tol, |y| (1.0 + y).powf(alpha) * y.powf(alpha - 1.0))
}

// Q(ε) = ∫_0^ε z^(-1-2α) ((1+z)^α - 1) dz
fn smooth_tail(alpha: f64, eps: f64, tol: f64) -> Result<f64> {
    if eps == 0.0 {
        return Ok(0.0);
    }
    split_integral(alpha, -1.0 - 2.0 * alpha, 1, eps, tol, |z| {
        (alpha * z.ln_1p()).exp_m1() * z.powf(-1.0 - 2.0 * alpha)
    })
}

// M(L) = ∫_0^L (1+y)^(ρ-1) y^ρ dy, 0 < L <= 1
fn rough_head(rho: f64, l: f64, tol: f64) -> Result<f64> {
    split_integral(rho - 1.0, rho, 0, l, tol, |y| (1.0 + y).powf(rho - 1.0) * y.powf(rho))
}

// N(ε) = ∫_0^ε (1+z)^(ρ-1) z^(-2H) dz, with 2H = 2ρ + 1
fn rough_tail(rho: f64, eps: f64, tol: f64) -> Result<f64> {
    if eps == 0.0 {
        return Ok(0.0);
    }
    split_integral(rho - 1.0, -2.0 * rho - 1.0, 0, eps, tol, |z| {
        (1.0 + z).powf(rho - 1.0) * z.powf(-2.0 * rho - 1.0)
    })
}

impl Shape {
    fn new(hurst: HurstIndex, quad_tol: f64) -> Result<Self> {
        let h = hurst.value();
        let tol = inner_tol(quad_tol);
        if hurst.is_brownian() {
            Ok(Shape::Brownian)
        } else if h > 0.5 {
            let alpha = h - 0.5;
            Ok(Shape::Smooth {
                alpha,
                head: smooth_head(alpha, 1.0, tol)?,
                tail: smooth_tail(alpha, 1.0, tol)?,
            })
        } else {
            let rho = h - 0.5;
            Ok(Shape::Rough {
                rho,
                head: rough_head(rho, 1.0, tol)?,
                tail: rough_tail(rho, 1.0, tol)?,
            })
        }
    }

    /// Kernel with unit normalizing constant at `(s + gap, s)`.
    fn eval(&self, s: f64, gap: f64, tol: f64) -> Result<f64> {
        match *self {
            Shape::Brownian => Ok(1.0),
            Shape::Smooth { alpha, head, tail } => {
                let l = gap / s;
                if l <= 1.0 {
                    Ok(s.powf(alpha) * smooth_head(alpha, l, tol)?)
                } else {
                    // J(L) = J(1) + (L^{2α} - 1)/(2α) + Q(1) - Q(1/L); the
                    // L^{2α} part is formed in logs so s -> 0 cannot overflow.
                    let q = smooth_tail(alpha, s / gap, tol)?;
                    let growth = (2.0 * alpha * gap.ln() - alpha * s.ln()).exp() / (2.0 * alpha);
                    Ok(s.powf(alpha) * (head + tail - q - 0.5 / alpha) + growth)
                }
            }
            Shape::Rough { rho, head, tail } => {
                let l = gap / s;
                let m = if l <= 1.0 {
                    rough_head(rho, l, tol)?
                } else {
                    head + tail - rough_tail(rho, s / gap, tol)?
                };
                let front = (rho * (gap.ln() + (s + gap).ln() - s.ln())).exp();
                Ok(front - rho * s.powf(rho) * m)
            }
        }
    }
}

/// Evaluates `K_H` with a calibrated normalizing constant.
#[derive(Debug, Clone, PartialEq)]
pub struct KernelEvaluator {
    hurst: HurstIndex,
    c_h: f64,
    quad_tol: f64,
    horizon: f64,
    shape: Shape,
}

impl KernelEvaluator {
    /// Calibrates `c_H` so that `∫_0^1 K_H(1, s)^2 ds = 1`.
    pub fn new(hurst: HurstIndex, quad_tol: f64) -> Result<Self> {
        let c_h = calibrate_normalizing_constant(hurst, quad_tol)?;
        Self::with_constant(hurst, c_h, quad_tol)
    }

    /// Uses the given constant as is. Mostly useful for fault injection.
    pub fn with_constant(hurst: HurstIndex, c_h: f64, quad_tol: f64) -> Result<Self> {
        check_tol(quad_tol)?;
        if !(c_h.is_finite() && c_h > 0.0) {
            return Err(Error::param("c_H", format!("normalizing constant must be positive, got {c_h}")));
        }
        Ok(KernelEvaluator {
            hurst,
            c_h,
            quad_tol,
            horizon: f64::INFINITY,
            shape: Shape::new(hurst, quad_tol)?,
        })
    }

    /// Restricts kernel evaluation to `t <= horizon`.
    pub fn with_horizon(mut self, horizon: f64) -> Result<Self> {
        if !(horizon > 0.0) {
            return Err(Error::param("T", format!("horizon must be positive, got {horizon}")));
        }
        self.horizon = horizon;
        Ok(self)
    }

    pub fn hurst(&self) -> HurstIndex {
        self.hurst
    }

    pub fn normalizing_constant(&self) -> f64 {
        self.c_h
    }

    pub fn quad_tol(&self) -> f64 {
        self.quad_tol
    }

    pub fn is_brownian(&self) -> bool {
        matches!(self.shape, Shape::Brownian)
    }

    /// Exponent `γ` of the blow-up `K_H(t, r) ~ r^γ` as `r -> 0`.
    pub fn origin_exponent(&self) -> f64 {
        if self.is_brownian() {
            0.0
        } else {
            -(self.hurst.value() - 0.5).abs()
        }
    }

    /// `K_H(t, s)` for `0 < s < t <= T`.
    pub fn kernel(&self, t: f64, s: f64) -> Result<f64> {
        if !(s.is_finite() && t.is_finite() && s > 0.0 && s < t && t <= self.horizon) {
            return Err(Error::KernelDomain { t, s });
        }
        self.kernel_with_gap(s, t - s)
    }

    /// `K_H(s + gap, s)`. Passing the gap directly keeps the `t - s`
    /// singularity accurate when `t` and `s` are close.
    pub fn kernel_with_gap(&self, s: f64, gap: f64) -> Result<f64> {
        if !(s > 0.0 && gap > 0.0) {
            return Err(Error::KernelDomain { t: s + gap, s });
        }
        Ok(self.c_h * self.shape.eval(s, gap, inner_tol(self.quad_tol))?)
    }

    /// `∫_0^s K_H(s, r)^2 dr`; equals `s^{2H}` for a calibrated evaluator.
    pub fn kernel_l2_norm(&self, s: f64) -> Result<f64> {
        if !(s > 0.0 && s <= self.horizon) {
            return Err(Error::param("s", format!("need 0 < s <= T, got {s}")));
        }
        if self.is_brownian() {
            return Ok(self.c_h * self.c_h * s);
        }
        outer_integral(
            |r, _, gap| self.kernel_with_gap(r, gap).map(|k| k * k),
            0.0,
            s,
            self.quad_tol,
        )
    }

    /// `∫_0^{s∧t} K_H(s, r) K_H(t, r) dr`; equals `E[B^H_s B^H_t]`.
    pub fn kernel_cross_integral(&self, s: f64, t: f64) -> Result<f64> {
        for v in [s, t] {
            if !(v > 0.0 && v <= self.horizon) {
                return Err(Error::param("s,t", format!("need 0 < s, t <= T, got {v}")));
            }
        }
        let (lo, hi) = if s <= t { (s, t) } else { (t, s) };
        if self.is_brownian() {
            return Ok(self.c_h * self.c_h * lo);
        }
        let offset = hi - lo;
        outer_integral(
            |r, _, gap| {
                let a = self.kernel_with_gap(r, gap)?;
                let b = self.kernel_with_gap(r, gap + offset)?;
                Ok(a * b)
            },
            0.0,
            lo,
            self.quad_tol,
        )
    }
}

fn check_tol(quad_tol: f64) -> Result<()> {
    if quad_tol > 0.0 && quad_tol < 1e-2 {
        Ok(())
    } else {
        Err(Error::param("quad_tol", format!("tolerance must lie in (0, 0.01), got {quad_tol}")))
    }
}

/// Tanh-sinh over a range whose endpoints may carry integrable
/// singularities; the closure sees `(x, x - lower, upper - x)`.
pub(crate) fn outer_integral<F>(mut f: F, lower: f64, upper: f64, quad_tol: f64) -> Result<f64>
where
    F: FnMut(f64, f64, f64) -> Result<f64>,
{
    let mut failure = None;
    let r = tanh_sinh(
        |x, da, db| match f(x, da, db) {
            Ok(v) => v,
            Err(e) => {
                failure.get_or_insert(e);
                0.0
            }
        },
        lower,
        upper,
        Tolerance::relative(quad_tol * 0.1),
    );
    if let Some(e) = failure {
        return Err(e);
    }
    Ok(r?.value)
}

/// Panel integral over `[lower, upper]` with a smooth integrand.
pub(crate) fn panel_integral<F>(mut f: F, lower: f64, upper: f64, quad_tol: f64) -> Result<f64>
where
    F: FnMut(f64) -> Result<f64>,
{
    let mut failure = None;
    let r = gauss_kronrod(
        |x| match f(x) {
            Ok(v) => v,
            Err(e) => {
                failure.get_or_insert(e);
                0.0
            }
        },
        lower,
        upper,
        Tolerance::relative(quad_tol * 0.1),
    );
    if let Some(e) = failure {
        return Err(e);
    }
    Ok(r?.value)
}

/// `c_H` with `∫_0^1 K_H(1, s)^2 ds = 1`. The kernel is linear in the
/// constant, so this is `1 / sqrt(∫ K̃^2)` for the unit-constant kernel.
pub fn calibrate_normalizing_constant(hurst: HurstIndex, quad_tol: f64) -> Result<f64> {
    check_tol(quad_tol)?;
    let shape = Shape::new(hurst, quad_tol)?;
    if shape == Shape::Brownian {
        return Ok(1.0);
    }
    let tol = inner_tol(quad_tol);
    let energy = outer_integral(
        |s, _, gap| shape.eval(s, gap, tol).map(|k| k * k),
        0.0,
        1.0,
        quad_tol,
    )?;
    Ok(1.0 / energy.sqrt())
}

/// Lower-triangular matrix of panel weights: entry `(i, j)` (both 1-based,
/// `j <= i`) is the signed root of `∫_{t_{j-1}}^{t_j} K_H(t_i, s)^2 ds`, so
/// that `Σ_j w_ij^2 = t_i^{2H}` and `B_{t_i} ≈ Σ_j w_ij Z_j` with standard
/// normal `Z_j = ΔW_j / sqrt(dt)`.
#[derive(Debug, Clone, PartialEq)]
pub struct WeightMatrix {
    hurst: HurstIndex,
    grid: TimeGrid,
    // row i-1 <-> node t_i, column j-1 <-> panel [t_{j-1}, t_j]
    weights: Array2<f64>,
}

impl WeightMatrix {
    pub fn from_parts(hurst: HurstIndex, grid: TimeGrid, weights: Array2<f64>) -> Result<Self> {
        let n = grid.steps();
        if weights.dim() != (n, n) {
            return Err(Error::Mismatch(format!(
                "weight matrix is {:?}, grid needs ({n}, {n})",
                weights.dim()
            )));
        }
        for ((i, j), w) in weights.indexed_iter() {
            if !w.is_finite() || (j > i && *w != 0.0) {
                return Err(Error::Format(format!("weight ({}, {}) = {w} is not lower-triangular/finite", i + 1, j + 1)));
            }
        }
        Ok(WeightMatrix { hurst, grid, weights })
    }

    pub fn hurst(&self) -> HurstIndex {
        self.hurst
    }

    pub fn grid(&self) -> &TimeGrid {
        &self.grid
    }

    /// `w_ij`, 1-based as in the grid, zero above the diagonal.
    pub fn get(&self, i: usize, j: usize) -> f64 {
        if i == 0 || j == 0 || j > i {
            0.0
        } else {
            self.weights[[i - 1, j - 1]]
        }
    }

    pub fn as_array(&self) -> &Array2<f64> {
        &self.weights
    }

    /// `Σ_j w_ij^2`, the discrete variance of `B_{t_i}`.
    pub fn row_energy(&self, i: usize) -> f64 {
        if i == 0 {
            return 0.0;
        }
        self.weights.row(i - 1).iter().map(|w| w * w).sum()
    }

    /// Discrete covariance `Σ_j w_ij w_kj` of nodes `i` and `k`.
    pub fn covariance(&self, i: usize, k: usize) -> f64 {
        if i == 0 || k == 0 {
            return 0.0;
        }
        self.weights
            .row(i - 1)
            .iter()
            .zip(self.weights.row(k - 1))
            .map(|(a, b)| a * b)
            .sum()
    }
}

/// Builds the [`WeightMatrix`] for `grid`. Rows are independent and are
/// computed in parallel.
pub fn integrated_kernel_weights(ev: &KernelEvaluator, grid: &TimeGrid) -> Result<WeightMatrix> {
    let n = grid.steps();
    let dt = grid.dt();
    let mut weights = Array2::<f64>::zeros((n, n));
    if ev.is_brownian() {
        let w = ev.normalizing_constant() * dt.sqrt();
        for i in 0..n {
            for j in 0..=i {
                weights[[i, j]] = w;
            }
        }
        return WeightMatrix::from_parts(ev.hurst(), *grid, weights);
    }
    let rows: Vec<Result<Vec<f64>>> = (1..=n)
        .into_par_iter()
        .map(|i| {
            let t = grid.node(i);
            (1..=i)
                .map(|j| {
                    let lo = grid.node(j - 1);
                    let hi = grid.node(j);
                    let energy = if j == 1 || j == i {
                        outer_integral(
                            |s, _, db| ev.kernel_with_gap(s, (t - hi) + db).map(|k| k * k),
                            lo,
                            hi,
                            ev.quad_tol,
                        )
                    } else {
                        panel_integral(|s| ev.kernel_with_gap(s, t - s).map(|k| k * k), lo, hi, ev.quad_tol)
                    }
                    .map_err(|e| Error::WeightPanel {
                        row: i,
                        col: j,
                        source: Box::new(e),
                    })?;
                    let mid = 0.5 * (lo + hi);
                    let sign = ev
                        .kernel_with_gap(mid, t - mid)
                        .map_err(|e| Error::WeightPanel {
                            row: i,
                            col: j,
                            source: Box::new(e),
                        })?
                        .signum();
                    Ok(sign * energy.max(0.0).sqrt())
                })
                .collect()
        })
        .collect();
    for (i, row) in rows.into_iter().enumerate() {
        for (j, w) in row?.into_iter().enumerate() {
            weights[[i, j]] = w;
        }
    }
    WeightMatrix::from_parts(ev.hurst(), *grid, weights)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn h(v: f64) -> HurstIndex {
        HurstIndex::new(v).unwrap()
    }

    #[test]
    fn hurst_validation() {
        for bad in [0.0, 1.0, -0.2, 1.5, f64::NAN, f64::INFINITY] {
            assert!(HurstIndex::new(bad).is_err(), "{bad}");
        }
        assert!(h(0.5 + 5e-7).is_brownian());
        assert!(!h(0.5 + 2e-6).is_brownian());
    }

    #[test]
    fn covariance_closed_forms() {
        assert_eq!(fbm_covariance(h(0.3), 1.0, 1.0).unwrap(), 1.0);
        assert!((fbm_covariance(h(0.5), 0.5, 1.0).unwrap() - 0.5).abs() < 1e-15);
        let v = fbm_covariance(h(0.75), 0.25, 1.0).unwrap();
        assert!((v - 0.5 * (0.25f64.powf(1.5) + 1.0 - 0.75f64.powf(1.5))).abs() < 1e-15);
        assert!((v - 0.23774).abs() < 1e-5);
        assert!(fbm_covariance(h(0.5), -1.0, 1.0).is_err());
    }

    #[test]
    fn brownian_kernel_is_indicator() {
        let ev = KernelEvaluator::new(h(0.5), DEFAULT_QUAD_TOL).unwrap();
        assert_eq!(ev.normalizing_constant(), 1.0);
        assert_eq!(ev.kernel(1.0, 0.3).unwrap(), 1.0);
        assert_eq!(ev.kernel_l2_norm(0.7).unwrap(), 0.7);
        assert_eq!(ev.kernel_cross_integral(0.9, 0.4).unwrap(), 0.4);
    }

    #[test]
    fn kernel_domain_errors() {
        let ev = KernelEvaluator::new(h(0.7), DEFAULT_QUAD_TOL)
            .unwrap()
            .with_horizon(1.0)
            .unwrap();
        assert!(matches!(ev.kernel(1.0, 0.0), Err(Error::KernelDomain { .. })));
        assert!(matches!(ev.kernel(0.5, 0.5), Err(Error::KernelDomain { .. })));
        assert!(matches!(ev.kernel(0.5, 0.7), Err(Error::KernelDomain { .. })));
        assert!(matches!(ev.kernel(1.5, 0.7), Err(Error::KernelDomain { .. })));
        assert!(matches!(ev.kernel(f64::NAN, 0.7), Err(Error::KernelDomain { .. })));
    }

    #[test]
    fn kernel_is_positive_and_continuous_across_l_equals_one() {
        for hv in [0.1, 0.3, 0.45, 0.55, 0.7, 0.9] {
            let ev = KernelEvaluator::new(h(hv), DEFAULT_QUAD_TOL).unwrap();
            let below = ev.kernel_with_gap(1.0, 1.0 - 1e-12).unwrap();
            let above = ev.kernel_with_gap(1.0, 1.0 + 1e-12).unwrap();
            assert!(below > 0.0);
            assert!((below - above).abs() < 1e-9 * below, "H={hv}: {below} vs {above}");
        }
    }

    #[test]
    fn homogeneity() {
        // K(λt, λs) = λ^{H-1/2} K(t, s)
        for hv in [0.2, 0.8] {
            let ev = KernelEvaluator::new(h(hv), DEFAULT_QUAD_TOL).unwrap();
            let k1 = ev.kernel(0.8, 0.3).unwrap();
            let k2 = ev.kernel(0.4, 0.15).unwrap();
            assert!((k2 - 0.5f64.powf(hv - 0.5) * k1).abs() < 1e-10 * k1.abs());
        }
    }

    #[test]
    fn kernel_l2_norm_matches_variance() {
        for (hv, s) in [(0.7, 1.0), (0.3, 0.5), (0.1, 0.25), (0.9, 0.1)] {
            let ev = KernelEvaluator::new(h(hv), DEFAULT_QUAD_TOL).unwrap();
            let v = ev.kernel_l2_norm(s).unwrap();
            let expected = s.powf(2.0 * hv);
            assert!((v - expected).abs() < 1e-6, "H={hv} s={s}: {v} vs {expected}");
        }
    }

    #[test]
    fn cross_integral_matches_covariance() {
        let ev = KernelEvaluator::new(h(0.7), DEFAULT_QUAD_TOL).unwrap();
        let v = ev.kernel_cross_integral(0.5, 1.0).unwrap();
        let c = fbm_covariance(h(0.7), 0.5, 1.0).unwrap();
        assert!((v - c).abs() < 1e-5);
        assert_eq!(ev.kernel_cross_integral(0.6, 0.6).unwrap(), ev.kernel_l2_norm(0.6).unwrap());
    }

    #[test]
    fn double_covariance_constant() {
        for hv in [0.2, 0.5, 0.8] {
            for t in [0.5, 2.0] {
                let v = double_covariance_integral(h(hv), t, 1e-10).unwrap();
                let expected = t.powf(2.0 * hv + 2.0) / (2.0 * hv + 2.0);
                assert!((v / expected - 1.0).abs() < 1e-8, "H={hv} T={t}");
            }
        }
    }

    #[test]
    fn brownian_weights_are_root_dt() {
        let grid = TimeGrid::new(1.0, 16).unwrap();
        let ev = KernelEvaluator::new(h(0.5), DEFAULT_QUAD_TOL).unwrap();
        let w = integrated_kernel_weights(&ev, &grid).unwrap();
        for i in 1..=16 {
            for j in 1..=16 {
                let expected = if j <= i { grid.dt().sqrt() } else { 0.0 };
                assert_eq!(w.get(i, j), expected);
            }
        }
    }

    #[test]
    fn weight_rows_carry_exact_variance_and_grow() {
        let grid = TimeGrid::new(1.0, 32).unwrap();
        for hv in [0.2, 0.75] {
            let ev = KernelEvaluator::new(h(hv), DEFAULT_QUAD_TOL).unwrap();
            let w = integrated_kernel_weights(&ev, &grid).unwrap();
            let mut last = 0.0;
            for i in 1..=32 {
                let e = w.row_energy(i);
                let expected = grid.node(i).powf(2.0 * hv);
                assert!((e - expected).abs() < 1e-6 * expected.max(1e-3), "H={hv} i={i}");
                assert!(e > last);
                last = e;
            }
        }
    }

    #[test]
    fn rejects_bad_constant_and_tolerance() {
        assert!(KernelEvaluator::with_constant(h(0.3), -1.0, 1e-8).is_err());
        assert!(KernelEvaluator::new(h(0.3), 0.0).is_err());
        assert!(KernelEvaluator::new(h(0.3), 0.5).is_err());
    }
}
