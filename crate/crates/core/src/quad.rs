//! Numerical integration used by the kernel and functional modules.
//!
//! Two rules are provided:
//!
//! * [`gauss_kronrod`]: globally adaptive 7/15-point Gauss–Kronrod with
//!   bisection, for integrands that are smooth or have mild endpoint
//!   behaviour.
//! * [`tanh_sinh`]: double-exponential quadrature for integrable algebraic
//!   endpoint singularities. The integrand receives the distances to both
//!   endpoints so it can evaluate singular factors without cancellation.

use std::sync::OnceLock;

use crate::error::{Error, Result};

/// Quadrature tolerances. An integral is accepted once its error estimate
/// is below `max(abs, rel * |estimate|)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Tolerance {
    pub abs: f64,
    pub rel: f64,
}

impl Tolerance {
    pub fn relative(rel: f64) -> Self {
        Tolerance { abs: 0.0, rel }
    }

    pub fn new(abs: f64, rel: f64) -> Self {
        Tolerance { abs, rel }
    }

    fn target(&self, estimate: f64) -> f64 {
        self.abs.max(self.rel * estimate.abs())
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Integral {
    pub value: f64,
    pub error: f64,
}

const XGK: [f64; 8] = [
    0.991_455_371_120_812_6,
    0.949_107_912_342_758_5,
    0.864_864_423_359_769_1,
    0.741_531_185_599_394_4,
    0.586_087_235_467_691_1,
    0.405_845_151_377_397_2,
    0.207_784_955_007_898_5,
    0.0,
];

const WGK: [f64; 8] = [
    0.022_935_322_010_529_22,
    0.063_092_092_629_978_55,
    0.104_790_010_322_250_2,
    0.140_653_259_715_525_9,
    0.169_004_726_639_267_9,
    0.190_350_578_064_785_4,
    0.204_432_940_075_298_9,
    0.209_482_141_084_727_8,
];

const WG: [f64; 4] = [
    0.129_484_966_168_869_7,
    0.279_705_391_489_276_7,
    0.381_830_050_505_118_9,
    0.417_959_183_673_469_4,
];

const MAX_INTERVALS: usize = 400;

#[derive(Debug, Clone, Copy)]
struct Panel {
    lower: f64,
    upper: f64,
    value: f64,
    error: f64,
}

fn gk15<F: FnMut(f64) -> f64>(f: &mut F, lower: f64, upper: f64) -> Panel {
    let center = 0.5 * (lower + upper);
    let half = 0.5 * (upper - lower);
    let fc = f(center);
    let mut kronrod = WGK[7] * fc;
    let mut gauss = WG[3] * fc;
    let mut res_abs = kronrod.abs();
    let mut fv1 = [0.0; 7];
    let mut fv2 = [0.0; 7];
    for j in 0..7 {
        let x = half * XGK[j];
        let f1 = f(center - x);
        let f2 = f(center + x);
        fv1[j] = f1;
        fv2[j] = f2;
        kronrod += WGK[j] * (f1 + f2);
        res_abs += WGK[j] * (f1.abs() + f2.abs());
        if j % 2 == 1 {
            gauss += WG[j / 2] * (f1 + f2);
        }
    }
    let mean = 0.5 * kronrod;
    let mut res_asc = WGK[7] * (fc - mean).abs();
    for j in 0..7 {
        res_asc += WGK[j] * ((fv1[j] - mean).abs() + (fv2[j] - mean).abs());
    }
    let value = kronrod * half;
    let res_abs = res_abs * half.abs();
    let res_asc = res_asc * half.abs();
    let mut error = ((kronrod - gauss) * half).abs();
    if res_asc != 0.0 && error != 0.0 {
        error = res_asc * (200.0 * error / res_asc).powf(1.5).min(1.0);
    }
    if res_abs > f64::MIN_POSITIVE / (50.0 * f64::EPSILON) {
        error = error.max(50.0 * f64::EPSILON * res_abs);
    }
    Panel {
        lower,
        upper,
        value,
        error,
    }
}

/// Globally adaptive Gauss–Kronrod quadrature of `f` over `[lower, upper]`.
pub fn gauss_kronrod<F>(mut f: F, lower: f64, upper: f64, tol: Tolerance) -> Result<Integral>
where
    F: FnMut(f64) -> f64,
{
    if lower == upper {
        return Ok(Integral {
            value: 0.0,
            error: 0.0,
        });
    }
    let first = gk15(&mut f, lower, upper);
    if !first.value.is_finite() {
        return Err(Error::Quadrature {
            lower,
            upper,
            estimate: first.value,
            error: first.error,
        });
    }
    let mut panels = vec![first];
    let mut value = first.value;
    let mut error = first.error;
    while error > tol.target(value) {
        if panels.len() >= MAX_INTERVALS {
            return Err(Error::Quadrature {
                lower,
                upper,
                estimate: value,
                error,
            });
        }
        let (worst, _) = panels
            .iter()
            .enumerate()
            .max_by(|a, b| a.1.error.total_cmp(&b.1.error))
            .expect("nonempty");
        let p = panels.swap_remove(worst);
        let mid = 0.5 * (p.lower + p.upper);
        if mid <= p.lower.min(p.upper) || mid >= p.lower.max(p.upper) {
            // interval exhausted in floating point; accept what we have
            panels.push(p);
            break;
        }
        let left = gk15(&mut f, p.lower, mid);
        let right = gk15(&mut f, mid, p.upper);
        value += left.value + right.value - p.value;
        error += left.error + right.error - p.error;
        panels.push(left);
        panels.push(right);
        if !value.is_finite() {
            return Err(Error::Quadrature {
                lower,
                upper,
                estimate: value,
                error,
            });
        }
    }
    // Re-sum to shed the drift of the running updates.
    let value = panels.iter().map(|p| p.value).sum();
    let error = panels.iter().map(|p| p.error).sum();
    Ok(Integral { value, error })
}

const TS_MAX_LEVEL: usize = 10;
const TS_T_MAX: f64 = 6.5;

/// Abscissa data for one level: `(weight, complement)` where the node in
/// `[-1, 1]` coordinates is `±(1 - complement)`.
struct TanhSinhTable {
    levels: Vec<Vec<(f64, f64)>>,
}

fn ts_node(t: f64) -> (f64, f64) {
    let v = std::f64::consts::FRAC_PI_2 * t.sinh();
    let e = (-2.0 * v).exp();
    let complement = 2.0 * e / (1.0 + e);
    let weight = std::f64::consts::FRAC_PI_2 * t.cosh() * 4.0 * e / ((1.0 + e) * (1.0 + e));
    (weight, complement)
}

fn table() -> &'static TanhSinhTable {
    static TABLE: OnceLock<TanhSinhTable> = OnceLock::new();
    TABLE.get_or_init(|| {
        let mut levels = Vec::with_capacity(TS_MAX_LEVEL + 1);
        // level 0: t = 1, 2, ... (t = 0 handled separately)
        let mut first = Vec::new();
        let mut k = 1;
        while (k as f64) <= TS_T_MAX {
            first.push(ts_node(k as f64));
            k += 1;
        }
        levels.push(first);
        for level in 1..=TS_MAX_LEVEL {
            let h = (0.5f64).powi(level as i32);
            let mut nodes = Vec::new();
            let mut k = 1usize;
            loop {
                let t = k as f64 * h;
                if t > TS_T_MAX {
                    break;
                }
                nodes.push(ts_node(t));
                k += 2;
            }
            levels.push(nodes);
        }
        TanhSinhTable { levels }
    })
}

/// Double-exponential quadrature of `f(x, x - lower, upper - x)` over
/// `[lower, upper]`. Nodes whose endpoint distance underflows to zero are
/// skipped, so `f` is never evaluated exactly at an endpoint.
pub fn tanh_sinh<F>(mut f: F, lower: f64, upper: f64, tol: Tolerance) -> Result<Integral>
where
    F: FnMut(f64, f64, f64) -> f64,
{
    let width = upper - lower;
    if width == 0.0 {
        return Ok(Integral {
            value: 0.0,
            error: 0.0,
        });
    }
    let half = 0.5 * width;
    let tab = table();
    let center = std::f64::consts::FRAC_PI_2 * f(lower + half, half, half);
    let mut eval_level = |nodes: &[(f64, f64)]| -> f64 {
        let mut sum = 0.0;
        for &(w, d) in nodes {
            let near = half * d;
            if near == 0.0 {
                break;
            }
            let far = width - near;
            let left = f(lower + near, near, far);
            let right = f(upper - near, far, near);
            sum += w * (left + right);
        }
        sum
    };
    let mut sum = center;
    sum += eval_level(&tab.levels[0]);
    let mut h = 1.0;
    let mut previous = sum * h * half;
    let mut error = f64::INFINITY;
    for level in 1..=TS_MAX_LEVEL {
        h *= 0.5;
        sum += eval_level(&tab.levels[level]);
        let current = sum * h * half;
        if !current.is_finite() {
            return Err(Error::Quadrature {
                lower,
                upper,
                estimate: current,
                error,
            });
        }
        error = (current - previous).abs();
        if level >= 3 && error <= tol.target(current) {
            return Ok(Integral {
                value: current,
                error,
            });
        }
        previous = current;
    }
    Err(Error::Quadrature {
        lower,
        upper,
        estimate: previous,
        error,
    })
}
