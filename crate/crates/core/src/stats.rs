//! Empirical distributions and distance estimators.

use std::fmt;
use std::str::FromStr;

use ndarray::{ArrayView2, Axis};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::TimeGrid;

pub const DEFAULT_ALPHA: f64 = 0.01;
pub const REPORT_SCHEMA_VERSION: u32 = 1;

/// Monte Carlo estimate with its standard error.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Estimate {
    #[serde(rename = "estimate")]
    pub value: f64,
    pub stderr: f64,
}

impl Estimate {
    pub const ZERO: Estimate = Estimate { value: 0.0, stderr: 0.0 };

    /// Sample mean and standard error of the mean.
    pub fn from_sample(xs: &[f64]) -> Result<Self> {
        if xs.is_empty() {
            return Err(Error::EmptySample);
        }
        let n = xs.len() as f64;
        // Summing about the first value keeps constant samples exact.
        let pivot = xs[0];
        let mean = pivot + xs.iter().map(|x| x - pivot).sum::<f64>() / n;
        let var = if xs.len() > 1 {
            xs.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / (n - 1.0)
        } else {
            0.0
        };
        Ok(Estimate {
            value: mean,
            stderr: (var / n).sqrt(),
        })
    }

    /// True when the value cannot be told apart from zero at `z` standard errors.
    pub fn is_noise(&self, z: f64) -> bool {
        self.value <= z * self.stderr
    }
}

/// Right-continuous empirical distribution function.
#[derive(Debug, Clone, PartialEq)]
pub struct EmpiricalCdf {
    sorted: Vec<f64>,
}

impl EmpiricalCdf {
    pub fn new(sample: &[f64]) -> Result<Self> {
        if sample.is_empty() {
            return Err(Error::EmptySample);
        }
        if sample.iter().any(|x| x.is_nan()) {
            return Err(Error::param("sample", "contains NaN"));
        }
        let mut sorted = sample.to_vec();
        sorted.sort_by(f64::total_cmp);
        Ok(EmpiricalCdf { sorted })
    }

    pub fn len(&self) -> usize {
        self.sorted.len()
    }

    pub fn is_empty(&self) -> bool {
        self.sorted.is_empty()
    }

    pub fn values(&self) -> &[f64] {
        &self.sorted
    }

    /// Fraction of sample values `<= x`.
    pub fn eval(&self, x: f64) -> f64 {
        let count = self.sorted.partition_point(|v| *v <= x);
        count as f64 / self.sorted.len() as f64
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct KsResult {
    pub statistic: f64,
    pub radius: f64,
    pub alpha: f64,
}

impl KsResult {
    pub fn rejects(&self) -> bool {
        self.statistic > self.radius
    }
}

/// Two-sample DKW-type radius at level `alpha`.
pub fn dkw_radius(n1: usize, n2: usize, alpha: f64) -> Result<f64> {
    if n1 == 0 || n2 == 0 {
        return Err(Error::EmptySample);
    }
    if !(alpha > 0.0 && alpha < 1.0) {
        return Err(Error::param("alpha", format!("must lie in (0, 1), got {alpha}")));
    }
    let (a, b) = (n1 as f64, n2 as f64);
    Ok(((2.0 / alpha).ln() * (a + b) / (2.0 * a * b)).sqrt())
}

/// Exact sup distance between two empirical CDFs by a merge over the
/// pooled sorted values.
pub fn ks_statistic(e1: &EmpiricalCdf, e2: &EmpiricalCdf) -> f64 {
    let (x, y) = (e1.values(), e2.values());
    let (n1, n2) = (x.len() as f64, y.len() as f64);
    let (mut i, mut j) = (0, 0);
    let mut best: f64 = 0.0;
    while i < x.len() && j < y.len() {
        let v = x[i].min(y[j]);
        while i < x.len() && x[i] <= v {
            i += 1;
        }
        while j < y.len() && y[j] <= v {
            j += 1;
        }
        best = best.max((i as f64 / n1 - j as f64 / n2).abs());
    }
    // Past the end of one sample its CDF is 1, so the remaining gap is
    // largest right where the merge stopped.
    if i < x.len() || j < y.len() {
        best = best.max((i as f64 / n1 - j as f64 / n2).abs());
    }
    best
}

pub fn ks_two_sample(s1: &[f64], s2: &[f64], alpha: f64) -> Result<KsResult> {
    let e1 = EmpiricalCdf::new(s1)?;
    let e2 = EmpiricalCdf::new(s2)?;
    Ok(KsResult {
        statistic: ks_statistic(&e1, &e2),
        radius: dkw_radius(s1.len(), s2.len(), alpha)?,
        alpha,
    })
}

fn check_paired(a: usize, b: usize) -> Result<()> {
    if a != b {
        return Err(Error::Mismatch(format!("coupled samples have lengths {a} and {b}")));
    }
    if a == 0 {
        return Err(Error::EmptySample);
    }
    Ok(())
}

/// `E|F1 - F2|^2` over coupled samples.
pub fn coupled_l2_distance(f1: &[f64], f2: &[f64]) -> Result<Estimate> {
    check_paired(f1.len(), f2.len())?;
    let sq: Vec<f64> = f1.iter().zip(f2).map(|(a, b)| (a - b) * (a - b)).collect();
    Estimate::from_sample(&sq)
}

/// `∫ E|D_r F1 - D_r F2|^2 dr` over coupled batches, one path per row.
pub fn coupled_derivative_l2_distance(
    df1: ArrayView2<'_, f64>,
    df2: ArrayView2<'_, f64>,
    grid: &TimeGrid,
) -> Result<Estimate> {
    check_paired(df1.nrows(), df2.nrows())?;
    for d in [df1.ncols(), df2.ncols()] {
        if d != grid.nodes_len() {
            return Err(Error::Mismatch(format!("derivative rows have {d} nodes, grid has {}", grid.nodes_len())));
        }
    }
    let weights = grid.trapezoid_weights();
    let per_path: Vec<f64> = df1
        .axis_iter(Axis(0))
        .zip(df2.axis_iter(Axis(0)))
        .map(|(a, b)| {
            a.iter()
                .zip(b.iter())
                .zip(&weights)
                .map(|((x, y), w)| w * (x - y) * (x - y))
                .sum()
        })
        .collect();
    Estimate::from_sample(&per_path)
}

/// Bounded continuous test functions `ψ`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "String", into = "String")]
pub enum TestFunction {
    /// `min(max(x - κ, 0), 1)`
    Clip01 { kappa: f64 },
    Cos,
    /// `1 / (1 + e^{-(x - κ)})`
    Sigmoid { kappa: f64 },
    Constant(f64),
}

impl TestFunction {
    pub const DEFAULT_KAPPA: f64 = 1.0;

    pub fn eval(&self, x: f64) -> f64 {
        match *self {
            TestFunction::Clip01 { kappa } => (x - kappa).clamp(0.0, 1.0),
            TestFunction::Cos => x.cos(),
            TestFunction::Sigmoid { kappa } => 1.0 / (1.0 + (kappa - x).exp()),
            TestFunction::Constant(c) => c,
        }
    }
}

impl fmt::Display for TestFunction {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            TestFunction::Clip01 { kappa } => write!(f, "clip01:{kappa}"),
            TestFunction::Cos => f.write_str("cos"),
            TestFunction::Sigmoid { kappa } => write!(f, "sigmoid:{kappa}"),
            TestFunction::Constant(c) => write!(f, "const:{c}"),
        }
    }
}

impl FromStr for TestFunction {
    type Err = Error;

    /// Accepts `cos`, `clip01[:κ]`, `sigmoid[:κ]` and `const[:c]`.
    fn from_str(s: &str) -> Result<Self> {
        let unknown = || Error::UnknownTestFunction(s.to_string());
        let (name, arg) = match s.trim().split_once(':') {
            Some((n, a)) => (n, Some(a.trim())),
            None => (s.trim(), None),
        };
        let number = |default: f64| -> Result<f64> {
            match arg {
                None => Ok(default),
                Some(a) => match a.parse::<f64>() {
                    Ok(v) if v.is_finite() => Ok(v),
                    _ => Err(unknown()),
                },
            }
        };
        match name {
            "cos" if arg.is_none() => Ok(TestFunction::Cos),
            "clip01" => Ok(TestFunction::Clip01 {
                kappa: number(Self::DEFAULT_KAPPA)?,
            }),
            "sigmoid" => Ok(TestFunction::Sigmoid {
                kappa: number(Self::DEFAULT_KAPPA)?,
            }),
            "const" => Ok(TestFunction::Constant(number(1.0)?)),
            _ => Err(unknown()),
        }
    }
}

impl TryFrom<String> for TestFunction {
    type Error = Error;
    fn try_from(s: String) -> Result<Self> {
        s.parse()
    }
}

impl From<TestFunction> for String {
    fn from(t: TestFunction) -> String {
        t.to_string()
    }
}

/// `|E ψ(S1) - E ψ(S2)|` from two samples, treated as independent for the
/// standard error.
pub fn bounded_function_distance(s1: &[f64], s2: &[f64], psi: TestFunction) -> Result<Estimate> {
    let a: Vec<f64> = s1.iter().map(|x| psi.eval(*x)).collect();
    let b: Vec<f64> = s2.iter().map(|x| psi.eval(*x)).collect();
    let ea = Estimate::from_sample(&a)?;
    let eb = Estimate::from_sample(&b)?;
    Ok(Estimate {
        value: (ea.value - eb.value).abs(),
        stderr: ea.stderr.hypot(eb.stderr),
    })
}

/// Same distance for coupled samples: the standard error comes from the
/// paired differences, which is much smaller under a tight coupling.
pub fn coupled_bounded_function_distance(s1: &[f64], s2: &[f64], psi: TestFunction) -> Result<Estimate> {
    check_paired(s1.len(), s2.len())?;
    let diff: Vec<f64> = s1.iter().zip(s2).map(|(x, y)| psi.eval(*x) - psi.eval(*y)).collect();
    let e = Estimate::from_sample(&diff)?;
    Ok(Estimate {
        value: e.value.abs(),
        stderr: e.stderr,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SlopeFit {
    pub slope: f64,
    pub stderr: f64,
    pub intercept: f64,
    pub points: usize,
}

impl SlopeFit {
    pub fn within(&self, target: f64, tol: f64) -> bool {
        (self.slope - target).abs() <= tol
    }
}

/// Least-squares slope of `ln d` against `ln δ`.
pub fn loglog_slope(deltas: &[f64], distances: &[f64]) -> Result<SlopeFit> {
    if deltas.len() != distances.len() {
        return Err(Error::Mismatch(format!(
            "{} deltas but {} distances",
            deltas.len(),
            distances.len()
        )));
    }
    if deltas.len() < 3 {
        return Err(Error::param("deltas", "need at least 3 points for a slope"));
    }
    if let Some(bad) = deltas.iter().chain(distances).find(|v| !(**v > 0.0 && v.is_finite())) {
        return Err(Error::param("distances", format!("log-log fit needs positive finite values, got {bad}")));
    }
    let x: Vec<f64> = deltas.iter().map(|d| d.ln()).collect();
    let y: Vec<f64> = distances.iter().map(|d| d.ln()).collect();
    let n = x.len() as f64;
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let sxx: f64 = x.iter().map(|v| (v - mx) * (v - mx)).sum();
    if sxx == 0.0 {
        return Err(Error::param("deltas", "all deltas are equal"));
    }
    let sxy: f64 = x.iter().zip(&y).map(|(a, b)| (a - mx) * (b - my)).sum();
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    let rss: f64 = x
        .iter()
        .zip(&y)
        .map(|(a, b)| {
            let r = b - intercept - slope * a;
            r * r
        })
        .sum();
    let stderr = (rss / (n - 2.0) / sxx).sqrt();
    Ok(SlopeFit {
        slope,
        stderr,
        intercept,
        points: x.len(),
    })
}

/// Distances for one `(H1, H2)` pair.
#[allow(non_snake_case)]
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DistanceReport {
    pub schema_version: u32,
    #[serde(rename = "H1")]
    pub h1: f64,
    #[serde(rename = "H2")]
    pub h2: f64,
    pub ks_stat: f64,
    pub ks_conf_radius: f64,
    pub l2_F: Estimate,
    pub l2_DF: Estimate,
    pub sup_l2_path: Estimate,
    pub n_paths: usize,
    pub seed: u64,
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::Array2;

    #[test]
    fn ks_examples() {
        let a = [1.0, 2.0, 3.0];
        assert_eq!(ks_two_sample(&a, &a, 0.01).unwrap().statistic, 0.0);
        assert_eq!(ks_two_sample(&a, &[10.0, 20.0, 30.0], 0.01).unwrap().statistic, 1.0);
        let d = ks_two_sample(&a, &[1.5, 2.5, 3.5], 0.01).unwrap().statistic;
        assert!((d - 1.0 / 3.0).abs() < 1e-15);
        assert!(matches!(ks_two_sample(&[], &a, 0.01), Err(Error::EmptySample)));
    }

    #[test]
    fn ks_handles_ties_and_unequal_sizes() {
        let d = ks_two_sample(&[0.0, 0.0, 1.0, 1.0], &[0.0, 1.0], 0.01).unwrap().statistic;
        assert_eq!(d, 0.0);
        let d = ks_two_sample(&[0.0], &[0.0, 1.0, 2.0, 3.0], 0.01).unwrap().statistic;
        assert!((d - 0.75).abs() < 1e-15);
    }

    #[test]
    fn radius_at_acceptance_size() {
        let r = dkw_radius(100_000, 100_000, 0.01).unwrap();
        assert!((r - 0.007279).abs() < 1e-6, "{r}");
        assert!(dkw_radius(10, 10, 0.0).is_err());
    }

    #[test]
    fn ecdf_steps() {
        let e = EmpiricalCdf::new(&[3.0, 1.0, 2.0, 2.0]).unwrap();
        assert_eq!(e.eval(0.99), 0.0);
        assert_eq!(e.eval(1.0), 0.25);
        assert_eq!(e.eval(2.0), 0.75);
        assert_eq!(e.eval(3.0), 1.0);
        assert!(EmpiricalCdf::new(&[f64::NAN]).is_err());
    }

    #[test]
    fn coupled_l2() {
        let e = coupled_l2_distance(&[1.0, 2.0], &[1.0, 2.0]).unwrap();
        assert_eq!(e, Estimate::ZERO);
        let e = coupled_l2_distance(&[0.0, 0.0], &[1.0, 3.0]).unwrap();
        assert_eq!(e.value, 5.0);
        assert_eq!(coupled_l2_distance(&[0.0, 0.0], &[1.0, 3.0]).unwrap(), coupled_l2_distance(&[1.0, 3.0], &[0.0, 0.0]).unwrap());
        assert!(matches!(coupled_l2_distance(&[1.0], &[1.0, 2.0]), Err(Error::Mismatch(_))));
    }

    #[test]
    fn derivative_l2_integrates_over_r() {
        let grid = TimeGrid::new(1.0, 4).unwrap();
        let a = Array2::<f64>::zeros((2, 5));
        let b = Array2::<f64>::ones((2, 5));
        let e = coupled_derivative_l2_distance(a.view(), b.view(), &grid).unwrap();
        assert!((e.value - 1.0).abs() < 1e-15);
        assert_eq!(e.stderr, 0.0);
        let bad = Array2::<f64>::ones((2, 4));
        assert!(coupled_derivative_l2_distance(a.view(), bad.view(), &grid).is_err());
    }

    #[test]
    fn test_functions_parse_and_evaluate() {
        assert_eq!("cos".parse::<TestFunction>().unwrap(), TestFunction::Cos);
        assert_eq!(
            "clip01:0.5".parse::<TestFunction>().unwrap(),
            TestFunction::Clip01 { kappa: 0.5 }
        );
        assert_eq!(
            "sigmoid".parse::<TestFunction>().unwrap(),
            TestFunction::Sigmoid { kappa: 1.0 }
        );
        for bad in ["tan", "cos:1", "clip01:x", "const:inf", ""] {
            assert!(matches!(bad.parse::<TestFunction>(), Err(Error::UnknownTestFunction(_))), "{bad}");
        }
        let clip = TestFunction::Clip01 { kappa: 1.0 };
        assert_eq!(clip.eval(0.5), 0.0);
        assert_eq!(clip.eval(1.25), 0.25);
        assert_eq!(clip.eval(9.0), 1.0);
        assert_eq!(TestFunction::Sigmoid { kappa: 2.0 }.eval(2.0), 0.5);
        for t in [clip, TestFunction::Cos, TestFunction::Constant(2.5)] {
            assert_eq!(t.to_string().parse::<TestFunction>().unwrap(), t);
        }
    }

    #[test]
    fn bounded_distance_examples() {
        let s = [0.1, 0.7, 2.0];
        assert_eq!(bounded_function_distance(&s, &s, TestFunction::Cos).unwrap().value, 0.0);
        let c = bounded_function_distance(&s, &[5.0, 6.0], TestFunction::Constant(1.0)).unwrap();
        assert_eq!(c, Estimate::ZERO);
        assert_eq!(coupled_bounded_function_distance(&s, &s, TestFunction::Cos).unwrap(), Estimate::ZERO);
    }

    #[test]
    fn slope_examples() {
        let d = [0.05, 0.1, 0.2, 0.4];
        let sq: Vec<f64> = d.iter().map(|x| x * x).collect();
        let f = loglog_slope(&d, &sq).unwrap();
        assert!((f.slope - 2.0).abs() < 1e-12 && f.stderr < 1e-12);
        let lin: Vec<f64> = d.iter().map(|x| 3.0 * x).collect();
        assert!((loglog_slope(&d, &lin).unwrap().slope - 1.0).abs() < 1e-12);
        let noise = [0.05, -0.05, 0.03, -0.02];
        let noisy: Vec<f64> = d.iter().zip(noise).map(|(x, e)| x * x * (1.0 + e)).collect();
        let f = loglog_slope(&d, &noisy).unwrap();
        assert!((1.8..=2.2).contains(&f.slope));
        assert!(loglog_slope(&d[..2], &sq[..2]).is_err());
        assert!(loglog_slope(&d, &[1.0, 0.0, 1.0, 1.0]).is_err());
    }

    #[test]
    fn report_field_names() {
        let r = DistanceReport {
            schema_version: REPORT_SCHEMA_VERSION,
            h1: 0.4,
            h2: 0.45,
            ks_stat: 0.1,
            ks_conf_radius: 0.007,
            l2_F: Estimate::ZERO,
            l2_DF: Estimate::ZERO,
            sup_l2_path: Estimate::ZERO,
            n_paths: 10,
            seed: 42,
        };
        let v = serde_json::to_value(r).unwrap();
        let mut keys: Vec<&str> = v.as_object().unwrap().keys().map(|k| k.as_str()).collect();
        keys.sort();
        assert_eq!(
            keys,
            ["H1", "H2", "ks_conf_radius", "ks_stat", "l2_DF", "l2_F", "n_paths", "schema_version", "seed", "sup_l2_path"]
        );
        assert_eq!(v["l2_F"]["estimate"], 0.0);
    }
}
