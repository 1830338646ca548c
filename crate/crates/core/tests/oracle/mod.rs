//! Brute-force reference computations, written from the kernel formulas
//! directly and sharing no numerics with the library.

#![allow(dead_code)]

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use statrs::function::beta::beta;

/// Composite Simpson rule with `m` (even) panels.
pub fn simpson(f: impl Fn(f64) -> f64, a: f64, b: f64, m: usize) -> f64 {
    assert!(m.is_multiple_of(2));
    let h = (b - a) / m as f64;
    let mut sum = f(a) + f(b);
    for i in 1..m {
        let w = if i % 2 == 1 { 4.0 } else { 2.0 };
        sum += w * f(a + i as f64 * h);
    }
    sum * h / 3.0
}

/// Closed-form normalizing constant of the Volterra kernel.
pub fn c_closed(h: f64) -> f64 {
    if h > 0.5 {
        (h * (2.0 * h - 1.0) / beta(2.0 - 2.0 * h, h - 0.5)).sqrt()
    } else if h < 0.5 {
        (2.0 * h / ((1.0 - 2.0 * h) * beta(1.0 - 2.0 * h, h + 0.5))).sqrt()
    } else {
        1.0
    }
}

/// `K_H(t, s)` from the integral formulas. The inner variable is
/// `u = s + (t - s) v^{1/p}` for `H > 1/2` and `u = s + (t - s) v^5`
/// otherwise; both absorb the `(u - s)` power.
pub fn kernel(h: f64, t: f64, s: f64, m: usize) -> f64 {
    assert!(0.0 < s && s < t);
    kernel_with_gap(h, s, t - s, m)
}

/// `K_H(s + g, s)`.
pub fn kernel_with_gap(h: f64, s: f64, g: f64, m: usize) -> f64 {
    let c = c_closed(h);
    let t = s + g;
    let p = h - 0.5;
    if h > 0.5 {
        // c s^{-p} ∫_s^t (u-s)^{p-1} u^p du
        let inner = simpson(|v| (s + g * v.powf(1.0 / p)).powf(p), 0.0, 1.0, m);
        c * s.powf(-p) * g.powf(p) * inner / p
    } else if h < 0.5 {
        // c [ (t/s)^p (t-s)^p - p s^{-p} ∫_s^t u^{p-1} (u-s)^p du ]
        let inner = simpson(|v| 5.0 * v.powf(4.0 + 5.0 * p) * (s + g * v.powi(5)).powf(p - 1.0), 0.0, 1.0, m);
        c * ((t / s).powf(p) * g.powf(p) - p * s.powf(-p) * g.powf(1.0 + p) * inner)
    } else {
        1.0
    }
}

/// Node-0 factor for an `r^γ` blow-up, `γ = -|H - 1/2|`.
pub fn origin_factor(h: f64) -> f64 {
    let g = -(h - 0.5).abs();
    ((1.0 - 2.0 * g) / (1.0 + 2.0 * g)).sqrt()
}

/// Deterministic rough test path: a scaled random walk from a fixed seed.
pub fn pinned_path(n: usize, seed: u64) -> Vec<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let dt = 1.0 / n as f64;
    let mut b = vec![0.0];
    for _ in 0..n {
        let z: f64 = StandardNormal.sample(&mut rng);
        let last = *b.last().unwrap();
        b.push(last + dt.sqrt() * z);
    }
    b
}

/// Panel means of `e^{a t + σ B}` on the uniform grid of `[0, 1]`.
pub fn panel_means(path: &[f64], a: f64, sigma: f64) -> Vec<f64> {
    let n = path.len() - 1;
    let e: Vec<f64> = (0..=n).map(|k| (a * k as f64 / n as f64 + sigma * path[k]).exp()).collect();
    e.windows(2).map(|w| 0.5 * (w[0] + w[1])).collect()
}

/// `∫ Π K(s, r_i) ds` over panel `[lo, hi]`; when some `r_i == lo` the
/// variable is `s = lo + (hi - lo) w^5`.
pub fn panel_product(h: f64, lo: f64, hi: f64, rs: &[f64], outer: usize, inner: usize) -> f64 {
    let product = |s: f64| rs.iter().map(|r| kernel(h, s, *r, inner)).product::<f64>();
    if rs.contains(&lo) {
        let d = hi - lo;
        simpson(
            |w| if w == 0.0 { 0.0 } else { 5.0 * d * w.powi(4) * product(lo + d * w.powi(5)) },
            0.0,
            1.0,
            outer,
        )
    } else {
        simpson(product, lo, hi, outer)
    }
}

/// `D_r F` at the nodes of the `n`-step grid on `[0, 1]`.
pub fn first_derivative(h: f64, path: &[f64], a: f64, sigma: f64, outer: usize, inner: usize) -> Vec<f64> {
    let n = path.len() - 1;
    let means = panel_means(path, a, sigma);
    let node = |k: usize| k as f64 / n as f64;
    let mut d = vec![0.0; n + 1];
    for j in 1..n {
        d[j] = sigma
            * (j + 1..=n)
                .map(|k| means[k - 1] * panel_product(h, node(k - 1), node(k), &[node(j)], outer, inner))
                .sum::<f64>();
    }
    d[0] = origin_factor(h) * d[1];
    d
}

/// `D_θ D_r F` over node pairs.
pub fn second_derivative(h: f64, path: &[f64], a: f64, sigma: f64, outer: usize, inner: usize) -> Vec<Vec<f64>> {
    let n = path.len() - 1;
    let means = panel_means(path, a, sigma);
    let node = |k: usize| k as f64 / n as f64;
    let mut dd = vec![vec![0.0; n + 1]; n + 1];
    for i in 1..n {
        for j in i..n {
            let v = sigma
                * sigma
                * (j + 1..=n)
                    .map(|k| means[k - 1] * panel_product(h, node(k - 1), node(k), &[node(i), node(j)], outer, inner))
                    .sum::<f64>();
            dd[i][j] = v;
            dd[j][i] = v;
        }
    }
    let f = origin_factor(h);
    for j in 1..=n {
        dd[0][j] = f * dd[1][j];
        dd[j][0] = dd[0][j];
    }
    dd[0][0] = f * f * dd[1][1];
    dd
}

pub fn trapezoid_weights(n: usize) -> Vec<f64> {
    let dt = 1.0 / n as f64;
    (0..=n).map(|k| if k == 0 || k == n { dt / 2.0 } else { dt }).collect()
}

pub fn energy(d: &[f64]) -> f64 {
    let w = trapezoid_weights(d.len() - 1);
    d.iter().zip(&w).map(|(x, w)| w * x * x).sum()
}

pub fn double_energy(dd: &[Vec<f64>]) -> f64 {
    let w = trapezoid_weights(dd.len() - 1);
    let mut sum = 0.0;
    for (i, row) in dd.iter().enumerate() {
        for (j, v) in row.iter().enumerate() {
            sum += w[i] * w[j] * v * v;
        }
    }
    sum
}

/// `E|B^{h1}_t - B^{h2}_t|^2 = ∫_0^t (K_{h1}(t, r) - K_{h2}(t, r))^2 dr`
/// under the shared-noise coupling. Both ends are split off and mapped by
/// high powers to flatten the `r^γ` and `(t - r)^γ` factors.
pub fn coupled_gap(h1: f64, h2: f64, t: f64, outer: usize, inner: usize) -> f64 {
    let f = |r: f64, g: f64| {
        let d = kernel_with_gap(h1, r, g, inner) - kernel_with_gap(h2, r, g, inner);
        d * d
    };
    let mid = t / 2.0;
    let left = simpson(|w| if w == 0.0 { 0.0 } else { 10.0 * mid * w.powi(9) * f(mid * w.powi(10), t - mid * w.powi(10)) }, 0.0, 1.0, outer);
    let right = simpson(
        |w| if w == 0.0 { 0.0 } else { 10.0 * mid * w.powi(9) * f(t - mid * w.powi(10), mid * w.powi(10)) },
        0.0,
        1.0,
        outer,
    );
    left + right
}
