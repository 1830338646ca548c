use std::sync::Arc;

use ndarray::Array2;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use rustfft::num_complex::Complex;
use rustfft::{Fft, FftPlanner};

use super::{simulate, GeneratorKind, PathBatch, PathSampler};
use crate::error::{Error, Result};
use crate::grid::TimeGrid;
use crate::kernel::HurstIndex;
use crate::rng::RngStreamSpec;

/// Autocovariance of unit-step fractional Gaussian noise at lag `k`.
pub(crate) fn fgn_autocovariance(hurst: HurstIndex, k: usize) -> f64 {
    let two_h = 2.0 * hurst.value();
    let k = k as f64;
    0.5 * ((k + 1.0).powf(two_h) + (k - 1.0).abs().powf(two_h) - 2.0 * k.powf(two_h))
}

/// Circulant-embedding (Davies–Harte) sampler for the increments.
///
/// The `n` increments are embedded in a circulant of size `2n`. One FFT of
/// `sqrt(λ / 2n) · (ξ + iη)` yields two independent increment vectors, in
/// its real and imaginary parts.
#[derive(Clone)]
pub struct CirculantSampler {
    hurst: HurstIndex,
    grid: TimeGrid,
    scale: Vec<f64>,
    fft: Arc<dyn Fft<f64>>,
}

impl std::fmt::Debug for CirculantSampler {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("CirculantSampler")
            .field("hurst", &self.hurst)
            .field("grid", &self.grid)
            .finish()
    }
}

impl CirculantSampler {
    pub fn new(hurst: HurstIndex, grid: TimeGrid) -> Result<Self> {
        let n = grid.steps();
        let m = 2 * n;
        let mut row: Vec<Complex<f64>> = (0..m)
            .map(|j| {
                let lag = if j <= n { j } else { m - j };
                Complex::new(fgn_autocovariance(hurst, lag), 0.0)
            })
            .collect();
        let mut planner = FftPlanner::new();
        let fft = planner.plan_fft_forward(m);
        fft.process(&mut row);
        let peak = row.iter().map(|c| c.re.abs()).fold(0.0, f64::max);
        let mut scale = Vec::with_capacity(m);
        for (index, c) in row.iter().enumerate() {
            let lambda = c.re;
            if lambda < -1e-10 * peak {
                let (index, value) = row
                    .iter()
                    .enumerate()
                    .map(|(i, c)| (i, c.re))
                    .min_by(|a, b| a.1.total_cmp(&b.1))
                    .unwrap_or((index, lambda));
                return Err(Error::Embedding { index, value });
            }
            scale.push((lambda.max(0.0) / m as f64).sqrt());
        }
        Ok(CirculantSampler {
            hurst,
            grid,
            scale,
            fft,
        })
    }

    /// Embedding eigenvalues, with round-off negatives clamped to zero.
    pub fn eigenvalues(&self) -> Vec<f64> {
        let m = self.scale.len() as f64;
        self.scale.iter().map(|s| s * s * m).collect()
    }
}

impl PathSampler for CirculantSampler {
    fn kind(&self) -> GeneratorKind {
        GeneratorKind::Circulant
    }

    fn hurst(&self) -> HurstIndex {
        self.hurst
    }

    fn grid(&self) -> &TimeGrid {
        &self.grid
    }

    fn sample_block(&self, rng: &mut ChaCha8Rng, rows: usize) -> Result<Array2<f64>> {
        let n = self.grid.steps();
        let m = 2 * n;
        let step = self.grid.dt().powf(self.hurst.value());
        let mut out = Array2::<f64>::zeros((rows, n + 1));
        let mut buffer = vec![Complex::new(0.0, 0.0); m];
        let mut scratch = vec![Complex::new(0.0, 0.0); self.fft.get_inplace_scratch_len()];
        let mut row = 0;
        while row < rows {
            for (b, s) in buffer.iter_mut().zip(&self.scale) {
                let re: f64 = StandardNormal.sample(rng);
                let im: f64 = StandardNormal.sample(rng);
                *b = Complex::new(s * re, s * im);
            }
            self.fft.process_with_scratch(&mut buffer, &mut scratch);
            let mut acc_re = 0.0;
            let mut acc_im = 0.0;
            let pair = row + 1 < rows;
            for k in 0..n {
                acc_re += buffer[k].re;
                out[[row, k + 1]] = step * acc_re;
                if pair {
                    acc_im += buffer[k].im;
                    out[[row + 1, k + 1]] = step * acc_im;
                }
            }
            row += 2;
        }
        Ok(out)
    }
}

pub fn circulant_paths(hurst: HurstIndex, grid: TimeGrid, n_paths: usize, rng: RngStreamSpec) -> Result<PathBatch> {
    simulate(&CirculantSampler::new(hurst, grid)?, n_paths, rng)
}
