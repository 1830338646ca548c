use ndarray::{s, Array2};
use rand_chacha::ChaCha8Rng;

use super::{simulate, GeneratorKind, PathBatch, PathSampler};
use crate::error::{Error, Result};
use crate::grid::TimeGrid;
use crate::kernel::{fbm_covariance, HurstIndex};
use crate::rng::{fill_normals, RngStreamSpec};

/// Lower Cholesky factor of a symmetric positive definite matrix.
pub fn cholesky_factor(a: &Array2<f64>) -> Result<Array2<f64>> {
    let n = a.nrows();
    if a.ncols() != n {
        return Err(Error::Mismatch(format!("matrix is {:?}, not square", a.dim())));
    }
    let mut l = Array2::<f64>::zeros((n, n));
    for j in 0..n {
        let mut diag = a[[j, j]];
        for k in 0..j {
            diag -= l[[j, k]] * l[[j, k]];
        }
        if !(diag > 0.0) {
            return Err(Error::Factorization { pivot: j, value: diag });
        }
        let d = diag.sqrt();
        l[[j, j]] = d;
        for i in j + 1..n {
            let mut v = a[[i, j]];
            for k in 0..j {
                v -= l[[i, k]] * l[[j, k]];
            }
            l[[i, j]] = v / d;
        }
    }
    Ok(l)
}

/// Exact sampler from the Cholesky factor of the covariance of
/// `(B_{t_1}, ..., B_{t_n})`.
#[derive(Debug, Clone)]
pub struct CholeskySampler {
    hurst: HurstIndex,
    grid: TimeGrid,
    // transposed factor, so a block of paths is Z · Lᵀ
    factor_t: Array2<f64>,
}

impl CholeskySampler {
    pub fn new(hurst: HurstIndex, grid: TimeGrid) -> Result<Self> {
        let n = grid.steps();
        let mut cov = Array2::<f64>::zeros((n, n));
        for i in 0..n {
            for j in 0..=i {
                let c = fbm_covariance(hurst, grid.node(i + 1), grid.node(j + 1))?;
                cov[[i, j]] = c;
                cov[[j, i]] = c;
            }
        }
        let factor = cholesky_factor(&cov)?;
        Ok(CholeskySampler {
            hurst,
            grid,
            factor_t: factor.reversed_axes(),
        })
    }
}

impl PathSampler for CholeskySampler {
    fn kind(&self) -> GeneratorKind {
        GeneratorKind::Cholesky
    }

    fn hurst(&self) -> HurstIndex {
        self.hurst
    }

    fn grid(&self) -> &TimeGrid {
        &self.grid
    }

    fn sample_block(&self, rng: &mut ChaCha8Rng, rows: usize) -> Result<Array2<f64>> {
        let n = self.grid.steps();
        let mut z = Array2::<f64>::zeros((rows, n));
        fill_normals(rng, z.as_slice_mut().expect("standard layout"));
        let mut out = Array2::<f64>::zeros((rows, n + 1));
        out.slice_mut(s![.., 1..]).assign(&z.dot(&self.factor_t));
        Ok(out)
    }
}

pub fn cholesky_paths(hurst: HurstIndex, grid: TimeGrid, n_paths: usize, rng: RngStreamSpec) -> Result<PathBatch> {
    simulate(&CholeskySampler::new(hurst, grid)?, n_paths, rng)
}
