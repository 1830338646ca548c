//! Path generation for fractional Brownian motion on a [`TimeGrid`].
//!
//! Three samplers share the [`PathSampler`] interface:
//!
//! * [`CholeskySampler`]: exact, `O(n^2)` per path.
//! * [`CirculantSampler`]: exact, FFT-based, `O(n log n)` per path.
//! * [`VolterraSampler`]: discretized Volterra representation driven by
//!   explicit Brownian increments. Several Hurst indices driven by the same
//!   increments form a [`CoupledPathSet`].
//!
//! All samplers fill paths in blocks of [`BLOCK_PATHS`](crate::rng::BLOCK_PATHS)
//! from per-block random streams, so a batch is a pure function of its
//! parameters and [`RngStreamSpec`].

mod cholesky;
mod circulant;
mod volterra;

use std::fmt;
use std::str::FromStr;

use ndarray::{s, Array2, ArrayView1, ArrayView2, Axis};
use rand_chacha::ChaCha8Rng;

pub use cholesky::{cholesky_factor, cholesky_paths, CholeskySampler};
pub use circulant::{circulant_paths, CirculantSampler};
pub use volterra::{volterra_coupled_paths, volterra_paths, CoupledPathSet, CoupledSampler, VolterraSampler};

use crate::error::{Error, Result};
use crate::grid::TimeGrid;
use crate::kernel::HurstIndex;
use crate::rng::{map_blocks, RngStreamSpec};
use crate::stats::Estimate;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum GeneratorKind {
    Cholesky,
    Circulant,
    Volterra,
    /// Read back from a file; the original sampler is not recorded there.
    Imported,
}

impl fmt::Display for GeneratorKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            GeneratorKind::Cholesky => "cholesky",
            GeneratorKind::Circulant => "circulant",
            GeneratorKind::Volterra => "volterra",
            GeneratorKind::Imported => "imported",
        };
        f.write_str(s)
    }
}

impl FromStr for GeneratorKind {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "cholesky" => Ok(GeneratorKind::Cholesky),
            "circulant" => Ok(GeneratorKind::Circulant),
            "volterra" => Ok(GeneratorKind::Volterra),
            other => Err(Error::param("generator", format!("unknown generator `{other}`"))),
        }
    }
}

/// Simulated values of `B^H` at the grid nodes, one path per row.
#[derive(Debug, Clone, PartialEq)]
pub struct PathBatch {
    hurst: HurstIndex,
    grid: TimeGrid,
    values: Array2<f64>,
    generator: GeneratorKind,
    rng: RngStreamSpec,
}

impl PathBatch {
    pub fn new(
        hurst: HurstIndex,
        grid: TimeGrid,
        values: Array2<f64>,
        generator: GeneratorKind,
        rng: RngStreamSpec,
    ) -> Result<Self> {
        if values.ncols() != grid.nodes_len() {
            return Err(Error::Mismatch(format!(
                "paths have {} columns, grid has {} nodes",
                values.ncols(),
                grid.nodes_len()
            )));
        }
        if values.column(0).iter().any(|v| *v != 0.0) {
            return Err(Error::Format("paths must start at zero".into()));
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::Format("paths contain non-finite values".into()));
        }
        Ok(PathBatch {
            hurst,
            grid,
            values,
            generator,
            rng,
        })
    }

    pub fn hurst(&self) -> HurstIndex {
        self.hurst
    }

    pub fn grid(&self) -> &TimeGrid {
        &self.grid
    }

    pub fn values(&self) -> ArrayView2<'_, f64> {
        self.values.view()
    }

    pub fn path(&self, i: usize) -> ArrayView1<'_, f64> {
        self.values.row(i)
    }

    pub fn n_paths(&self) -> usize {
        self.values.nrows()
    }

    pub fn generator(&self) -> GeneratorKind {
        self.generator
    }

    pub fn rng(&self) -> RngStreamSpec {
        self.rng
    }

    /// Values at the final node, `B^H_T` for every path.
    pub fn terminal_values(&self) -> Vec<f64> {
        self.values.column(self.grid.steps()).to_vec()
    }

    pub fn into_values(self) -> Array2<f64> {
        self.values
    }
}

pub trait PathSampler: Sync {
    fn kind(&self) -> GeneratorKind;
    fn hurst(&self) -> HurstIndex;
    fn grid(&self) -> &TimeGrid;
    /// `rows × (n + 1)` block of paths, first column zero.
    fn sample_block(&self, rng: &mut ChaCha8Rng, rows: usize) -> Result<Array2<f64>>;
}

pub(crate) fn stack_blocks(blocks: Vec<Array2<f64>>, cols: usize) -> Array2<f64> {
    let rows = blocks.iter().map(|b| b.nrows()).sum();
    let mut out = Array2::zeros((rows, cols));
    let mut at = 0;
    for b in blocks {
        let r = b.nrows();
        out.slice_mut(s![at..at + r, ..]).assign(&b);
        at += r;
    }
    out
}

/// Draws `n_paths` paths from `sampler` using the block streams of `spec`.
pub fn simulate<S: PathSampler + ?Sized>(sampler: &S, n_paths: usize, spec: RngStreamSpec) -> Result<PathBatch> {
    if n_paths == 0 {
        return Err(Error::param("n_paths", "need at least one path"));
    }
    let blocks = map_blocks(n_paths, spec, |_, rng, rows| sampler.sample_block(rng, rows))?;
    let values = stack_blocks(blocks, sampler.grid().nodes_len());
    PathBatch::new(sampler.hurst(), *sampler.grid(), values, sampler.kind(), spec)
}

/// Maximum over grid nodes of the coupled mean square difference.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SupDistance {
    pub estimate: Estimate,
    /// Grid node where the maximum is attained.
    pub node: usize,
}

/// Estimates `sup_s E|B^{H1}_s - B^{H2}_s|^2` over the grid nodes of two
/// coupled batches.
pub fn sup_l2_increment_distance(cps: &CoupledPathSet, h1: HurstIndex, h2: HurstIndex) -> Result<SupDistance> {
    let a = cps.member(h1)?;
    let b = cps.member(h2)?;
    sup_l2_between(a.values(), b.values())
}

pub(crate) fn sup_l2_between(a: ArrayView2<'_, f64>, b: ArrayView2<'_, f64>) -> Result<SupDistance> {
    if a.dim() != b.dim() {
        return Err(Error::Mismatch(format!("batch shapes {:?} and {:?}", a.dim(), b.dim())));
    }
    let n_paths = a.nrows() as f64;
    let mut sums = vec![0.0; a.ncols()];
    let mut squares = vec![0.0; a.ncols()];
    for (ra, rb) in a.axis_iter(Axis(0)).zip(b.axis_iter(Axis(0))) {
        for (k, (x, y)) in ra.iter().zip(rb.iter()).enumerate() {
            let d = (x - y) * (x - y);
            sums[k] += d;
            squares[k] += d * d;
        }
    }
    Ok(sup_from_moments(&sums, &squares, n_paths))
}

/// Sup distance from per-node sums of `d^2` and `d^4`, where `d` is the
/// coupled difference, accumulated over `n_paths` paths. Lets callers
/// stream blocks instead of holding whole batches.
pub fn sup_from_moments(sums: &[f64], squares: &[f64], n_paths: f64) -> SupDistance {
    let mut node = 0;
    let mut best = f64::NEG_INFINITY;
    for (k, s) in sums.iter().enumerate() {
        let m = s / n_paths;
        if m > best {
            best = m;
            node = k;
        }
    }
    let mean = sums[node] / n_paths;
    let var = if n_paths > 1.0 {
        ((squares[node] / n_paths - mean * mean) * n_paths / (n_paths - 1.0)).max(0.0)
    } else {
        0.0
    };
    SupDistance {
        estimate: Estimate {
            value: mean,
            stderr: (var / n_paths).sqrt(),
        },
        node,
    }
}
