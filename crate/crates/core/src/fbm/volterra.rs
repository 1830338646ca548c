use ndarray::{s, Array2, ArrayView2, Axis};
use rand_chacha::ChaCha8Rng;

use super::{simulate, stack_blocks, GeneratorKind, PathBatch, PathSampler};
use crate::error::{Error, Result};
use crate::grid::TimeGrid;
use crate::kernel::{integrated_kernel_weights, HurstIndex, KernelEvaluator, WeightMatrix};
use crate::rng::{fill_normals, map_blocks, RngStreamSpec};

/// Maps Brownian increments `ΔW` to `B^H` at the grid nodes through the
/// panel weights: `B_{t_i} = Σ_j (w_ij / sqrt(dt)) ΔW_j`.
#[derive(Debug, Clone)]
pub struct VolterraSampler {
    weights: WeightMatrix,
    // (w / sqrt(dt))ᵀ, or None when the weights are exactly the Brownian
    // ones and the paths are plain cumulative sums.
    coefficients_t: Option<Array2<f64>>,
}

impl VolterraSampler {
    pub fn new(weights: WeightMatrix) -> Self {
        let dt = weights.grid().dt();
        let root = dt.sqrt();
        let n = weights.grid().steps();
        let exact_brownian = weights.hurst().is_brownian()
            && (1..=n).all(|i| (1..=i).all(|j| weights.get(i, j) == root));
        let coefficients_t = if exact_brownian {
            None
        } else {
            Some(weights.as_array().mapv(|w| w / root).reversed_axes())
        };
        VolterraSampler {
            weights,
            coefficients_t,
        }
    }

    pub fn from_evaluator(ev: &KernelEvaluator, grid: &TimeGrid) -> Result<Self> {
        Ok(Self::new(integrated_kernel_weights(ev, grid)?))
    }

    pub fn weights(&self) -> &WeightMatrix {
        &self.weights
    }

    /// Paths (`rows × (n + 1)`) for a block of increments (`rows × n`).
    pub fn map_increments(&self, increments: ArrayView2<'_, f64>) -> Result<Array2<f64>> {
        let n = self.weights.grid().steps();
        if increments.ncols() != n {
            return Err(Error::Mismatch(format!("increments have {} columns, grid has {n} steps", increments.ncols())));
        }
        let mut out = Array2::<f64>::zeros((increments.nrows(), n + 1));
        match &self.coefficients_t {
            Some(c) => out.slice_mut(s![.., 1..]).assign(&increments.dot(c)),
            None => {
                for (mut row, inc) in out.axis_iter_mut(Axis(0)).zip(increments.axis_iter(Axis(0))) {
                    let mut acc = 0.0;
                    for (k, d) in inc.iter().enumerate() {
                        acc += d;
                        row[k + 1] = acc;
                    }
                }
            }
        }
        Ok(out)
    }
}

fn draw_increments(rng: &mut ChaCha8Rng, rows: usize, grid: &TimeGrid) -> Array2<f64> {
    let mut inc = Array2::<f64>::zeros((rows, grid.steps()));
    fill_normals(rng, inc.as_slice_mut().expect("standard layout"));
    let root = grid.dt().sqrt();
    inc.mapv_inplace(|z| z * root);
    inc
}

impl PathSampler for VolterraSampler {
    fn kind(&self) -> GeneratorKind {
        GeneratorKind::Volterra
    }

    fn hurst(&self) -> HurstIndex {
        self.weights.hurst()
    }

    fn grid(&self) -> &TimeGrid {
        self.weights.grid()
    }

    fn sample_block(&self, rng: &mut ChaCha8Rng, rows: usize) -> Result<Array2<f64>> {
        let inc = draw_increments(rng, rows, self.grid());
        self.map_increments(inc.view())
    }
}

/// Several Volterra samplers on one grid, all driven by the same increments.
#[derive(Debug, Clone)]
pub struct CoupledSampler {
    grid: TimeGrid,
    members: Vec<VolterraSampler>,
}

impl CoupledSampler {
    pub fn new(members: Vec<VolterraSampler>) -> Result<Self> {
        let grid = *members
            .first()
            .ok_or_else(|| Error::param("H_list", "need at least one Hurst index"))?
            .grid();
        if members.iter().any(|m| *m.grid() != grid) {
            return Err(Error::Mismatch("coupled members must share one grid".into()));
        }
        Ok(CoupledSampler { grid, members })
    }

    /// Calibrates and builds weights for every distinct index in `hursts`.
    pub fn build(hursts: &[HurstIndex], grid: &TimeGrid, quad_tol: f64) -> Result<Self> {
        let mut members: Vec<VolterraSampler> = Vec::with_capacity(hursts.len());
        for h in hursts {
            if let Some(existing) = members.iter().find(|m| m.hurst() == *h) {
                members.push(existing.clone());
            } else {
                let ev = KernelEvaluator::new(*h, quad_tol)?;
                members.push(VolterraSampler::from_evaluator(&ev, grid)?);
            }
        }
        Self::new(members)
    }

    pub fn grid(&self) -> &TimeGrid {
        &self.grid
    }

    pub fn members(&self) -> &[VolterraSampler] {
        &self.members
    }

    pub fn hursts(&self) -> Vec<HurstIndex> {
        self.members.iter().map(|m| m.hurst()).collect()
    }

    /// One block of shared increments and the paths of every member.
    pub fn sample_block(&self, rng: &mut ChaCha8Rng, rows: usize) -> Result<(Array2<f64>, Vec<Array2<f64>>)> {
        let inc = draw_increments(rng, rows, &self.grid);
        let paths = self
            .members
            .iter()
            .map(|m| m.map_increments(inc.view()))
            .collect::<Result<Vec<_>>>()?;
        Ok((inc, paths))
    }

    pub fn simulate(&self, n_paths: usize, spec: RngStreamSpec) -> Result<CoupledPathSet> {
        if n_paths == 0 {
            return Err(Error::param("n_paths", "need at least one path"));
        }
        let blocks = map_blocks(n_paths, spec, |_, rng, rows| self.sample_block(rng, rows))?;
        let mut incs = Vec::with_capacity(blocks.len());
        let mut per_member: Vec<Vec<Array2<f64>>> = vec![Vec::new(); self.members.len()];
        for (inc, paths) in blocks {
            incs.push(inc);
            for (slot, p) in per_member.iter_mut().zip(paths) {
                slot.push(p);
            }
        }
        let increments = stack_blocks(incs, self.grid.steps());
        let members = self
            .members
            .iter()
            .zip(per_member)
            .map(|(m, blocks)| {
                PathBatch::new(
                    m.hurst(),
                    self.grid,
                    stack_blocks(blocks, self.grid.nodes_len()),
                    GeneratorKind::Volterra,
                    spec,
                )
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(CoupledPathSet {
            grid: self.grid,
            rng: spec,
            increments,
            members,
        })
    }
}

/// Path batches for several Hurst indices realized from one set of
/// Brownian increments.
#[derive(Debug, Clone, PartialEq)]
pub struct CoupledPathSet {
    grid: TimeGrid,
    rng: RngStreamSpec,
    increments: Array2<f64>,
    members: Vec<PathBatch>,
}

impl CoupledPathSet {
    pub fn grid(&self) -> &TimeGrid {
        &self.grid
    }

    pub fn rng(&self) -> RngStreamSpec {
        self.rng
    }

    /// The shared increments `ΔW`, `n_paths × n`.
    pub fn increments(&self) -> ArrayView2<'_, f64> {
        self.increments.view()
    }

    pub fn members(&self) -> &[PathBatch] {
        &self.members
    }

    pub fn n_paths(&self) -> usize {
        self.increments.nrows()
    }

    /// First member with Hurst index `h`.
    pub fn member(&self, h: HurstIndex) -> Result<&PathBatch> {
        self.members
            .iter()
            .find(|m| m.hurst() == h)
            .ok_or_else(|| Error::Mismatch(format!("H = {} is not part of this coupled set", h.value())))
    }
}

pub fn volterra_coupled_paths(
    hursts: &[HurstIndex],
    grid: TimeGrid,
    n_paths: usize,
    rng: RngStreamSpec,
    quad_tol: f64,
) -> Result<CoupledPathSet> {
    CoupledSampler::build(hursts, &grid, quad_tol)?.simulate(n_paths, rng)
}

/// Single-index Volterra batch; its driving increments are discarded.
pub fn volterra_paths(
    ev: &KernelEvaluator,
    grid: TimeGrid,
    n_paths: usize,
    rng: RngStreamSpec,
) -> Result<PathBatch> {
    simulate(&VolterraSampler::from_evaluator(ev, &grid)?, n_paths, rng)
}
