pub mod distance_sweep;
pub mod kernel_check;
pub mod malliavin_check;
pub mod simulate;

use fexpo_core::fbm::{CholeskySampler, CirculantSampler, GeneratorKind, PathSampler, VolterraSampler};
use fexpo_core::grid::TimeGrid;
use fexpo_core::kernel::{HurstIndex, KernelEvaluator};

use crate::config::ExperimentConfig;
use crate::error::{CliError, CliResult};

/// Kernel evaluator for `h`, with the fault hook applied when configured.
pub fn evaluator(cfg: &ExperimentConfig, h: HurstIndex) -> CliResult<KernelEvaluator> {
    let ev = KernelEvaluator::new(h, cfg.quad_tol)?;
    let ev = match cfg.fault_ch_scale {
        Some(f) => KernelEvaluator::with_constant(h, ev.normalizing_constant() * f, cfg.quad_tol)?,
        None => ev,
    };
    Ok(ev.with_horizon(cfg.t)?)
}

pub fn sampler(cfg: &ExperimentConfig, h: HurstIndex, grid: TimeGrid) -> CliResult<Box<dyn PathSampler>> {
    Ok(match cfg.generator {
        GeneratorKind::Cholesky => Box::new(CholeskySampler::new(h, grid)?),
        GeneratorKind::Circulant => Box::new(CirculantSampler::new(h, grid)?),
        GeneratorKind::Volterra => Box::new(VolterraSampler::from_evaluator(&evaluator(cfg, h)?, &grid)?),
        GeneratorKind::Imported => {
            return Err(CliError::Config {
                field: "generator",
                reason: "imported batches cannot be generated".into(),
            })
        }
    })
}
