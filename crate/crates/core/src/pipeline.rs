//! Panel → daily densities → quantile sequence.

use log::info;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::changepoint::DensitySequence;
use crate::data::AlignedPanel;
use crate::density::{
    common_bandwidth, estimate_density, Bandwidth, DensityEstimate, RawSample, SupportInterval,
    DEFAULT_GRID_SIZE,
};
use crate::error::{Error, Result};
use crate::kernel::KernelSpec;
use crate::wasserstein::{
    density_from_quantile, frechet_mean, quantile_from_density, LevelGrid, QuantileFunction,
    DEFAULT_LEVELS,
};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DensityConfig {
    pub kernel: KernelSpec,
    /// Shared bandwidth on the unit-rescaled support; `None` uses the median
    /// of the daily rule-of-thumb values.
    pub bandwidth: Option<f64>,
    pub grid_size: usize,
    pub levels: usize,
}

impl Default for DensityConfig {
    fn default() -> Self {
        Self {
            kernel: KernelSpec::default(),
            bandwidth: None,
            grid_size: DEFAULT_GRID_SIZE,
            levels: DEFAULT_LEVELS,
        }
    }
}

#[derive(Debug, Clone)]
pub struct DailyDensities {
    pub bandwidth: Bandwidth,
    pub support: SupportInterval,
    pub densities: Vec<DensityEstimate>,
    pub quantiles: Vec<QuantileFunction>,
}

impl DailyDensities {
    pub fn sequence(&self) -> Result<DensitySequence> {
        DensitySequence::new(self.quantiles.clone())
    }
}

/// Estimates one density per panel day with a shared bandwidth.
pub fn estimate_daily_densities(
    panel: &AlignedPanel,
    config: &DensityConfig,
) -> Result<DailyDensities> {
    let levels = LevelGrid::new(config.levels)?;
    let samples: Vec<RawSample> = (1..=panel.window())
        .map(|day| panel.daily_cross_section(day))
        .collect::<Result<_>>()?;
    let bandwidth = match config.bandwidth {
        Some(h) => Bandwidth::new(h)?,
        None => common_bandwidth(&samples, config.grid_size)?,
    };
    info!(
        "estimating {} daily densities (h = {:.5}, grid {})",
        samples.len(),
        bandwidth.value(),
        config.grid_size
    );
    let densities: Vec<DensityEstimate> = samples
        .par_iter()
        .map(|s| estimate_density(s, &config.kernel, bandwidth, config.grid_size))
        .collect::<Result<_>>()?;
    let quantiles = densities
        .par_iter()
        .map(|d| quantile_from_density(d, levels))
        .collect();
    Ok(DailyDensities {
        bandwidth,
        support: panel.support(),
        densities,
        quantiles,
    })
}

/// Fréchet mean densities of items `1..=tau` and `tau+1..=n`.
pub fn segment_mean_densities(
    seq: &DensitySequence,
    tau: usize,
    grid_size: usize,
    support: SupportInterval,
) -> Result<(DensityEstimate, DensityEstimate)> {
    if tau == 0 || tau >= seq.len() {
        return Err(Error::param(format!("split {tau} leaves an empty segment")));
    }
    let (a, b) = seq.items().split_at(tau);
    let before = density_from_quantile(&frechet_mean(a)?, grid_size)?.with_support(support);
    let after = density_from_quantile(&frechet_mean(b)?, grid_size)?.with_support(support);
    Ok((before, after))
}
