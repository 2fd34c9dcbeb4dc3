//! Change-point detection for time-indexed sequences of probability densities.
//!
//! Daily samples are smoothed with a boundary-corrected kernel estimator on a
//! compact support ([`density`]), mapped to quantile functions where the
//! Wasserstein-2 geometry is flat ([`wasserstein`]), and scanned for a single
//! change in Fréchet mean or variance ([`changepoint`]). [`data`] builds the
//! aligned mortality-rate panel from cumulative case counts, and [`simulate`]
//! produces synthetic panels with a planted change.

pub mod changepoint;
pub mod data;
pub mod density;
mod error;
pub mod kernel;
pub mod pipeline;
pub mod simulate;
pub mod wasserstein;

pub use changepoint::{
    detect, permutation_pvalue, pooled_scale, scan_statistic, segment_stats, segment_stats_at,
    statistic_value, DensitySequence, PooledScale, ScanConfig, ScanPoint, ScanResult, SegmentStats,
    SigmaFormula,
};
pub use data::{
    align_origin, compute_mortality, continent_quantile_table, load_cases, AlignOptions,
    AlignedPanel, Continent, CountryRecord, PercentileMethod, QuantileTable,
};
pub use density::{
    boundary_weight, estimate_density, select_bandwidth, Bandwidth, DensityEstimate, RawSample,
    SupportInterval,
};
pub use error::{Error, Result};
pub use kernel::{KernelFamily, KernelSpec};
pub use pipeline::{estimate_daily_densities, DailyDensities, DensityConfig};
pub use simulate::{Family, SyntheticSpec};
pub use wasserstein::{
    density_from_quantile, frechet_mean, frechet_variance, quantile_from_density, w2_distance,
    FrechetSummary, LevelGrid, QuantileFunction,
};
