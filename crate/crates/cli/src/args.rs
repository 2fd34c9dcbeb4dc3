use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};
use frechet_cp::changepoint::{DEFAULT_CUT, DEFAULT_PERMUTATIONS, DEFAULT_SIGMA_FLOOR};
use frechet_cp::data::{DEFAULT_THRESHOLD, DEFAULT_WINDOW};
use frechet_cp::density::DEFAULT_GRID_SIZE;
use frechet_cp::wasserstein::DEFAULT_LEVELS;
use frechet_cp::{Family, KernelFamily, PercentileMethod};

#[derive(Debug, Parser)]
#[command(
    name = "frechet-cp",
    version,
    about = "Change-point detection for daily mortality-rate densities"
)]
pub struct Cli {
    /// Output directory (created if missing).
    #[arg(long, global = true, default_value = "out")]
    pub out: PathBuf,

    /// Log progress to stderr; repeat for debug output.
    #[arg(short, long, global = true, action = clap::ArgAction::Count)]
    pub verbose: u8,

    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Build the origin-aligned mortality panel from cumulative case files.
    Ingest(IngestArgs),
    /// Estimate one density and quantile function per panel day.
    Densities(DensitiesArgs),
    /// Scan the daily densities for a change point.
    Detect(DetectArgs),
    /// Continent tail table and per-continent / per-country series.
    Report(ReportArgs),
    /// Write synthetic panels with a planted change.
    Simulate(SimulateArgs),
}

#[derive(Debug, Args)]
pub struct IngestArgs {
    /// Wide cumulative confirmed-cases CSV.
    #[arg(long)]
    pub confirmed: PathBuf,
    /// Wide cumulative deaths CSV.
    #[arg(long)]
    pub deaths: PathBuf,
    /// `country,continent` mapping.
    #[arg(long)]
    pub continents: PathBuf,
    /// Cumulative deaths defining each country's day 1.
    #[arg(long, default_value_t = DEFAULT_THRESHOLD)]
    pub threshold: u64,
    #[arg(long, default_value_t = DEFAULT_WINDOW)]
    pub window: usize,
    /// Keep countries with at least this many days after their origin.
    #[arg(long)]
    pub min_days: Option<usize>,
}

#[derive(Debug, Args)]
pub struct DensitiesArgs {
    /// Panel CSV; defaults to `<out>/panel.csv`.
    #[arg(long)]
    pub panel: Option<PathBuf>,
    #[arg(long, default_value_t = KernelFamily::Epanechnikov)]
    pub kernel: KernelFamily,
    /// Common bandwidth on the unit-rescaled support.
    #[arg(long)]
    pub bandwidth: Option<f64>,
    /// Density grid size.
    #[arg(long, default_value_t = DEFAULT_GRID_SIZE)]
    pub grid: usize,
    /// Quantile level count.
    #[arg(long, default_value_t = DEFAULT_LEVELS)]
    pub levels: usize,
    /// Fixed support `LO,HI` instead of the data-driven one.
    #[arg(long, value_parser = parse_support)]
    pub support: Option<(f64, f64)>,
}

#[derive(Debug, Args)]
pub struct DetectArgs {
    /// Directory holding `quantiles.csv` and `densities.json`; defaults to `--out`.
    #[arg(long)]
    pub densities: Option<PathBuf>,
    #[arg(long, default_value_t = DEFAULT_CUT)]
    pub cut: f64,
    #[arg(long, default_value_t = DEFAULT_PERMUTATIONS)]
    pub permutations: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Pooled scale `mean d⁴ - V` instead of `mean d⁴ - V²`.
    #[arg(long)]
    pub sigma_literal: bool,
    #[arg(long, default_value_t = DEFAULT_SIGMA_FLOOR)]
    pub sigma_floor: f64,
}

#[derive(Debug, Args)]
pub struct ReportArgs {
    /// Panel CSV; defaults to `<out>/panel.csv`.
    #[arg(long)]
    pub panel: Option<PathBuf>,
    /// Last day of the first stage; defaults to the change point in `<out>/detect.json`.
    #[arg(long)]
    pub split_day: Option<usize>,
    #[arg(long, value_delimiter = ',', default_values_t = frechet_cp::data::DEFAULT_PERCENTILES)]
    pub percentiles: Vec<u32>,
    /// Use linear interpolation instead of nearest-rank percentiles.
    #[arg(long)]
    pub linear_percentiles: bool,
}

impl ReportArgs {
    pub fn method(&self) -> PercentileMethod {
        if self.linear_percentiles {
            PercentileMethod::Linear
        } else {
            PercentileMethod::NearestRank
        }
    }
}

#[derive(Debug, Args)]
pub struct SimulateArgs {
    /// Family before the change, e.g. `beta:2,8` or `uniform:0,0.5`.
    #[arg(long, default_value = "beta:2,8")]
    pub before: Family,
    #[arg(long, default_value = "beta:2,5")]
    pub after: Family,
    /// Last day drawn from the first family.
    #[arg(long, default_value_t = 104)]
    pub change: usize,
    #[arg(long, default_value_t = DEFAULT_WINDOW)]
    pub days: usize,
    /// Draws (rows) per day.
    #[arg(long, default_value_t = 189)]
    pub draws: usize,
    #[arg(long, default_value_t = 1)]
    pub replicates: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
}

fn parse_support(s: &str) -> Result<(f64, f64), String> {
    let (lo, hi) = s.split_once(',').ok_or("expected LO,HI")?;
    let lo: f64 = lo.trim().parse().map_err(|e| format!("{e}"))?;
    let hi: f64 = hi.trim().parse().map_err(|e| format!("{e}"))?;
    Ok((lo, hi))
}
