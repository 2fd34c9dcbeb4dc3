use std::fmt;
use std::path::{Path, PathBuf};
use std::time::Instant;

use anyhow::{Context, Result};
use frechet_cp::changepoint::permutation_pvalue;
use frechet_cp::pipeline::segment_mean_densities;
use frechet_cp::{
    align_origin, continent_quantile_table, estimate_daily_densities, load_cases, scan_statistic,
    AlignOptions, AlignedPanel, DensityConfig, DensitySequence, KernelFamily, KernelSpec,
    PercentileMethod, QuantileFunction, ScanConfig, SigmaFormula, SupportInterval, SyntheticSpec,
};
use log::{info, warn};
use serde::{Deserialize, Serialize};

use crate::args::{DensitiesArgs, DetectArgs, IngestArgs, ReportArgs, SimulateArgs};
use crate::output::{create, write_json, write_table};
use crate::Status;

/// An input file is missing or unusable.
#[derive(Debug)]
pub struct InputError(pub String);

impl fmt::Display for InputError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for InputError {}

/// A command-level argument is out of range.
#[derive(Debug)]
pub struct ParameterError(pub String);

impl fmt::Display for ParameterError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for ParameterError {}

/// Every setting that shaped a run. Fields a command does not use are omitted.
#[derive(Debug, Clone, Default, Serialize, Deserialize)]
pub struct RunConfig {
    #[serde(skip_serializing_if = "Option::is_none")]
    pub confirmed: Option<PathBuf>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub deaths: Option<PathBuf>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub continents: Option<PathBuf>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub threshold: Option<u64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub window: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub min_days: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub kernel: Option<KernelFamily>,
    /// Bandwidth override on the unit-rescaled support.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub bandwidth: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub grid: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub levels: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub support: Option<(f64, f64)>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub cut: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub permutations: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub sigma_formula: Option<SigmaFormula>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub sigma_floor: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub split_day: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub percentiles: Option<Vec<u32>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub percentile_method: Option<PercentileMethod>,
}

fn require_file(path: &Path) -> Result<()> {
    if path.is_file() {
        Ok(())
    } else {
        Err(InputError(format!("{} does not exist", path.display())).into())
    }
}

/// `panel.csv` → `panel_deaths.csv`, next to the panel.
fn sibling(panel: &Path, suffix: &str) -> PathBuf {
    let stem = panel
        .file_stem()
        .and_then(|s| s.to_str())
        .unwrap_or("panel");
    panel.with_file_name(format!("{stem}_{suffix}.csv"))
}

fn load_panel(path: &Path) -> Result<AlignedPanel> {
    require_file(path)?;
    let deaths = sibling(path, "deaths");
    let confirmed = sibling(path, "confirmed");
    let (d, c) = if deaths.is_file() && confirmed.is_file() {
        (Some(deaths.as_path()), Some(confirmed.as_path()))
    } else {
        (None, None)
    };
    let panel = AlignedPanel::read_csv(path, d, c)
        .with_context(|| format!("reading panel {}", path.display()))?;
    info!("panel: {} rows × {} days", panel.len(), panel.window());
    Ok(panel)
}

fn write_panel(panel: &AlignedPanel, dir: &Path) -> Result<()> {
    let mut w = create(&dir.join("panel.csv"))?;
    panel.write_rates_csv(&mut w)?;
    if panel.has_counts() {
        panel.write_deaths_csv(create(&dir.join("panel_deaths.csv"))?)?;
        panel.write_confirmed_csv(create(&dir.join("panel_confirmed.csv"))?)?;
    }
    Ok(())
}

#[derive(Debug, Serialize)]
struct IngestManifest {
    config: RunConfig,
    countries_read: usize,
    included: usize,
    excluded: usize,
    window: usize,
}

pub fn ingest(a: &IngestArgs, out: &Path) -> Result<Status> {
    for p in [&a.confirmed, &a.deaths, &a.continents] {
        require_file(p)?;
    }
    let ingestion = load_cases(&a.confirmed, &a.deaths, &a.continents)?;
    let opts = AlignOptions {
        threshold: a.threshold,
        window: a.window,
        min_days: a.min_days,
    };
    let (panel, late) = align_origin(&ingestion.records, &opts)?;
    write_panel(&panel, out)?;

    let mut log = csv::Writer::from_writer(create(&out.join("ingest_log.csv"))?);
    log.write_record([
        "country",
        "continent",
        "status",
        "origin",
        "observed_days",
        "reason",
    ])?;
    for r in panel.rows() {
        let origin = r.origin.map(|d| d.to_string()).unwrap_or_default();
        log.write_record([
            r.country.as_str(),
            r.continent.as_str(),
            "included",
            &origin,
            &r.observed_days.to_string(),
            "",
        ])?;
    }
    let continent_of = |name: &str| {
        ingestion
            .records
            .iter()
            .find(|r| r.name == name)
            .map(|r| r.continent.label())
            .unwrap_or("")
    };
    let mut excluded: Vec<_> = ingestion.exclusions.iter().chain(&late).collect();
    excluded.sort_by(|x, y| x.country.cmp(&y.country));
    for e in &excluded {
        log.write_record([
            e.country.as_str(),
            continent_of(&e.country),
            "excluded",
            "",
            "",
            &e.reason.to_string(),
        ])?;
    }
    log.flush()?;

    write_json(
        &out.join("ingest.json"),
        &IngestManifest {
            config: RunConfig {
                confirmed: Some(a.confirmed.clone()),
                deaths: Some(a.deaths.clone()),
                continents: Some(a.continents.clone()),
                threshold: Some(a.threshold),
                window: Some(a.window),
                min_days: a.min_days,
                ..RunConfig::default()
            },
            countries_read: ingestion.records.len() + ingestion.exclusions.len(),
            included: panel.len(),
            excluded: excluded.len(),
            window: panel.window(),
        },
    )?;
    info!(
        "{} countries included, {} excluded",
        panel.len(),
        excluded.len()
    );
    Ok(Status::Done)
}

/// Sidecar describing how `densities.csv` / `quantiles.csv` were produced.
#[derive(Debug, Serialize, Deserialize)]
struct DensityManifest {
    config: RunConfig,
    days: usize,
    countries: usize,
    /// Shared bandwidth on the unit-rescaled support.
    bandwidth: f64,
    /// The same bandwidth in rate units.
    bandwidth_rate: f64,
    support: (f64, f64),
}

pub fn densities(a: &DensitiesArgs, out: &Path) -> Result<Status> {
    let panel_path = a.panel.clone().unwrap_or_else(|| out.join("panel.csv"));
    let mut panel = load_panel(&panel_path)?;
    if let Some((lo, hi)) = a.support {
        panel = panel.with_support(SupportInterval::new(lo, hi)?)?;
    }
    let config = DensityConfig {
        kernel: KernelSpec::new(a.kernel),
        bandwidth: a.bandwidth,
        grid_size: a.grid,
        levels: a.levels,
    };
    let days = estimate_daily_densities(&panel, &config)?;
    let support = days.support;

    let mut header = vec!["day".to_string()];
    header.extend(
        days.densities[0]
            .original_grid()
            .iter()
            .map(|x| x.to_string()),
    );
    write_table(
        create(&out.join("densities.csv"))?,
        &header,
        days.densities
            .iter()
            .enumerate()
            .map(|(i, d)| ((i + 1).to_string(), d.original_scale_values())),
    )?;

    let grid = days.quantiles[0].grid();
    let mut header = vec!["day".to_string()];
    header.extend(grid.levels().map(|t| t.to_string()));
    write_table(
        create(&out.join("quantiles.csv"))?,
        &header,
        days.quantiles.iter().enumerate().map(|(i, q)| {
            let vals = q.values().iter().map(|u| support.from_unit(*u)).collect();
            ((i + 1).to_string(), vals)
        }),
    )?;

    write_json(
        &out.join("densities.json"),
        &DensityManifest {
            config: RunConfig {
                kernel: Some(a.kernel),
                bandwidth: a.bandwidth,
                grid: Some(a.grid),
                levels: Some(a.levels),
                support: a.support,
                ..RunConfig::default()
            },
            days: panel.window(),
            countries: panel.len(),
            bandwidth: days.bandwidth.value(),
            bandwidth_rate: days.bandwidth.value() * support.width(),
            support: (support.lower(), support.upper()),
        },
    )?;
    Ok(Status::Done)
}

fn read_quantiles(path: &Path, support: SupportInterval) -> Result<Vec<QuantileFunction>> {
    require_file(path)?;
    let mut reader =
        csv::Reader::from_path(path).with_context(|| format!("reading {}", path.display()))?;
    let mut out = Vec::new();
    for (i, row) in reader.records().enumerate() {
        let row = row.with_context(|| format!("reading {}", path.display()))?;
        let values = row
            .iter()
            .skip(1)
            .map(|v| v.parse::<f64>().map(|x| support.to_unit(x)))
            .collect::<std::result::Result<Vec<f64>, _>>()
            .map_err(|e| InputError(format!("{}: row {}: {e}", path.display(), i + 2)))?;
        out.push(
            QuantileFunction::new(values)
                .with_context(|| format!("{}: row {}", path.display(), i + 2))?,
        );
    }
    Ok(out)
}

#[derive(Debug, Serialize)]
struct DetectReport {
    config: RunConfig,
    n: usize,
    /// Last day of the first regime (1-based).
    change_point: usize,
    k_hat: f64,
    max_statistic: f64,
    sigma_sq: f64,
    degenerate: bool,
    p_value: f64,
    permutations: usize,
    seed: u64,
    bandwidth: f64,
    support: (f64, f64),
    /// Modes of the before/after Fréchet mean densities, in rate units.
    #[serde(skip_serializing_if = "Option::is_none")]
    mode_before: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    mode_after: Option<f64>,
}

#[derive(Debug, Serialize)]
struct Timings {
    load_seconds: f64,
    scan_seconds: f64,
    permutation_seconds: f64,
    total_seconds: f64,
}

pub fn detect(a: &DetectArgs, out: &Path) -> Result<Status> {
    let start = Instant::now();
    let dir = a.densities.clone().unwrap_or_else(|| out.to_path_buf());
    let meta_path = dir.join("densities.json");
    require_file(&meta_path)?;
    let meta: DensityManifest = serde_json::from_reader(std::fs::File::open(&meta_path)?)
        .map_err(|e| InputError(format!("{}: {e}", meta_path.display())))?;
    let support = SupportInterval::new(meta.support.0, meta.support.1)?;
    let seq = DensitySequence::new(read_quantiles(&dir.join("quantiles.csv"), support)?)?;
    let load_seconds = start.elapsed().as_secs_f64();

    let cfg = ScanConfig {
        cut: a.cut,
        sigma_formula: if a.sigma_literal {
            SigmaFormula::Literal
        } else {
            SigmaFormula::Squared
        },
        sigma_floor: a.sigma_floor,
    };
    let t = Instant::now();
    let scan = scan_statistic(&seq, &cfg)?;
    let scan_seconds = t.elapsed().as_secs_f64();
    let t = Instant::now();
    if a.permutations == 0 {
        return Err(ParameterError("permutation count must be at least 1".into()).into());
    }
    let p_value = permutation_pvalue(&seq, &cfg, a.permutations, a.seed)?;
    let permutation_seconds = t.elapsed().as_secs_f64();

    write_table(
        create(&out.join("statistic.csv"))?,
        &["cut_index".into(), "k".into(), "statistic".into()],
        scan.curve
            .iter()
            .map(|p| (p.cut_index.to_string(), vec![p.k, p.statistic])),
    )?;

    let grid = meta
        .config
        .grid
        .unwrap_or(frechet_cp::density::DEFAULT_GRID_SIZE);
    let mut modes = (None, None);
    if scan.degenerate {
        warn!("degenerate sequence; skipping segment means");
    } else {
        let (before, after) = segment_mean_densities(&seq, scan.tau_hat, grid, support)?;
        modes = (Some(before.mode()), Some(after.mode()));
        let (b, f) = (
            before.original_scale_values(),
            after.original_scale_values(),
        );
        write_table(
            create(&out.join("frechet_means.csv"))?,
            &["x".into(), "before".into(), "after".into()],
            before
                .original_grid()
                .into_iter()
                .enumerate()
                .map(|(i, x)| (x.to_string(), vec![b[i], f[i]])),
        )?;
    }

    let report = DetectReport {
        config: RunConfig {
            cut: Some(a.cut),
            permutations: Some(a.permutations),
            seed: Some(a.seed),
            sigma_formula: Some(cfg.sigma_formula),
            sigma_floor: Some(a.sigma_floor),
            ..meta.config
        },
        n: scan.n,
        change_point: scan.tau_hat,
        k_hat: scan.k_hat,
        max_statistic: scan.max_stat,
        sigma_sq: scan.sigma_sq,
        degenerate: scan.degenerate,
        p_value,
        permutations: a.permutations,
        seed: a.seed,
        bandwidth: meta.bandwidth,
        support: meta.support,
        mode_before: modes.0,
        mode_after: modes.1,
    };
    write_json(&out.join("detect.json"), &report)?;
    write_json(
        &out.join("detect_timings.json"),
        &Timings {
            load_seconds,
            scan_seconds,
            permutation_seconds,
            total_seconds: start.elapsed().as_secs_f64(),
        },
    )?;
    info!("change point {} (p = {p_value:.4})", scan.tau_hat);
    Ok(if scan.degenerate {
        Status::Degenerate
    } else {
        Status::Done
    })
}

#[derive(Debug, Serialize)]
struct ReportManifest {
    config: RunConfig,
    split_source: &'static str,
    countries: usize,
    continents: Vec<(String, usize)>,
    /// Days whose tail was empty, as (percentile, day).
    empty_tail_days: Vec<(u32, usize)>,
}

#[derive(Debug, Deserialize)]
struct DetectedSplit {
    change_point: usize,
}

pub fn report(a: &ReportArgs, out: &Path) -> Result<Status> {
    let panel_path = a.panel.clone().unwrap_or_else(|| out.join("panel.csv"));
    let panel = load_panel(&panel_path)?;
    let (split_day, split_source) = match a.split_day {
        Some(d) => (d, "argument"),
        None => {
            let path = out.join("detect.json");
            if !path.is_file() {
                return Err(ParameterError(format!(
                    "no --split-day given and {} does not exist",
                    path.display()
                ))
                .into());
            }
            let s: DetectedSplit = serde_json::from_reader(std::fs::File::open(&path)?)
                .map_err(|e| InputError(format!("{}: {e}", path.display())))?;
            (s.change_point, "detect.json")
        }
    };
    if a.percentiles.iter().any(|p| *p == 0 || *p >= 100) {
        return Err(ParameterError("percentiles must lie in 1..=99".into()).into());
    }
    let table = continent_quantile_table(&panel, split_day, &a.percentiles, a.method())?;
    for (p, day) in &table.empty_tail_days {
        warn!("day {day}: empty tail at percentile {p}");
    }
    table.write_csv(create(&out.join("quantile_table.csv"))?)?;

    let days: Vec<String> = (1..=panel.window()).map(|d| d.to_string()).collect();
    let write_series = |name: &str, series: Vec<(String, Vec<f64>)>| -> Result<()> {
        let mut header = vec!["day".to_string()];
        header.extend(series.iter().map(|(n, _)| n.clone()));
        write_table(
            create(&out.join(name))?,
            &header,
            days.iter()
                .enumerate()
                .map(|(j, d)| (d.clone(), series.iter().map(|(_, s)| s[j]).collect())),
        )
    };
    if panel.has_counts() {
        write_series("continent_series.csv", panel.continent_series()?)?;
    } else {
        warn!("panel has no case counts; continent series not written");
    }
    write_series(
        "country_series.csv",
        panel
            .rows()
            .iter()
            .map(|r| (r.country.clone(), r.rates.clone()))
            .collect(),
    )?;

    write_json(
        &out.join("report.json"),
        &ReportManifest {
            config: RunConfig {
                split_day: Some(split_day),
                percentiles: Some(a.percentiles.clone()),
                percentile_method: Some(a.method()),
                ..RunConfig::default()
            },
            split_source,
            countries: panel.len(),
            continents: table.continents.clone(),
            empty_tail_days: table.empty_tail_days.clone(),
        },
    )?;
    Ok(Status::Done)
}

#[derive(Debug, Serialize)]
struct Truth {
    spec: SyntheticSpec,
    /// Panel files relative to the output directory, one per replicate.
    panels: Vec<String>,
}

pub fn simulate(a: &SimulateArgs, out: &Path) -> Result<Status> {
    let spec = SyntheticSpec {
        before: a.before,
        after: a.after,
        change_index: a.change,
        days: a.days,
        draws: a.draws,
        replicates: a.replicates,
        seed: a.seed,
    };
    spec.validate()?;
    let mut panels = Vec::new();
    for r in 0..spec.replicates {
        let rel = if spec.replicates == 1 {
            PathBuf::new()
        } else {
            PathBuf::from(format!("replicate_{:03}", r + 1))
        };
        let dir = out.join(&rel);
        std::fs::create_dir_all(&dir)?;
        write_panel(&spec.panel(r)?, &dir)?;
        panels.push(rel.join("panel.csv").to_string_lossy().into_owned());
    }
    write_json(&out.join("truth.json"), &Truth { spec, panels })?;
    Ok(Status::Done)
}
