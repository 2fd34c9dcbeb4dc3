//! Case-count ingestion and the aligned mortality-rate panel.
//!
//! Input files use the wide time-series layout: four descriptive columns
//! (province/state, country/region, latitude, longitude) followed by one
//! cumulative-count column per calendar date written `m/d/yy`.

use std::collections::BTreeMap;
use std::fmt;
use std::fs::File;
use std::io::{Read, Write};
use std::path::Path;
use std::str::FromStr;

use chrono::NaiveDate;
use log::warn;
use serde::{Deserialize, Serialize};

use crate::density::{sorted_quantile, RawSample, SupportInterval};
use crate::error::{Error, Result};

pub const DEFAULT_THRESHOLD: u64 = 30;
pub const DEFAULT_WINDOW: usize = 150;
pub const DEFAULT_PERCENTILES: [u32; 4] = [5, 10, 90, 95];

const DATE_FORMAT: &str = "%m/%d/%y";
const LEADING_COLUMNS: usize = 4;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Continent {
    NorthAmerica,
    SouthAmerica,
    Europe,
    Asia,
    Oceania,
    Africa,
}

impl Continent {
    pub const ALL: [Continent; 6] = [
        Continent::NorthAmerica,
        Continent::SouthAmerica,
        Continent::Europe,
        Continent::Asia,
        Continent::Oceania,
        Continent::Africa,
    ];

    pub fn label(self) -> &'static str {
        match self {
            Continent::NorthAmerica => "North America",
            Continent::SouthAmerica => "South America",
            Continent::Europe => "Europe",
            Continent::Asia => "Asia",
            Continent::Oceania => "Oceania",
            Continent::Africa => "Africa",
        }
    }
}

impl fmt::Display for Continent {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.label())
    }
}

impl FromStr for Continent {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let s = s.trim();
        Continent::ALL
            .into_iter()
            .find(|c| c.label().eq_ignore_ascii_case(s))
            .ok_or_else(|| Error::param(format!("unknown continent `{s}`")))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct CountryRecord {
    pub name: String,
    pub continent: Continent,
    pub dates: Vec<NaiveDate>,
    pub cumulative_confirmed: Vec<u64>,
    pub cumulative_deaths: Vec<u64>,
}

impl CountryRecord {
    /// Running maximum on both series, then deaths capped at confirmed.
    /// Idempotent.
    pub fn clean(&mut self) {
        running_max(&mut self.cumulative_confirmed);
        running_max(&mut self.cumulative_deaths);
        for (d, c) in self
            .cumulative_deaths
            .iter_mut()
            .zip(&self.cumulative_confirmed)
        {
            *d = (*d).min(*c);
        }
    }
}

/// Replaces each value by the maximum of the values up to it.
pub fn running_max(series: &mut [u64]) {
    let mut peak = 0;
    for v in series.iter_mut() {
        peak = peak.max(*v);
        *v = peak;
    }
}

/// Cumulative deaths over cumulative confirmed; zero when nothing is confirmed.
pub fn compute_mortality(rec: &CountryRecord) -> Vec<f64> {
    rec.cumulative_deaths
        .iter()
        .zip(&rec.cumulative_confirmed)
        .map(|(&d, &c)| mortality_rate(d, c))
        .collect()
}

#[inline]
pub fn mortality_rate(deaths: u64, confirmed: u64) -> f64 {
    if confirmed == 0 {
        0.0
    } else {
        deaths as f64 / confirmed as f64
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ExclusionReason {
    NoContinent,
    MissingConfirmed,
    MissingDeaths,
    BelowThreshold { max_deaths: u64, threshold: u64 },
    ShortWindow { available: usize, required: usize },
}

impl fmt::Display for ExclusionReason {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ExclusionReason::NoContinent => f.write_str("not in continent map"),
            ExclusionReason::MissingConfirmed => f.write_str("absent from confirmed file"),
            ExclusionReason::MissingDeaths => f.write_str("absent from deaths file"),
            ExclusionReason::BelowThreshold {
                max_deaths,
                threshold,
            } => write!(f, "deaths peak at {max_deaths}, never reach {threshold}"),
            ExclusionReason::ShortWindow {
                available,
                required,
            } => write!(f, "{available} days from origin, {required} required"),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Exclusion {
    pub country: String,
    pub reason: ExclusionReason,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Ingestion {
    /// Cleaned records, sorted by country name.
    pub records: Vec<CountryRecord>,
    pub exclusions: Vec<Exclusion>,
}

type CountrySeries = BTreeMap<String, Vec<u64>>;

fn parse_error(path: &Path, line: u64, message: impl Into<String>) -> Error {
    Error::Parse {
        path: path.to_path_buf(),
        line,
        message: message.into(),
    }
}

fn csv_error(path: &Path, e: csv::Error) -> Error {
    let line = e.position().map(|p| p.line()).unwrap_or(0);
    parse_error(path, line, e.to_string())
}

/// Reads a wide time-series file and sums province rows per country.
pub fn read_wide_series(path: &Path) -> Result<(Vec<NaiveDate>, CountrySeries)> {
    let mut text = String::new();
    File::open(path)?.read_to_string(&mut text)?;
    parse_wide_series(path, &text)
}

fn parse_wide_series(path: &Path, text: &str) -> Result<(Vec<NaiveDate>, CountrySeries)> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .from_reader(text.as_bytes());
    let header = reader.headers().map_err(|e| csv_error(path, e))?.clone();
    if header.len() <= LEADING_COLUMNS {
        return Err(parse_error(path, 1, "header has no date columns"));
    }
    let dates = header
        .iter()
        .skip(LEADING_COLUMNS)
        .map(|h| {
            NaiveDate::parse_from_str(h.trim(), DATE_FORMAT)
                .map_err(|e| parse_error(path, 1, format!("bad date column `{h}`: {e}")))
        })
        .collect::<Result<Vec<_>>>()?;
    if dates.windows(2).any(|w| w[1] <= w[0]) {
        return Err(parse_error(
            path,
            1,
            "date columns are not strictly increasing",
        ));
    }

    let mut series = CountrySeries::new();
    for row in reader.records() {
        let row = row.map_err(|e| csv_error(path, e))?;
        let line = row.position().map(|p| p.line()).unwrap_or(0);
        let country = row[1].trim().to_string();
        if country.is_empty() {
            return Err(parse_error(path, line, "empty country name"));
        }
        let values = row
            .iter()
            .skip(LEADING_COLUMNS)
            .map(|v| {
                let v = v.trim();
                if v.is_empty() {
                    return Ok(0);
                }
                v.parse::<u64>()
                    .or_else(|_| {
                        v.parse::<f64>()
                            .ok()
                            .filter(|x| *x >= 0.0 && x.fract() == 0.0)
                            .map(|x| x as u64)
                            .ok_or(())
                    })
                    .map_err(|_| parse_error(path, line, format!("bad count `{v}`")))
            })
            .collect::<Result<Vec<u64>>>()?;
        let entry = series
            .entry(country)
            .or_insert_with(|| vec![0; dates.len()]);
        for (acc, v) in entry.iter_mut().zip(values) {
            *acc += v;
        }
    }
    Ok((dates, series))
}

/// Reads a `country,continent` mapping.
pub fn read_continent_map(path: &Path) -> Result<BTreeMap<String, Continent>> {
    let mut text = String::new();
    File::open(path)?.read_to_string(&mut text)?;
    parse_continent_map(path, &text)
}

fn parse_continent_map(path: &Path, text: &str) -> Result<BTreeMap<String, Continent>> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .from_reader(text.as_bytes());
    let header = reader.headers().map_err(|e| csv_error(path, e))?;
    if header.len() != 2
        || !header[0].trim().eq_ignore_ascii_case("country")
        || !header[1].trim().eq_ignore_ascii_case("continent")
    {
        return Err(parse_error(path, 1, "expected header `country,continent`"));
    }
    let mut map = BTreeMap::new();
    for row in reader.records() {
        let row = row.map_err(|e| csv_error(path, e))?;
        let line = row.position().map(|p| p.line()).unwrap_or(0);
        let continent = row[1]
            .parse::<Continent>()
            .map_err(|e| parse_error(path, line, e.to_string()))?;
        map.insert(row[0].trim().to_string(), continent);
    }
    Ok(map)
}

/// Loads both case files and the continent map, aggregates to country level,
/// joins continents and cleans the cumulative series.
pub fn load_cases(
    confirmed_file: &Path,
    deaths_file: &Path,
    continent_map_file: &Path,
) -> Result<Ingestion> {
    let confirmed = read_wide_series(confirmed_file)?;
    let deaths = read_wide_series(deaths_file)?;
    let continents = read_continent_map(continent_map_file)?;
    join_cases(confirmed, deaths, &continents)
}

fn join_cases(
    (confirmed_dates, confirmed): (Vec<NaiveDate>, CountrySeries),
    (death_dates, deaths): (Vec<NaiveDate>, CountrySeries),
    continents: &BTreeMap<String, Continent>,
) -> Result<Ingestion> {
    // dates present in both files, in calendar order
    let death_pos: BTreeMap<NaiveDate, usize> = death_dates
        .iter()
        .enumerate()
        .map(|(i, d)| (*d, i))
        .collect();
    let shared: Vec<(usize, usize)> = confirmed_dates
        .iter()
        .enumerate()
        .filter_map(|(i, d)| death_pos.get(d).map(|&j| (i, j)))
        .collect();
    let dates: Vec<NaiveDate> = shared.iter().map(|&(i, _)| confirmed_dates[i]).collect();

    let mut exclusions = Vec::new();
    for name in confirmed.keys().filter(|k| !deaths.contains_key(*k)) {
        exclusions.push(Exclusion {
            country: name.clone(),
            reason: ExclusionReason::MissingDeaths,
        });
    }
    for name in deaths.keys().filter(|k| !confirmed.contains_key(*k)) {
        exclusions.push(Exclusion {
            country: name.clone(),
            reason: ExclusionReason::MissingConfirmed,
        });
    }

    let common: Vec<&String> = confirmed
        .keys()
        .filter(|k| deaths.contains_key(*k))
        .collect();
    if common.is_empty() || dates.is_empty() {
        return Err(Error::Ingestion(
            "confirmed and deaths files share no countries or dates".into(),
        ));
    }

    let mut records = Vec::new();
    for name in common {
        let Some(&continent) = continents.get(name) else {
            warn!("{name}: not in continent map, excluded");
            exclusions.push(Exclusion {
                country: name.clone(),
                reason: ExclusionReason::NoContinent,
            });
            continue;
        };
        let (c, d) = (&confirmed[name], &deaths[name]);
        let mut rec = CountryRecord {
            name: name.clone(),
            continent,
            dates: dates.clone(),
            cumulative_confirmed: shared.iter().map(|&(i, _)| c[i]).collect(),
            cumulative_deaths: shared.iter().map(|&(_, j)| d[j]).collect(),
        };
        rec.clean();
        records.push(rec);
    }
    if records.is_empty() {
        return Err(Error::Ingestion(
            "no country could be matched to a continent".into(),
        ));
    }
    Ok(Ingestion {
        records,
        exclusions,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct AlignOptions {
    pub threshold: u64,
    pub window: usize,
    /// Minimum number of observed days at or after the origin. Defaults to
    /// the full window; shorter rows are padded by carrying the last rate
    /// forward.
    pub min_days: Option<usize>,
}

impl Default for AlignOptions {
    fn default() -> Self {
        Self {
            threshold: DEFAULT_THRESHOLD,
            window: DEFAULT_WINDOW,
            min_days: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PanelRow {
    pub country: String,
    pub continent: String,
    pub origin: Option<NaiveDate>,
    /// Days actually observed from the origin (≤ window).
    pub observed_days: usize,
    pub rates: Vec<f64>,
    /// Aligned cumulative counts, when the panel came from case data.
    pub deaths: Option<Vec<u64>>,
    pub confirmed: Option<Vec<u64>>,
}

/// Countries × days matrix of mortality rates, day 1 at each country's origin.
#[derive(Debug, Clone, PartialEq)]
pub struct AlignedPanel {
    rows: Vec<PanelRow>,
    window: usize,
    support: SupportInterval,
}

impl AlignedPanel {
    pub fn new(rows: Vec<PanelRow>, window: usize) -> Result<Self> {
        if rows.is_empty() {
            return Err(Error::param("panel has no rows"));
        }
        if window == 0 {
            return Err(Error::param("panel window must be positive"));
        }
        for r in &rows {
            if r.rates.len() != window {
                return Err(Error::param(format!(
                    "{}: {} rates for a {window}-day window",
                    r.country,
                    r.rates.len()
                )));
            }
            if r.rates.iter().any(|v| !(0.0..=1.0).contains(v)) {
                return Err(Error::param(format!("{}: rate outside [0, 1]", r.country)));
            }
        }
        let support = SupportInterval::data_driven(rows.iter().flat_map(|r| r.rates.iter()));
        Ok(Self {
            rows,
            window,
            support,
        })
    }

    /// Replaces the data-driven support; every rate must lie inside it.
    pub fn with_support(mut self, support: SupportInterval) -> Result<Self> {
        if let Some(v) = self
            .rows
            .iter()
            .flat_map(|r| r.rates.iter())
            .find(|v| !support.contains(**v))
        {
            return Err(Error::param(format!(
                "rate {v} outside support [{}, {}]",
                support.lower(),
                support.upper()
            )));
        }
        self.support = support;
        Ok(self)
    }

    pub fn rows(&self) -> &[PanelRow] {
        &self.rows
    }

    pub fn window(&self) -> usize {
        self.window
    }

    pub fn support(&self) -> SupportInterval {
        self.support
    }

    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    pub fn has_counts(&self) -> bool {
        self.rows
            .iter()
            .all(|r| r.deaths.is_some() && r.confirmed.is_some())
    }

    fn column(&self, day: usize) -> Vec<f64> {
        self.rows.iter().map(|r| r.rates[day - 1]).collect()
    }

    /// Rates of every country on aligned day `day` (1-based).
    pub fn daily_cross_section(&self, day: usize) -> Result<RawSample> {
        if day == 0 || day > self.window {
            return Err(Error::param(format!(
                "day {day} outside 1..={}",
                self.window
            )));
        }
        RawSample::new(self.column(day), self.support)
    }

    /// Per-continent aggregate rate (total deaths / total confirmed) for each
    /// day. Requires aligned counts.
    pub fn continent_series(&self) -> Result<Vec<(String, Vec<f64>)>> {
        if !self.has_counts() {
            return Err(Error::param("panel carries no case counts"));
        }
        let mut out = Vec::new();
        for continent in continent_order(self) {
            let members: Vec<&PanelRow> = self
                .rows
                .iter()
                .filter(|r| r.continent == continent)
                .collect();
            let series = (0..self.window)
                .map(|j| {
                    let d: u64 = members.iter().map(|r| r.deaths.as_ref().unwrap()[j]).sum();
                    let c: u64 = members
                        .iter()
                        .map(|r| r.confirmed.as_ref().unwrap()[j])
                        .sum();
                    mortality_rate(d, c)
                })
                .collect();
            out.push((continent, series));
        }
        Ok(out)
    }

    /// `country,continent,day_1..day_W` with one row per country.
    pub fn write_rates_csv<W: Write>(&self, w: W) -> Result<()> {
        self.write_matrix(w, |r, j| r.rates[j].to_string())
    }

    pub fn write_deaths_csv<W: Write>(&self, w: W) -> Result<()> {
        self.require_counts()?;
        self.write_matrix(w, |r, j| r.deaths.as_ref().unwrap()[j].to_string())
    }

    pub fn write_confirmed_csv<W: Write>(&self, w: W) -> Result<()> {
        self.require_counts()?;
        self.write_matrix(w, |r, j| r.confirmed.as_ref().unwrap()[j].to_string())
    }

    fn require_counts(&self) -> Result<()> {
        if self.has_counts() {
            Ok(())
        } else {
            Err(Error::param("panel carries no case counts"))
        }
    }

    fn write_matrix<W: Write>(
        &self,
        w: W,
        cell: impl Fn(&PanelRow, usize) -> String,
    ) -> Result<()> {
        let mut out = csv::Writer::from_writer(w);
        let mut header = vec!["country".to_string(), "continent".to_string()];
        header.extend((1..=self.window).map(|d| format!("day_{d}")));
        out.write_record(&header)?;
        for r in &self.rows {
            let mut rec = vec![r.country.clone(), r.continent.clone()];
            rec.extend((0..self.window).map(|j| cell(r, j)));
            out.write_record(&rec)?;
        }
        out.flush()?;
        Ok(())
    }

    /// Reads a panel written by [`AlignedPanel::write_rates_csv`], with
    /// optional count matrices in the same layout.
    pub fn read_csv(rates: &Path, deaths: Option<&Path>, confirmed: Option<&Path>) -> Result<Self> {
        let rate_rows = read_matrix(rates, |s| s.parse::<f64>().ok())?;
        let window = rate_rows.first().map(|r| r.2.len()).unwrap_or(0);
        let deaths = deaths
            .map(|p| read_matrix(p, |s| s.parse::<u64>().ok()))
            .transpose()?;
        let confirmed = confirmed
            .map(|p| read_matrix(p, |s| s.parse::<u64>().ok()))
            .transpose()?;
        let counts_for = |m: &Option<Vec<(String, String, Vec<u64>)>>,
                          i: usize,
                          name: &str|
         -> Result<Option<Vec<u64>>> {
            match m {
                None => Ok(None),
                Some(rows) => match rows.get(i) {
                    Some(r) if r.0 == name && r.2.len() == window => Ok(Some(r.2.clone())),
                    _ => Err(Error::param(format!(
                        "count matrix does not line up with rates at `{name}`"
                    ))),
                },
            }
        };
        let mut rows = Vec::with_capacity(rate_rows.len());
        for (i, (country, continent, values)) in rate_rows.iter().enumerate() {
            rows.push(PanelRow {
                deaths: counts_for(&deaths, i, country)?,
                confirmed: counts_for(&confirmed, i, country)?,
                country: country.clone(),
                continent: continent.clone(),
                origin: None,
                observed_days: window,
                rates: values.clone(),
            });
        }
        Self::new(rows, window)
    }
}

fn read_matrix<T>(
    path: &Path,
    parse: impl Fn(&str) -> Option<T>,
) -> Result<Vec<(String, String, Vec<T>)>> {
    let mut reader = csv::Reader::from_path(path).map_err(|e| csv_error(path, e))?;
    let width = reader.headers().map_err(|e| csv_error(path, e))?.len();
    if width < 3 {
        return Err(parse_error(
            path,
            1,
            "panel header needs country, continent and day columns",
        ));
    }
    let mut rows = Vec::new();
    for row in reader.records() {
        let row = row.map_err(|e| csv_error(path, e))?;
        let line = row.position().map(|p| p.line()).unwrap_or(0);
        let values = row
            .iter()
            .skip(2)
            .map(|v| {
                parse(v.trim()).ok_or_else(|| parse_error(path, line, format!("bad value `{v}`")))
            })
            .collect::<Result<Vec<T>>>()?;
        rows.push((row[0].to_string(), row[1].to_string(), values));
    }
    Ok(rows)
}

/// Aligns each record at its first date with at least `threshold` cumulative
/// deaths and keeps the following `window` days.
pub fn align_origin(
    records: &[CountryRecord],
    opts: &AlignOptions,
) -> Result<(AlignedPanel, Vec<Exclusion>)> {
    if opts.window == 0 {
        return Err(Error::param("window must be positive"));
    }
    let min_days = opts.min_days.unwrap_or(opts.window);
    if min_days == 0 || min_days > opts.window {
        return Err(Error::param(format!(
            "min-days {min_days} must lie in 1..={}",
            opts.window
        )));
    }
    let mut rows = Vec::new();
    let mut exclusions = Vec::new();
    for rec in records {
        let Some(origin) = rec
            .cumulative_deaths
            .iter()
            .position(|&d| d >= opts.threshold)
        else {
            let max_deaths = rec.cumulative_deaths.iter().copied().max().unwrap_or(0);
            warn!(
                "{}: deaths never reach {}, excluded",
                rec.name, opts.threshold
            );
            exclusions.push(Exclusion {
                country: rec.name.clone(),
                reason: ExclusionReason::BelowThreshold {
                    max_deaths,
                    threshold: opts.threshold,
                },
            });
            continue;
        };
        let available = rec.dates.len() - origin;
        if available < min_days {
            warn!("{}: only {available} days after origin, excluded", rec.name);
            exclusions.push(Exclusion {
                country: rec.name.clone(),
                reason: ExclusionReason::ShortWindow {
                    available,
                    required: min_days,
                },
            });
            continue;
        }
        let observed = available.min(opts.window);
        let pad = |s: &[u64]| -> Vec<u64> {
            let mut v = s[origin..origin + observed].to_vec();
            let last = *v.last().unwrap();
            v.resize(opts.window, last);
            v
        };
        let deaths = pad(&rec.cumulative_deaths);
        let confirmed = pad(&rec.cumulative_confirmed);
        let rates = deaths
            .iter()
            .zip(&confirmed)
            .map(|(&d, &c)| mortality_rate(d, c))
            .collect();
        rows.push(PanelRow {
            country: rec.name.clone(),
            continent: rec.continent.label().to_string(),
            origin: Some(rec.dates[origin]),
            observed_days: observed,
            rates,
            deaths: Some(deaths),
            confirmed: Some(confirmed),
        });
    }
    if rows.is_empty() {
        return Err(Error::Ingestion(format!(
            "no country reaches {} deaths with {min_days} days of follow-up",
            opts.threshold
        )));
    }
    Ok((AlignedPanel::new(rows, opts.window)?, exclusions))
}

/// How a day's percentile threshold is read off its cross-section.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum PercentileMethod {
    /// The order statistic at rank `ceil(p·n/100)`.
    #[default]
    NearestRank,
    /// Linear interpolation between order statistics.
    Linear,
}

pub fn percentile(sorted: &[f64], p: u32, method: PercentileMethod) -> f64 {
    let n = sorted.len();
    match method {
        PercentileMethod::NearestRank => {
            let rank = ((p as f64 * n as f64 / 100.0).ceil() as usize).clamp(1, n);
            sorted[rank - 1]
        }
        PercentileMethod::Linear => sorted_quantile(sorted, p as f64 / 100.0),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Stage {
    Before,
    After,
}

impl fmt::Display for Stage {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Stage::Before => "before",
            Stage::After => "after",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct QuantileTableRow {
    pub continent: String,
    pub stage: Stage,
    pub percentile: u32,
    pub proportion: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct QuantileTable {
    pub split_day: usize,
    pub window: usize,
    pub percentiles: Vec<u32>,
    /// Continent labels with their country counts, in table order.
    pub continents: Vec<(String, usize)>,
    pub rows: Vec<QuantileTableRow>,
    /// Days (1-based) whose tail was empty, per percentile.
    pub empty_tail_days: Vec<(u32, usize)>,
}

impl QuantileTable {
    pub fn get(&self, continent: &str, stage: Stage, percentile: u32) -> Option<f64> {
        self.rows
            .iter()
            .find(|r| r.continent == continent && r.stage == stage && r.percentile == percentile)
            .map(|r| r.proportion)
    }

    /// One line per continent with before/after columns per percentile.
    pub fn write_csv<W: Write>(&self, w: W) -> Result<()> {
        let mut out = csv::Writer::from_writer(w);
        let mut header = vec!["continent".to_string(), "countries".to_string()];
        for p in &self.percentiles {
            header.push(format!("p{p}_before"));
            header.push(format!("p{p}_after"));
        }
        out.write_record(&header)?;
        for (continent, count) in &self.continents {
            let mut rec = vec![continent.clone(), count.to_string()];
            for &p in &self.percentiles {
                for stage in [Stage::Before, Stage::After] {
                    let v = self.get(continent, stage, p).unwrap_or(0.0);
                    rec.push(format!("{v:.4}"));
                }
            }
            out.write_record(&rec)?;
        }
        out.flush()?;
        Ok(())
    }
}

/// Known continents in table order, then any other labels alphabetically.
fn continent_order(panel: &AlignedPanel) -> Vec<String> {
    let mut present: Vec<String> = Vec::new();
    for r in &panel.rows {
        if !present.contains(&r.continent) {
            present.push(r.continent.clone());
        }
    }
    let mut ordered: Vec<String> = Continent::ALL
        .iter()
        .map(|c| c.label().to_string())
        .filter(|l| present.contains(l))
        .collect();
    let mut rest: Vec<String> = present
        .into_iter()
        .filter(|l| !ordered.contains(l))
        .collect();
    rest.sort();
    ordered.extend(rest);
    ordered
}

/// Continent shares among tail countries, averaged over the days before and
/// after `split_day`.
///
/// Percentiles below 50 select countries strictly below the day's threshold;
/// the others select countries strictly above it.
pub fn continent_quantile_table(
    panel: &AlignedPanel,
    split_day: usize,
    percentiles: &[u32],
    method: PercentileMethod,
) -> Result<QuantileTable> {
    let window = panel.window;
    if split_day == 0 || split_day >= window {
        return Err(Error::param(format!(
            "split day {split_day} must lie in 1..{window}"
        )));
    }
    if percentiles.is_empty() || percentiles.iter().any(|&p| p == 0 || p >= 100) {
        return Err(Error::param("percentiles must lie in 1..=99"));
    }
    let continents = continent_order(panel);
    let member: Vec<usize> = panel
        .rows
        .iter()
        .map(|r| continents.iter().position(|c| *c == r.continent).unwrap())
        .collect();

    let mut rows = Vec::new();
    let mut empty_tail_days = Vec::new();
    for &p in percentiles {
        let mut before = vec![0.0; continents.len()];
        let mut after = vec![0.0; continents.len()];
        for day in 1..=window {
            let column = panel.column(day);
            let mut sorted = column.clone();
            sorted.sort_by(f64::total_cmp);
            let threshold = percentile(&sorted, p, method);
            let mut counts = vec![0usize; continents.len()];
            for (v, &c) in column.iter().zip(&member) {
                let in_tail = if p <= 50 {
                    *v < threshold
                } else {
                    *v > threshold
                };
                if in_tail {
                    counts[c] += 1;
                }
            }
            let tail: usize = counts.iter().sum();
            if tail == 0 {
                warn!("day {day}: empty tail at percentile {p}");
                empty_tail_days.push((p, day));
                continue;
            }
            let acc = if day <= split_day {
                &mut before
            } else {
                &mut after
            };
            for (a, c) in acc.iter_mut().zip(&counts) {
                *a += *c as f64 / tail as f64;
            }
        }
        let (nb, na) = (split_day as f64, (window - split_day) as f64);
        for (i, continent) in continents.iter().enumerate() {
            rows.push(QuantileTableRow {
                continent: continent.clone(),
                stage: Stage::Before,
                percentile: p,
                proportion: before[i] / nb,
            });
            rows.push(QuantileTableRow {
                continent: continent.clone(),
                stage: Stage::After,
                percentile: p,
                proportion: after[i] / na,
            });
        }
    }
    let counts = continents
        .iter()
        .map(|c| {
            (
                c.clone(),
                panel.rows.iter().filter(|r| r.continent == *c).count(),
            )
        })
        .collect();
    Ok(QuantileTable {
        split_day,
        window,
        percentiles: percentiles.to_vec(),
        continents: counts,
        rows,
        empty_tail_days,
    })
}
