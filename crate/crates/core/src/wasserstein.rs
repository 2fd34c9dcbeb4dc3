//! Quantile-function representation of one-dimensional distributions.
//!
//! On the real line the Wasserstein-2 distance is the L² distance between
//! quantile functions, and the Fréchet mean of a family of distributions is
//! the pointwise average of their quantile functions. Everything here works on
//! a shared grid of midpoint levels `t_i = (i - 1/2) / L`.

use serde::{Deserialize, Serialize};

use crate::density::{grid_point, DensityEstimate, SupportInterval};
use crate::error::{Error, Result};

pub const DEFAULT_LEVELS: usize = 1000;

/// `L` midpoint probability levels.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct LevelGrid {
    count: usize,
}

impl LevelGrid {
    pub fn new(count: usize) -> Result<Self> {
        if count < 2 {
            return Err(Error::param(format!(
                "level count {count} must be at least 2"
            )));
        }
        Ok(Self { count })
    }

    pub fn count(&self) -> usize {
        self.count
    }

    #[inline]
    pub fn level(&self, i: usize) -> f64 {
        (i as f64 + 0.5) / self.count as f64
    }

    pub fn levels(&self) -> impl Iterator<Item = f64> + '_ {
        (0..self.count).map(|i| self.level(i))
    }
}

impl Default for LevelGrid {
    fn default() -> Self {
        Self {
            count: DEFAULT_LEVELS,
        }
    }
}

/// Nondecreasing quantile values in `[0, 1]` at the levels of a [`LevelGrid`].
#[derive(Debug, Clone, PartialEq)]
pub struct QuantileFunction {
    values: Vec<f64>,
}

impl QuantileFunction {
    pub fn new(values: Vec<f64>) -> Result<Self> {
        LevelGrid::new(values.len())?;
        if values.iter().any(|v| !(0.0..=1.0).contains(v)) {
            return Err(Error::param("quantile values must lie in [0, 1]"));
        }
        if values.windows(2).any(|w| w[1] < w[0]) {
            return Err(Error::param("quantile values must be nondecreasing"));
        }
        Ok(Self { values })
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn grid(&self) -> LevelGrid {
        LevelGrid {
            count: self.values.len(),
        }
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn into_values(self) -> Vec<f64> {
        self.values
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct FrechetSummary {
    pub mean: QuantileFunction,
    pub variance: f64,
}

impl FrechetSummary {
    pub fn of(qs: &[QuantileFunction]) -> Result<Self> {
        let mean = frechet_mean(qs)?;
        let variance = frechet_variance(qs, &mean)?;
        Ok(Self { mean, variance })
    }
}

/// Inverts the trapezoidal CDF of `d` at each level.
///
/// The CDF is rescaled to end exactly at 1. A level falling in a flat region
/// maps to the left end of that region.
pub fn quantile_from_density(d: &DensityEstimate, levels: LevelGrid) -> QuantileFunction {
    let v = d.values();
    let m = v.len();
    let dx = d.spacing();

    let mut cdf = Vec::with_capacity(m);
    let mut acc = 0.0;
    cdf.push(0.0);
    for j in 1..m {
        acc += 0.5 * dx * (v[j - 1] + v[j]);
        cdf.push(acc);
    }
    let total = acc;
    for c in cdf.iter_mut() {
        *c /= total;
    }
    cdf[m - 1] = 1.0;

    let mut out = Vec::with_capacity(levels.count());
    let mut j = 1;
    let mut prev = 0.0_f64;
    for t in levels.levels() {
        while cdf[j] < t {
            j += 1;
        }
        let (f0, f1) = (cdf[j - 1], cdf[j]);
        let x = grid_point(j - 1, m) + (t - f0) / (f1 - f0) * dx;
        // guard monotonicity against last-bit rounding at cell edges
        let x = x.clamp(prev, 1.0);
        out.push(x);
        prev = x;
    }
    QuantileFunction { values: out }
}

fn check_same_grid(a: &QuantileFunction, b: &QuantileFunction) -> Result<()> {
    if a.len() != b.len() {
        return Err(Error::param(format!(
            "quantile functions on different level grids ({} vs {})",
            a.len(),
            b.len()
        )));
    }
    Ok(())
}

/// Squared distance, the mean of squared quantile differences.
pub fn w2_distance_sq(q1: &QuantileFunction, q2: &QuantileFunction) -> Result<f64> {
    check_same_grid(q1, q2)?;
    Ok(mean_sq_diff(&q1.values, &q2.values))
}

pub fn w2_distance(q1: &QuantileFunction, q2: &QuantileFunction) -> Result<f64> {
    w2_distance_sq(q1, q2).map(f64::sqrt)
}

#[inline]
pub(crate) fn mean_sq_diff(a: &[f64], b: &[f64]) -> f64 {
    let s: f64 = a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum();
    s / a.len() as f64
}

fn check_family(qs: &[QuantileFunction]) -> Result<()> {
    let first = qs
        .first()
        .ok_or_else(|| Error::param("empty list of quantile functions"))?;
    for q in &qs[1..] {
        check_same_grid(first, q)?;
    }
    Ok(())
}

/// Pointwise average of quantile values, the exact Wasserstein-2 barycenter
/// with equal weights.
pub fn frechet_mean(qs: &[QuantileFunction]) -> Result<QuantileFunction> {
    check_family(qs)?;
    if qs.len() == 1 {
        return Ok(qs[0].clone());
    }
    // offsets from the first item keep the mean of identical inputs exact
    let n = qs.len() as f64;
    let base = &qs[0].values;
    let mut acc = vec![0.0; base.len()];
    for q in &qs[1..] {
        for ((a, v), b) in acc.iter_mut().zip(&q.values).zip(base) {
            *a += v - b;
        }
    }
    let mut prev = 0.0_f64;
    for (a, b) in acc.iter_mut().zip(base) {
        // rounding of the offsets may break monotonicity in the last bit
        *a = (b + *a / n).clamp(prev, 1.0);
        prev = *a;
    }
    Ok(QuantileFunction { values: acc })
}

/// Mean squared distance from each element of `qs` to `mean`.
pub fn frechet_variance(qs: &[QuantileFunction], mean: &QuantileFunction) -> Result<f64> {
    check_family(qs)?;
    check_same_grid(&qs[0], mean)?;
    let s: f64 = qs
        .iter()
        .map(|q| mean_sq_diff(&q.values, &mean.values))
        .sum();
    Ok(s / qs.len() as f64)
}

/// Density of the distribution with quantile function `q` on a
/// `grid_size`-point grid over `[0, 1]`.
///
/// The CDF is the piecewise-linear interpolant through `(Q(t_i), t_i)`,
/// extended by half a step to reach 0 and 1; it is differentiated by central
/// differences and renormalized.
pub fn density_from_quantile(q: &QuantileFunction, grid_size: usize) -> Result<DensityEstimate> {
    if grid_size < 3 {
        return Err(Error::param(format!(
            "grid size {grid_size} must be at least 3"
        )));
    }
    let v = &q.values;
    let l = v.len();
    if v[l - 1] - v[0] < 1e-12 {
        return Err(Error::DegenerateDensity(
            "constant quantile function has no density".into(),
        ));
    }
    let grid = q.grid();
    let mut xs = Vec::with_capacity(l + 2);
    let mut ts = Vec::with_capacity(l + 2);
    xs.push((v[0] - 0.5 * (v[1] - v[0])).max(0.0));
    ts.push(0.0);
    for (i, &x) in v.iter().enumerate() {
        xs.push(x);
        ts.push(grid.level(i));
    }
    xs.push((v[l - 1] + 0.5 * (v[l - 1] - v[l - 2])).min(1.0));
    ts.push(1.0);

    let cdf_at = |x: f64| -> f64 {
        let k = xs.partition_point(|&k| k <= x);
        if k == 0 {
            0.0
        } else if k == xs.len() {
            1.0
        } else {
            let (x0, x1) = (xs[k - 1], xs[k]);
            ts[k - 1] + (x - x0) / (x1 - x0) * (ts[k] - ts[k - 1])
        }
    };

    let cdf: Vec<f64> = (0..grid_size)
        .map(|i| cdf_at(grid_point(i, grid_size)))
        .collect();
    let dx = 1.0 / (grid_size - 1) as f64;
    let dens: Vec<f64> = (0..grid_size)
        .map(|i| {
            let d = if i == 0 {
                (cdf[1] - cdf[0]) / dx
            } else if i == grid_size - 1 {
                (cdf[i] - cdf[i - 1]) / dx
            } else {
                (cdf[i + 1] - cdf[i - 1]) / (2.0 * dx)
            };
            d.max(0.0)
        })
        .collect();
    DensityEstimate::from_unnormalized(dens, SupportInterval::unit())
}
