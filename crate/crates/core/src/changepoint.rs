//! Single change-point scan for a sequence of distributions.
//!
//! For every admissible cut `m` the sequence is split into `1..=m` and
//! `m+1..=n`. Each segment gets its Fréchet mean and variance, plus a
//! "contaminated" variance measured around the other segment's mean. The
//! statistic
//!
//! ```text
//! T(k) = k(1-k)/σ² · [ (V1 - V2)² + (V1c - V1 + V2c - V2)² ],   k = m/n
//! ```
//!
//! is maximized over the cut interval `[c, 1-c]`, and its maximum is
//! calibrated against random reorderings of the sequence.

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::wasserstein::{
    frechet_mean, frechet_variance, mean_sq_diff, w2_distance_sq, QuantileFunction,
};

pub const DEFAULT_CUT: f64 = 0.1;
pub const DEFAULT_SIGMA_FLOOR: f64 = 1e-12;
pub const DEFAULT_PERMUTATIONS: usize = 200;

/// Slack for turning cut fractions into integer cut positions.
const CUT_SLACK: f64 = 1e-9;

/// How the pooled scale subtracts the pooled Fréchet variance.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SigmaFormula {
    /// `mean(d⁴) - V²`, the variance of the squared distances.
    #[default]
    Squared,
    /// `mean(d⁴) - V`, as typeset in the source formula.
    Literal,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ScanConfig {
    /// Cut parameter `c`; cuts range over `[c, 1 - c]`.
    pub cut: f64,
    pub sigma_formula: SigmaFormula,
    /// Pooled scales at or below this are degenerate.
    pub sigma_floor: f64,
}

impl Default for ScanConfig {
    fn default() -> Self {
        Self {
            cut: DEFAULT_CUT,
            sigma_formula: SigmaFormula::Squared,
            sigma_floor: DEFAULT_SIGMA_FLOOR,
        }
    }
}

impl ScanConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.cut > 0.0 && self.cut < 0.5) {
            return Err(Error::param(format!(
                "cut parameter {} must lie in (0, 1/2)",
                self.cut
            )));
        }
        if self.sigma_floor.is_nan() || self.sigma_floor < 0.0 {
            return Err(Error::param("sigma floor must be nonnegative"));
        }
        Ok(())
    }
}

/// Time-ordered quantile functions on one shared level grid.
#[derive(Debug, Clone, PartialEq)]
pub struct DensitySequence {
    items: Vec<QuantileFunction>,
}

impl DensitySequence {
    pub fn new(items: Vec<QuantileFunction>) -> Result<Self> {
        if items.len() < 2 {
            return Err(Error::param("a density sequence needs at least 2 items"));
        }
        let l = items[0].len();
        if items.iter().any(|q| q.len() != l) {
            return Err(Error::param("sequence items use different level grids"));
        }
        Ok(Self { items })
    }

    pub fn items(&self) -> &[QuantileFunction] {
        &self.items
    }

    pub fn len(&self) -> usize {
        self.items.len()
    }

    pub fn is_empty(&self) -> bool {
        self.items.is_empty()
    }

    pub fn reversed(&self) -> Self {
        Self {
            items: self.items.iter().rev().cloned().collect(),
        }
    }
}

/// Admissible integer cuts `m` with `m / n ∈ [c, 1 - c]`.
pub fn cut_range(n: usize, cut: f64) -> Result<std::ops::RangeInclusive<usize>> {
    if !(cut > 0.0 && cut < 0.5) {
        return Err(Error::param(format!(
            "cut parameter {cut} must lie in (0, 1/2)"
        )));
    }
    let nf = n as f64;
    if nf * cut < 2.0 - CUT_SLACK {
        return Err(Error::param(format!(
            "n·c = {} must be at least 2 (n = {n}, c = {cut})",
            nf * cut
        )));
    }
    let lo = ((nf * cut - CUT_SLACK).ceil() as usize).max(1);
    let hi = ((nf * (1.0 - cut) + CUT_SLACK).floor() as usize).min(n - 1);
    if lo > hi {
        return Err(Error::param(format!(
            "no admissible cut for n = {n}, c = {cut}"
        )));
    }
    Ok(lo..=hi)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SegmentStats {
    /// Cut fraction `m / n`.
    pub k: f64,
    /// Last index of the first segment (1-based).
    pub cut_index: usize,
    pub v1: f64,
    pub v2: f64,
    /// First segment around the second segment's mean.
    pub v1c: f64,
    /// Second segment around the first segment's mean.
    pub v2c: f64,
}

/// Segment statistics at cut fraction `k`, which must lie in `[c, 1 - c]`.
pub fn segment_stats(seq: &DensitySequence, k: f64, config: &ScanConfig) -> Result<SegmentStats> {
    config.validate()?;
    if !(k >= config.cut - CUT_SLACK && k <= 1.0 - config.cut + CUT_SLACK) {
        return Err(Error::param(format!(
            "cut fraction {k} outside [{}, {}]",
            config.cut,
            1.0 - config.cut
        )));
    }
    let n = seq.len();
    let m = ((n as f64) * k + CUT_SLACK).floor() as usize;
    if m == 0 || m >= n {
        return Err(Error::param(format!(
            "cut fraction {k} leaves an empty segment"
        )));
    }
    segment_stats_at(seq, m)
}

/// Segment statistics with the first segment ending at item `m` (1-based).
pub fn segment_stats_at(seq: &DensitySequence, m: usize) -> Result<SegmentStats> {
    let n = seq.len();
    if m == 0 || m >= n {
        return Err(Error::param(format!(
            "cut index {m} leaves an empty segment (n = {n})"
        )));
    }
    let (first, second) = seq.items.split_at(m);
    let mu1 = frechet_mean(first)?;
    let mu2 = frechet_mean(second)?;
    Ok(SegmentStats {
        k: m as f64 / n as f64,
        cut_index: m,
        v1: frechet_variance(first, &mu1)?,
        v2: frechet_variance(second, &mu2)?,
        v1c: frechet_variance(first, &mu2)?,
        v2c: frechet_variance(second, &mu1)?,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct PooledScale {
    pub mu_hat: QuantileFunction,
    pub v_hat: f64,
    /// σ² before flooring; may be negative under [`SigmaFormula::Literal`].
    pub raw_sigma_sq: f64,
    /// `max(raw_sigma_sq, floor)`.
    pub sigma_sq: f64,
    pub degenerate: bool,
}

pub fn pooled_scale(seq: &DensitySequence, config: &ScanConfig) -> Result<PooledScale> {
    config.validate()?;
    let mu_hat = frechet_mean(&seq.items)?;
    let d2: Vec<f64> = seq
        .items
        .iter()
        .map(|q| w2_distance_sq(q, &mu_hat))
        .collect::<Result<_>>()?;
    let n = d2.len() as f64;
    let v_hat = d2.iter().sum::<f64>() / n;
    let fourth = d2.iter().map(|d| d * d).sum::<f64>() / n;
    let raw_sigma_sq = match config.sigma_formula {
        SigmaFormula::Squared => fourth - v_hat * v_hat,
        SigmaFormula::Literal => fourth - v_hat,
    };
    let degenerate = raw_sigma_sq.is_nan() || raw_sigma_sq <= config.sigma_floor;
    Ok(PooledScale {
        mu_hat,
        v_hat,
        raw_sigma_sq,
        sigma_sq: raw_sigma_sq.max(config.sigma_floor),
        degenerate,
    })
}

/// The scan statistic at one cut, from its segment statistics and σ².
pub fn statistic_value(stats: &SegmentStats, sigma_sq: f64) -> f64 {
    let k = stats.k;
    let variance_gap = stats.v1 - stats.v2;
    let between = stats.v1c - stats.v1 + stats.v2c - stats.v2;
    k * (1.0 - k) / sigma_sq * (variance_gap * variance_gap + between * between)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ScanPoint {
    pub cut_index: usize,
    pub k: f64,
    pub statistic: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScanResult {
    pub n: usize,
    pub cut: f64,
    pub curve: Vec<ScanPoint>,
    pub k_hat: f64,
    /// Estimated change point: the last index (1-based) of the first regime.
    pub tau_hat: usize,
    pub max_stat: f64,
    pub sigma_sq: f64,
    pub degenerate: bool,
    pub p_value: Option<f64>,
    pub permutations: usize,
    pub seed: Option<u64>,
}

/// Evaluates the statistic at every admissible cut and locates its maximum.
///
/// Ties go to the smallest cut. When the pooled scale is degenerate the
/// curve is identically zero and the result is flagged.
pub fn scan_statistic(seq: &DensitySequence, config: &ScanConfig) -> Result<ScanResult> {
    config.validate()?;
    let n = seq.len();
    let cuts = cut_range(n, config.cut)?;
    let scale = pooled_scale(seq, config)?;

    let curve: Vec<ScanPoint> = if scale.degenerate {
        cuts.map(|m| ScanPoint {
            cut_index: m,
            k: m as f64 / n as f64,
            statistic: 0.0,
        })
        .collect()
    } else {
        cuts.collect::<Vec<_>>()
            .into_par_iter()
            .map(|m| {
                let stats = segment_stats_at(seq, m)?;
                Ok(ScanPoint {
                    cut_index: m,
                    k: stats.k,
                    statistic: statistic_value(&stats, scale.sigma_sq),
                })
            })
            .collect::<Result<_>>()?
    };

    let mut best = curve[0];
    for p in &curve[1..] {
        if p.statistic > best.statistic {
            best = *p;
        }
    }
    Ok(ScanResult {
        n,
        cut: config.cut,
        k_hat: best.k,
        tau_hat: best.cut_index,
        max_stat: best.statistic,
        sigma_sq: scale.sigma_sq,
        degenerate: scale.degenerate,
        curve,
        p_value: None,
        permutations: 0,
        seed: None,
    })
}

/// Sequence items centered at the pooled Fréchet mean, for fast rescans of
/// reordered sequences.
///
/// Uses prefix sums over the centered vectors and the identity
/// `V1c = V1 + d²(μ1, μ2)` (likewise for `V2c`), so a whole scan costs
/// `O(n·L)`.
struct CenteredSequence {
    centered: Vec<Vec<f64>>,
    sq_norms: Vec<f64>,
    levels: usize,
    cuts: std::ops::RangeInclusive<usize>,
    sigma_sq: f64,
}

impl CenteredSequence {
    fn new(
        seq: &DensitySequence,
        scale: &PooledScale,
        cuts: std::ops::RangeInclusive<usize>,
    ) -> Self {
        let mu = scale.mu_hat.values();
        let centered: Vec<Vec<f64>> = seq
            .items
            .iter()
            .map(|q| q.values().iter().zip(mu).map(|(v, m)| v - m).collect())
            .collect();
        let zero = vec![0.0; mu.len()];
        let sq_norms = centered.iter().map(|c| mean_sq_diff(c, &zero)).collect();
        Self {
            centered,
            sq_norms,
            levels: mu.len(),
            cuts,
            sigma_sq: scale.sigma_sq,
        }
    }

    fn max_statistic(&self, order: &[usize]) -> f64 {
        let n = order.len();
        let l = self.levels as f64;
        let mut total = vec![0.0; self.levels];
        let mut total_sq = 0.0;
        for &i in order {
            for (t, c) in total.iter_mut().zip(&self.centered[i]) {
                *t += c;
            }
            total_sq += self.sq_norms[i];
        }

        let lo = *self.cuts.start();
        let mut head = vec![0.0; self.levels];
        let mut head_sq = 0.0;
        for &i in &order[..lo - 1] {
            for (h, c) in head.iter_mut().zip(&self.centered[i]) {
                *h += c;
            }
            head_sq += self.sq_norms[i];
        }

        let mut best = f64::NEG_INFINITY;
        for m in self.cuts.clone() {
            let i = order[m - 1];
            for (h, c) in head.iter_mut().zip(&self.centered[i]) {
                *h += c;
            }
            head_sq += self.sq_norms[i];

            let (m1, m2) = (m as f64, (n - m) as f64);
            let (mut n1, mut n2, mut gap) = (0.0, 0.0, 0.0);
            for (h, t) in head.iter().zip(&total) {
                let a = h / m1;
                let b = (t - h) / m2;
                n1 += a * a;
                n2 += b * b;
                gap += (a - b) * (a - b);
            }
            let v1 = (head_sq / m1 - n1 / l).max(0.0);
            let v2 = ((total_sq - head_sq) / m2 - n2 / l).max(0.0);
            let d2 = gap / l;
            let k = m1 / n as f64;
            let stat = k * (1.0 - k) / self.sigma_sq * ((v1 - v2).powi(2) + (2.0 * d2).powi(2));
            best = best.max(stat);
        }
        best
    }
}

/// Permutation p-value `(1 + #{b : max T_b ≥ max T}) / (B + 1)`.
///
/// Replicate `b` shuffles the sequence with a ChaCha8 stream seeded by `seed`
/// and indexed by `b`, so the result does not depend on thread scheduling.
/// Degenerate sequences get `p = 1`.
pub fn permutation_pvalue(
    seq: &DensitySequence,
    config: &ScanConfig,
    permutations: usize,
    seed: u64,
) -> Result<f64> {
    config.validate()?;
    if permutations == 0 {
        return Err(Error::param("permutation count must be at least 1"));
    }
    let cuts = cut_range(seq.len(), config.cut)?;
    let scale = pooled_scale(seq, config)?;
    if scale.degenerate {
        return Ok(1.0);
    }
    let centered = CenteredSequence::new(seq, &scale, cuts);
    let identity: Vec<usize> = (0..seq.len()).collect();
    let observed = centered.max_statistic(&identity);

    let exceed = (0..permutations)
        .into_par_iter()
        .filter(|&b| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            rng.set_stream(b as u64 + 1);
            let mut order = identity.clone();
            order.shuffle(&mut rng);
            centered.max_statistic(&order) >= observed
        })
        .count();
    Ok((1 + exceed) as f64 / (permutations + 1) as f64)
}

/// Scan plus permutation calibration.
pub fn detect(
    seq: &DensitySequence,
    config: &ScanConfig,
    permutations: usize,
    seed: u64,
) -> Result<ScanResult> {
    let mut result = scan_statistic(seq, config)?;
    if permutations > 0 {
        result.p_value = Some(permutation_pvalue(seq, config, permutations, seed)?);
        result.permutations = permutations;
        result.seed = Some(seed);
    }
    Ok(result)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::wasserstein::LevelGrid;
    use rand::Rng;

    fn affine(lo: f64, hi: f64, l: usize) -> QuantileFunction {
        let g = LevelGrid::new(l).unwrap();
        QuantileFunction::new(g.levels().map(|t| lo + (hi - lo) * t).collect()).unwrap()
    }

    fn random_seq(n: usize, l: usize, seed: u64) -> DensitySequence {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let items = (0..n)
            .map(|_| {
                let lo = rng.random_range(0.0..0.3);
                let width = rng.random_range(0.1..0.6);
                let pow = rng.random_range(0.5..2.0);
                let g = LevelGrid::new(l).unwrap();
                QuantileFunction::new(g.levels().map(|t| lo + width * t.powf(pow)).collect())
                    .unwrap()
            })
            .collect();
        DensitySequence::new(items).unwrap()
    }

    #[test]
    fn cut_range_bounds() {
        assert_eq!(cut_range(150, 0.1).unwrap(), 15..=135);
        assert_eq!(cut_range(20, 0.1).unwrap(), 2..=18);
        assert!(cut_range(19, 0.1).is_err());
        assert!(cut_range(150, 0.5).is_err());
        assert!(cut_range(150, 0.0).is_err());
    }

    #[test]
    fn identical_items_give_zero_stats() {
        let seq = DensitySequence::new(vec![affine(0.1, 0.5, 100); 20]).unwrap();
        let s = segment_stats(&seq, 0.5, &ScanConfig::default()).unwrap();
        assert_eq!((s.v1, s.v2, s.v1c, s.v2c), (0.0, 0.0, 0.0, 0.0));
    }

    #[test]
    fn shifted_segments() {
        let mut items = vec![affine(0.0, 0.4, 1000); 10];
        items.extend(vec![affine(0.2, 0.6, 1000); 10]);
        let seq = DensitySequence::new(items).unwrap();
        let s = segment_stats(&seq, 0.5, &ScanConfig::default()).unwrap();
        assert_eq!(s.cut_index, 10);
        assert!(s.v1.abs() < 1e-15 && s.v2.abs() < 1e-15);
        assert!((s.v1c - 0.04).abs() < 1e-12);
        assert!((s.v2c - 0.04).abs() < 1e-12);
        assert!(segment_stats(&seq, 0.05, &ScanConfig::default()).is_err());
    }

    #[test]
    fn segment_stats_match_definition() {
        let seq = random_seq(30, 200, 1);
        let s = segment_stats(&seq, 0.4, &ScanConfig::default()).unwrap();
        let (a, b) = seq.items().split_at(12);
        let mean = |xs: &[QuantileFunction]| -> Vec<f64> {
            (0..200)
                .map(|j| xs.iter().map(|q| q.values()[j]).sum::<f64>() / xs.len() as f64)
                .collect()
        };
        let var = |xs: &[QuantileFunction], c: &[f64]| -> f64 {
            xs.iter()
                .map(|q| {
                    q.values()
                        .iter()
                        .zip(c)
                        .map(|(x, y)| (x - y).powi(2))
                        .sum::<f64>()
                        / 200.0
                })
                .sum::<f64>()
                / xs.len() as f64
        };
        let (ma, mb) = (mean(a), mean(b));
        assert!((s.v1 - var(a, &ma)).abs() < 1e-9);
        assert!((s.v2 - var(b, &mb)).abs() < 1e-9);
        assert!((s.v1c - var(a, &mb)).abs() < 1e-9);
        assert!((s.v2c - var(b, &ma)).abs() < 1e-9);
    }

    #[test]
    fn pooled_scale_examples() {
        let cfg = ScanConfig::default();
        let flat = DensitySequence::new(vec![affine(0.1, 0.5, 100); 5]).unwrap();
        let p = pooled_scale(&flat, &cfg).unwrap();
        assert_eq!(p.raw_sigma_sq, 0.0);
        assert!(p.degenerate);

        let two =
            DensitySequence::new(vec![affine(0.0, 0.4, 1000), affine(0.2, 0.6, 1000)]).unwrap();
        let p = pooled_scale(&two, &cfg).unwrap();
        assert!((p.v_hat - 0.01).abs() < 1e-12);
        assert!(p.raw_sigma_sq.abs() < 1e-15);

        let lit = pooled_scale(
            &two,
            &ScanConfig {
                sigma_formula: SigmaFormula::Literal,
                ..cfg
            },
        )
        .unwrap();
        assert!((lit.raw_sigma_sq - (0.0001 - 0.01)).abs() < 1e-12);
        assert!(lit.degenerate);
    }

    #[test]
    fn pooled_scale_matches_definition() {
        let seq = random_seq(25, 100, 4);
        let p = pooled_scale(&seq, &ScanConfig::default()).unwrap();
        let d2: Vec<f64> = seq
            .items()
            .iter()
            .map(|q| {
                q.values()
                    .iter()
                    .zip(p.mu_hat.values())
                    .map(|(a, b)| (a - b).powi(2))
                    .sum::<f64>()
                    / 100.0
            })
            .collect();
        let v = d2.iter().sum::<f64>() / 25.0;
        let s = d2.iter().map(|d| d * d).sum::<f64>() / 25.0 - v * v;
        assert!((p.v_hat - v).abs() < 1e-12);
        assert!((p.raw_sigma_sq - s).abs() < 1e-12);
    }

    #[test]
    fn constant_sequence_is_degenerate() {
        let seq = DensitySequence::new(vec![affine(0.1, 0.5, 100); 30]).unwrap();
        let r = scan_statistic(&seq, &ScanConfig::default()).unwrap();
        assert!(r.degenerate);
        assert!(r.curve.iter().all(|p| p.statistic == 0.0));
        assert_eq!(
            permutation_pvalue(&seq, &ScanConfig::default(), 50, 1).unwrap(),
            1.0
        );
    }

    #[test]
    fn fast_rescan_agrees_with_direct_scan() {
        let seq = random_seq(40, 150, 8);
        let cfg = ScanConfig::default();
        let direct = scan_statistic(&seq, &cfg).unwrap();
        let scale = pooled_scale(&seq, &cfg).unwrap();
        let fast = CenteredSequence::new(&seq, &scale, cut_range(40, 0.1).unwrap());
        let identity: Vec<usize> = (0..40).collect();
        let f = fast.max_statistic(&identity);
        assert!((f - direct.max_stat).abs() <= 1e-9 * direct.max_stat.max(1.0));
    }

    #[test]
    fn pvalue_is_deterministic_and_in_range() {
        let seq = random_seq(30, 100, 2);
        let cfg = ScanConfig::default();
        let a = permutation_pvalue(&seq, &cfg, 40, 99).unwrap();
        let b = permutation_pvalue(&seq, &cfg, 40, 99).unwrap();
        assert_eq!(a, b);
        assert!(a > 0.0 && a <= 1.0);
        assert!(permutation_pvalue(&seq, &cfg, 0, 99).is_err());
    }
}
