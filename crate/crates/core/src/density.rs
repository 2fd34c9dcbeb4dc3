//! Boundary-corrected kernel density estimation on a compact interval.
//!
//! Samples are affinely mapped onto `[0, 1]`. Near either endpoint the kernel
//! sum is multiplied by the reciprocal of the kernel mass that remains inside
//! the unit interval, and the result is renormalized to unit mass on the
//! output grid.

use log::warn;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::kernel::KernelSpec;

/// Upper bandwidth limit is `1/2 - BANDWIDTH_EPS`.
pub const BANDWIDTH_EPS: f64 = 1e-6;

/// Smallest rule-of-thumb bandwidth, in grid cells.
pub const MIN_BANDWIDTH_CELLS: f64 = 2.0;

pub const DEFAULT_GRID_SIZE: usize = 1001;

/// Padding factor for the data-driven upper support endpoint.
pub const SUPPORT_PADDING: f64 = 1.05;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SupportInterval {
    lower: f64,
    upper: f64,
}

impl SupportInterval {
    pub fn new(lower: f64, upper: f64) -> Result<Self> {
        if !(lower.is_finite() && upper.is_finite() && lower < upper) {
            return Err(Error::param(format!(
                "support [{lower}, {upper}] must satisfy lower < upper"
            )));
        }
        Ok(Self { lower, upper })
    }

    pub fn unit() -> Self {
        Self {
            lower: 0.0,
            upper: 1.0,
        }
    }

    /// `[0, 1.05 · max]`, or the unit interval when every value is zero.
    pub fn data_driven<'a>(values: impl IntoIterator<Item = &'a f64>) -> Self {
        let max = values.into_iter().copied().fold(0.0_f64, f64::max);
        if max > 0.0 {
            Self {
                lower: 0.0,
                upper: SUPPORT_PADDING * max,
            }
        } else {
            Self::unit()
        }
    }

    pub fn lower(&self) -> f64 {
        self.lower
    }

    pub fn upper(&self) -> f64 {
        self.upper
    }

    pub fn width(&self) -> f64 {
        self.upper - self.lower
    }

    pub fn contains(&self, x: f64) -> bool {
        x >= self.lower && x <= self.upper
    }

    pub fn to_unit(&self, x: f64) -> f64 {
        ((x - self.lower) / self.width()).clamp(0.0, 1.0)
    }

    pub fn from_unit(&self, u: f64) -> f64 {
        self.lower + u * self.width()
    }
}

/// An i.i.d. sample together with the interval it lives on.
#[derive(Debug, Clone, PartialEq)]
pub struct RawSample {
    values: Vec<f64>,
    support: SupportInterval,
}

impl RawSample {
    pub fn new(values: Vec<f64>, support: SupportInterval) -> Result<Self> {
        if values.len() < 2 {
            return Err(Error::param(format!(
                "sample needs at least 2 values, got {}",
                values.len()
            )));
        }
        if let Some(bad) = values
            .iter()
            .find(|v| !v.is_finite() || !support.contains(**v))
        {
            return Err(Error::param(format!(
                "sample value {bad} outside support [{}, {}]",
                support.lower, support.upper
            )));
        }
        Ok(Self { values, support })
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn support(&self) -> SupportInterval {
        self.support
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    /// Values mapped to `[0, 1]`, sorted ascending.
    pub fn sorted_unit_values(&self) -> Vec<f64> {
        let mut u: Vec<f64> = self
            .values
            .iter()
            .map(|&v| self.support.to_unit(v))
            .collect();
        u.sort_by(f64::total_cmp);
        u
    }
}

/// Bandwidth as a fraction of the unit-rescaled support.
#[derive(Debug, Clone, Copy, PartialEq, PartialOrd, Serialize, Deserialize)]
pub struct Bandwidth(f64);

impl Bandwidth {
    pub fn new(h: f64) -> Result<Self> {
        if h > 0.0 && h < 0.5 {
            Ok(Self(h))
        } else {
            Err(Error::param(format!("bandwidth {h} must lie in (0, 1/2)")))
        }
    }

    pub fn value(self) -> f64 {
        self.0
    }
}

/// A unit-mass density on the uniform grid `i / (M - 1)`, `i = 0..M`.
///
/// Values are with respect to the unit-rescaled variable; use
/// [`DensityEstimate::original_scale_values`] for plotting in data units.
#[derive(Debug, Clone, PartialEq)]
pub struct DensityEstimate {
    values: Vec<f64>,
    support: SupportInterval,
}

impl DensityEstimate {
    /// Builds an estimate from nonnegative grid values, renormalizing them to
    /// unit trapezoidal mass.
    pub fn from_unnormalized(values: Vec<f64>, support: SupportInterval) -> Result<Self> {
        if values.len() < 2 {
            return Err(Error::param("density grid needs at least 2 points"));
        }
        if values.iter().any(|v| !v.is_finite() || *v < 0.0) {
            return Err(Error::param(
                "density values must be finite and nonnegative",
            ));
        }
        let mass = trapezoid(&values);
        if mass <= 0.0 {
            return Err(Error::DegenerateDensity(
                "grid values have zero mass".into(),
            ));
        }
        let values = values.into_iter().map(|v| v / mass).collect();
        Ok(Self { values, support })
    }

    pub fn with_support(mut self, support: SupportInterval) -> Self {
        self.support = support;
        self
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn support(&self) -> SupportInterval {
        self.support
    }

    pub fn grid_size(&self) -> usize {
        self.values.len()
    }

    pub fn spacing(&self) -> f64 {
        1.0 / (self.values.len() - 1) as f64
    }

    pub fn grid_point(&self, i: usize) -> f64 {
        grid_point(i, self.values.len())
    }

    pub fn integral(&self) -> f64 {
        trapezoid(&self.values)
    }

    /// Grid positions in data units.
    pub fn original_grid(&self) -> Vec<f64> {
        (0..self.values.len())
            .map(|i| self.support.from_unit(self.grid_point(i)))
            .collect()
    }

    /// Density values with respect to the data-unit variable.
    pub fn original_scale_values(&self) -> Vec<f64> {
        let w = self.support.width();
        self.values.iter().map(|v| v / w).collect()
    }

    /// Grid position of the largest value (first one on ties), in data units.
    pub fn mode(&self) -> f64 {
        let mut best = 0;
        for (i, v) in self.values.iter().enumerate() {
            if *v > self.values[best] {
                best = i;
            }
        }
        self.support.from_unit(self.grid_point(best))
    }
}

#[inline]
pub(crate) fn grid_point(i: usize, m: usize) -> f64 {
    i as f64 / (m - 1) as f64
}

/// Composite trapezoid over `[0, 1]` for values on a uniform grid.
pub fn trapezoid(values: &[f64]) -> f64 {
    let m = values.len();
    if m < 2 {
        return 0.0;
    }
    let dx = 1.0 / (m - 1) as f64;
    let inner: f64 = values.iter().sum();
    dx * (inner - 0.5 * (values[0] + values[m - 1]))
}

/// Reciprocal of the kernel mass that stays inside `[0, 1]` at position `x`.
///
/// Equals 1 on `[h, 1 - h]`.
pub fn boundary_weight(x: f64, h: Bandwidth, kernel: &KernelSpec) -> Result<f64> {
    if !(0.0..=1.0).contains(&x) {
        return Err(Error::param(format!("position {x} outside [0, 1]")));
    }
    Ok(boundary_weight_unchecked(x, h.value(), kernel))
}

#[inline]
fn boundary_weight_unchecked(x: f64, h: f64, kernel: &KernelSpec) -> f64 {
    if x < h {
        1.0 / kernel.mass(-x / h, 1.0)
    } else if x > 1.0 - h {
        1.0 / kernel.mass(-1.0, (1.0 - x) / h)
    } else {
        1.0
    }
}

/// Boundary-corrected kernel estimate on a `grid_size`-point grid.
///
/// The sample is sorted before summation so the result does not depend on
/// input order.
pub fn estimate_density(
    sample: &RawSample,
    kernel: &KernelSpec,
    h: Bandwidth,
    grid_size: usize,
) -> Result<DensityEstimate> {
    if grid_size < 3 {
        return Err(Error::param(format!(
            "grid size {grid_size} must be at least 3"
        )));
    }
    let bw = h.value();
    let unit = sample.sorted_unit_values();

    let numerator: Vec<f64> = (0..grid_size)
        .map(|i| {
            let x = grid_point(i, grid_size);
            let lo = unit.partition_point(|&w| w < x - bw);
            let hi = unit.partition_point(|&w| w <= x + bw);
            let sum: f64 = unit[lo..hi]
                .iter()
                .map(|&w| kernel.eval((x - w) / bw))
                .sum();
            sum * boundary_weight_unchecked(x, bw, kernel)
        })
        .collect();

    let mass = trapezoid(&numerator);
    if mass > 0.0 && mass.is_finite() {
        return DensityEstimate::from_unnormalized(numerator, sample.support());
    }

    // Every sample point sits between grid nodes further than h away.
    warn!(
        "kernel sum vanishes on the grid (h = {bw}, {} points); concentrating mass at the nearest node",
        grid_size
    );
    let median = unit[unit.len() / 2];
    let node = (median * (grid_size - 1) as f64).round() as usize;
    let mut spike = vec![0.0; grid_size];
    spike[node] = 1.0;
    DensityEstimate::from_unnormalized(spike, sample.support())
}

fn sample_sd(values: &[f64]) -> f64 {
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let ss: f64 = values.iter().map(|v| (v - mean) * (v - mean)).sum();
    (ss / (n - 1.0)).sqrt()
}

/// Linear-interpolation quantile of sorted data, `p` in `[0, 1]`.
pub(crate) fn sorted_quantile(sorted: &[f64], p: f64) -> f64 {
    let pos = p * (sorted.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    sorted[lo] + (pos - lo as f64) * (sorted[hi] - sorted[lo])
}

/// Smallest bandwidth the rule of thumb may return for a given grid.
pub fn min_bandwidth(grid_size: usize) -> f64 {
    MIN_BANDWIDTH_CELLS / (grid_size.max(2) - 1) as f64
}

/// Rule-of-thumb bandwidth `0.9 · min(sd, IQR/1.34) · n^(-1/5)` on the
/// unit-rescaled sample, clamped to `[2 grid cells, 1/2 - 1e-6]`.
pub fn select_bandwidth(sample: &RawSample, grid_size: usize) -> Bandwidth {
    let unit = sample.sorted_unit_values();
    let floor = min_bandwidth(grid_size).min(0.5 - BANDWIDTH_EPS);
    let sd = sample_sd(&unit);
    if sd <= 0.0 || !sd.is_finite() {
        warn!("sample has zero dispersion; using minimum bandwidth {floor}");
        return Bandwidth(floor);
    }
    let iqr = sorted_quantile(&unit, 0.75) - sorted_quantile(&unit, 0.25);
    let spread = if iqr > 0.0 { sd.min(iqr / 1.34) } else { sd };
    let h = 0.9 * spread * (unit.len() as f64).powf(-0.2);
    Bandwidth(clamp_bandwidth(h, grid_size))
}

/// Clamps a bandwidth to `[2 grid cells, 1/2 - 1e-6]`.
pub fn clamp_bandwidth(h: f64, grid_size: usize) -> f64 {
    let floor = min_bandwidth(grid_size).min(0.5 - BANDWIDTH_EPS);
    h.clamp(floor, 0.5 - BANDWIDTH_EPS)
}

/// One bandwidth shared by a family of samples: the median of the per-sample
/// rule-of-thumb values.
pub fn common_bandwidth(samples: &[RawSample], grid_size: usize) -> Result<Bandwidth> {
    if samples.is_empty() {
        return Err(Error::param("no samples to choose a bandwidth from"));
    }
    let mut hs: Vec<f64> = samples
        .iter()
        .map(|s| select_bandwidth(s, grid_size).value())
        .collect();
    hs.sort_by(f64::total_cmp);
    let n = hs.len();
    let median = if n % 2 == 1 {
        hs[n / 2]
    } else {
        0.5 * (hs[n / 2 - 1] + hs[n / 2])
    };
    Bandwidth::new(median)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;
    use rand_distr::{Beta, Distribution};

    fn unit_sample(values: Vec<f64>) -> RawSample {
        RawSample::new(values, SupportInterval::unit()).unwrap()
    }

    /// Naive kernel sum with `w ≡ 1`, renormalized on the grid.
    fn uncorrected(values: &[f64], k: &KernelSpec, h: f64, m: usize) -> Vec<f64> {
        let raw: Vec<f64> = (0..m)
            .map(|i| {
                let x = i as f64 / (m - 1) as f64;
                values.iter().map(|w| k.eval((x - w) / h)).sum()
            })
            .collect();
        let mass = trapezoid(&raw);
        raw.into_iter().map(|v| v / mass).collect()
    }

    fn midpoint_rule(f: impl Fn(f64) -> f64, a: f64, b: f64, n: usize) -> f64 {
        let dx = (b - a) / n as f64;
        (0..n).map(|i| f(a + (i as f64 + 0.5) * dx)).sum::<f64>() * dx
    }

    #[test]
    fn boundary_weight_examples() {
        let k = KernelSpec::epanechnikov();
        let h = Bandwidth::new(0.1).unwrap();
        assert_eq!(boundary_weight(0.5, h, &k).unwrap(), 1.0);
        assert!((boundary_weight(0.0, h, &k).unwrap() - 2.0).abs() < 1e-12);

        // quadrature oracle for the truncated mass on [-0.5, 1]
        let mass = midpoint_rule(|u| 0.75 * (1.0 - u * u), -0.5, 1.0, 200_000);
        assert!((mass - 0.84375).abs() < 1e-9);
        let w = boundary_weight(0.05, h, &k).unwrap();
        assert!((w - 1.0 / mass).abs() < 1e-8);
        assert!((w - 1.185185).abs() < 1e-6);
    }

    #[test]
    fn boundary_weight_symmetric_and_at_least_one() {
        for k in [KernelSpec::epanechnikov(), KernelSpec::gaussian()] {
            for &h in &[0.01, 0.1, 0.3, 0.49] {
                let h = Bandwidth::new(h).unwrap();
                for i in 0..=200 {
                    let x = i as f64 / 200.0;
                    let a = boundary_weight(x, h, &k).unwrap();
                    let b = boundary_weight(1.0 - x, h, &k).unwrap();
                    assert!(a >= 1.0);
                    assert!((a - b).abs() < 1e-12, "x={x} h={h:?}: {a} vs {b}");
                }
            }
        }
    }

    #[test]
    fn bad_inputs_rejected() {
        assert!(Bandwidth::new(0.0).is_err());
        assert!(Bandwidth::new(0.5).is_err());
        assert!(Bandwidth::new(-0.1).is_err());
        let h = Bandwidth::new(0.1).unwrap();
        assert!(boundary_weight(1.2, h, &KernelSpec::default()).is_err());
        assert!(RawSample::new(vec![0.1], SupportInterval::unit()).is_err());
        assert!(RawSample::new(vec![0.1, 1.5], SupportInterval::unit()).is_err());
        assert!(SupportInterval::new(1.0, 1.0).is_err());
    }

    #[test]
    fn identical_values_give_symmetric_unimodal_density() {
        let s = unit_sample(vec![0.5; 189]);
        let d = estimate_density(
            &s,
            &KernelSpec::default(),
            Bandwidth::new(0.1).unwrap(),
            1001,
        )
        .unwrap();
        assert!((d.integral() - 1.0).abs() < 1e-12);
        let v = d.values();
        for i in 0..v.len() {
            assert!((v[i] - v[v.len() - 1 - i]).abs() < 1e-9);
        }
        let peak = v.iter().cloned().fold(0.0, f64::max);
        assert_eq!(v[500], peak);
    }

    fn uniform_sup_deviation(n: usize, seed: u64) -> f64 {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let values: Vec<f64> = (0..n).map(|_| rng.random::<f64>()).collect();
        let d = estimate_density(
            &unit_sample(values),
            &KernelSpec::default(),
            Bandwidth::new(0.05).unwrap(),
            1001,
        )
        .unwrap();
        (0..1001)
            .filter(|&i| (0.05..=0.95).contains(&d.grid_point(i)))
            .map(|i| (d.values()[i] - 1.0).abs())
            .fold(0.0, f64::max)
    }

    #[test]
    fn uniform_draws_recover_flat_density() {
        // pointwise sd is sqrt(R(K) / (n h)) = sqrt(0.6 / 500) ≈ 0.035 at n = 10⁴,
        // so the sup over the interior is held to about 4.3 sd
        assert!(uniform_sup_deviation(10_000, 7) < 0.15);
        // at n = 10⁵ the sd drops to 0.011 and the 0.05 band holds
        assert!(uniform_sup_deviation(100_000, 7) < 0.05);
    }

    #[test]
    fn correction_lifts_mass_at_the_boundary() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let beta = Beta::new(1.0, 20.0).unwrap();
        let values: Vec<f64> = (0..500).map(|_| beta.sample(&mut rng)).collect();
        let k = KernelSpec::default();
        let d = estimate_density(
            &unit_sample(values.clone()),
            &k,
            Bandwidth::new(0.05).unwrap(),
            1001,
        )
        .unwrap();
        assert!((d.integral() - 1.0).abs() < 1e-6);

        let raw_mass = {
            let raw: Vec<f64> = (0..1001)
                .map(|i| {
                    let x = i as f64 / 1000.0;
                    values
                        .iter()
                        .map(|w| k.eval((x - w) / 0.05) / 0.05)
                        .sum::<f64>()
                        / 500.0
                })
                .collect();
            trapezoid(&raw)
        };
        assert!(
            raw_mass < 0.9,
            "uncorrected estimate should leak mass: {raw_mass}"
        );
        let plain = uncorrected(&values, &k, 0.05, 1001);
        assert!(d.values()[0] > plain[0]);
    }

    #[test]
    fn interior_samples_match_uncorrected_estimator() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let h = 0.08;
        let values: Vec<f64> = (0..300)
            .map(|_| rng.random_range(2.0 * h..=1.0 - 2.0 * h))
            .collect();
        let k = KernelSpec::default();
        let d = estimate_density(
            &unit_sample(values.clone()),
            &k,
            Bandwidth::new(h).unwrap(),
            1001,
        )
        .unwrap();
        let plain = uncorrected(&values, &k, h, 1001);
        for (i, (a, b)) in d.values().iter().zip(&plain).enumerate() {
            let x = i as f64 / 1000.0;
            if x >= 2.0 * h && x <= 1.0 - 2.0 * h {
                assert!((a - b).abs() < 1e-9);
            }
        }
    }

    #[test]
    fn estimate_is_order_independent() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let values: Vec<f64> = (0..200).map(|_| rng.random::<f64>().powi(3)).collect();
        let mut rev = values.clone();
        rev.reverse();
        let k = KernelSpec::gaussian();
        let h = Bandwidth::new(0.07).unwrap();
        let a = estimate_density(&unit_sample(values), &k, h, 501).unwrap();
        let b = estimate_density(&unit_sample(rev), &k, h, 501).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn degenerate_sample_still_normalizes() {
        // all values at 0.5004 with h smaller than the gap to the nearest node
        let s = unit_sample(vec![0.5004; 10]);
        let d = estimate_density(
            &s,
            &KernelSpec::default(),
            Bandwidth::new(0.0001).unwrap(),
            1001,
        )
        .unwrap();
        assert!((d.integral() - 1.0).abs() < 1e-12);
        assert!(d.values()[500] > 0.0);
    }

    #[test]
    fn rule_of_thumb_bandwidth() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let values: Vec<f64> = (0..189)
            .map(|_| 0.5 + 0.05 * (rng.random::<f64>() - 0.5) * 12f64.sqrt())
            .collect();
        let s = unit_sample(values.clone());
        let mut sorted = values.clone();
        sorted.sort_by(f64::total_cmp);
        let n = sorted.len() as f64;
        let mean = sorted.iter().sum::<f64>() / n;
        let sd = (sorted.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0)).sqrt();
        let q = |p: f64| {
            let pos = p * (n - 1.0);
            let (lo, hi) = (pos.floor() as usize, pos.ceil() as usize);
            sorted[lo] + (pos - lo as f64) * (sorted[hi] - sorted[lo])
        };
        let expected = 0.9 * sd.min((q(0.75) - q(0.25)) / 1.34) * n.powf(-0.2);
        let h = select_bandwidth(&s, 1001).value();
        assert!((h - expected).abs() < 1e-14);

        assert_eq!(
            select_bandwidth(&unit_sample(vec![0.3; 50]), 1001).value(),
            0.002
        );

        assert_eq!(clamp_bandwidth(0.8, 1001), 0.5 - BANDWIDTH_EPS);
        assert_eq!(clamp_bandwidth(0.0005, 1001), 0.002);
    }

    #[test]
    fn support_mapping() {
        let s = SupportInterval::new(2.0, 6.0).unwrap();
        assert_eq!(s.to_unit(3.0), 0.25);
        assert_eq!(s.from_unit(0.75), 5.0);
        let d = SupportInterval::data_driven(&[0.1, 0.2]);
        assert!((d.upper() - 0.21).abs() < 1e-15);
        assert_eq!(
            SupportInterval::data_driven(&[0.0]),
            SupportInterval::unit()
        );
    }
}
