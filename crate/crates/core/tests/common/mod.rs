//! Independent oracles and random generators shared by integration tests.
#![allow(dead_code)]

use frechet_cp::{DensityEstimate, KernelSpec, LevelGrid, QuantileFunction, SupportInterval};
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use statrs::distribution::{Beta, Continuous};

/// Plain kernel sum (`w ≡ 1`) renormalized by the trapezoid rule, evaluated
/// with a direct double loop.
pub fn uncorrected_estimate(
    unit_values: &[f64],
    kernel: &KernelSpec,
    h: f64,
    m: usize,
) -> Vec<f64> {
    let raw: Vec<f64> = (0..m)
        .map(|i| {
            let x = i as f64 / (m - 1) as f64;
            unit_values.iter().map(|w| kernel.eval((x - w) / h)).sum()
        })
        .collect();
    let dx = 1.0 / (m - 1) as f64;
    let mass = dx * (raw.iter().sum::<f64>() - 0.5 * (raw[0] + raw[m - 1]));
    raw.into_iter().map(|v| v / mass).collect()
}

/// Quantile at level `t` of the piecewise-linear density through the grid
/// values, by bisection on its exact (piecewise-quadratic) CDF.
pub struct ExactGridQuantile {
    values: Vec<f64>,
    cum: Vec<f64>,
    dx: f64,
}

impl ExactGridQuantile {
    pub fn new(values: &[f64]) -> Self {
        let m = values.len();
        let dx = 1.0 / (m - 1) as f64;
        let mut cum = vec![0.0; m];
        for j in 1..m {
            cum[j] = cum[j - 1] + 0.5 * dx * (values[j - 1] + values[j]);
        }
        let total = cum[m - 1];
        Self {
            values: values.iter().map(|v| v / total).collect(),
            cum: cum.iter().map(|c| c / total).collect(),
            dx,
        }
    }

    fn cdf(&self, x: f64) -> f64 {
        let m = self.values.len();
        let j = ((x / self.dx).floor() as usize).min(m - 2);
        let s = x - j as f64 * self.dx;
        let (a, b) = (self.values[j], self.values[j + 1]);
        self.cum[j] + a * s + 0.5 * (b - a) / self.dx * s * s
    }

    pub fn quantile(&self, t: f64) -> f64 {
        let (mut lo, mut hi) = (0.0, 1.0);
        for _ in 0..60 {
            let mid = 0.5 * (lo + hi);
            if self.cdf(mid) < t {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        hi
    }
}

/// `∫₀¹ (Q₁ - Q₂)² dt` by the midpoint rule on `levels` points, then sqrt.
pub fn w2_quadrature_oracle(d1: &[f64], d2: &[f64], levels: usize) -> f64 {
    let (q1, q2) = (ExactGridQuantile::new(d1), ExactGridQuantile::new(d2));
    let s: f64 = (0..levels)
        .map(|i| {
            let t = (i as f64 + 0.5) / levels as f64;
            (q1.quantile(t) - q2.quantile(t)).powi(2)
        })
        .sum();
    (s / levels as f64).sqrt()
}

/// Random mixture of up to three Beta densities on an `m`-point grid.
pub fn random_grid_density(rng: &mut ChaCha8Rng, m: usize) -> DensityEstimate {
    let parts: Vec<(f64, Beta)> = (0..rng.random_range(1..=3))
        .map(|_| {
            let a = rng.random_range(1.2..8.0);
            let b = rng.random_range(1.2..8.0);
            (rng.random_range(0.2..1.0), Beta::new(a, b).unwrap())
        })
        .collect();
    let values = (0..m)
        .map(|i| {
            let x = i as f64 / (m - 1) as f64;
            parts.iter().map(|(w, d)| w * d.pdf(x)).sum()
        })
        .collect();
    DensityEstimate::from_unnormalized(values, SupportInterval::unit()).unwrap()
}

/// Random smooth quantile function `lo + width · t^p`.
pub fn random_quantile(rng: &mut ChaCha8Rng, levels: usize) -> QuantileFunction {
    let lo = rng.random_range(0.0..0.3);
    let width = rng.random_range(0.1..0.6);
    let p = rng.random_range(0.5..2.0);
    let g = LevelGrid::new(levels).unwrap();
    QuantileFunction::new(g.levels().map(|t| lo + width * t.powf(p)).collect()).unwrap()
}

/// Pointwise mean, computed naively.
pub fn naive_mean(items: &[QuantileFunction]) -> Vec<f64> {
    let l = items[0].len();
    (0..l)
        .map(|j| items.iter().map(|q| q.values()[j]).sum::<f64>() / items.len() as f64)
        .collect()
}

pub fn naive_d2(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y).powi(2)).sum::<f64>() / a.len() as f64
}

pub fn naive_variance(items: &[QuantileFunction], center: &[f64]) -> f64 {
    items
        .iter()
        .map(|q| naive_d2(q.values(), center))
        .sum::<f64>()
        / items.len() as f64
}

/// The scan statistic at cut `m`, from first principles.
pub fn naive_statistic(items: &[QuantileFunction], m: usize) -> f64 {
    let n = items.len();
    let mu = naive_mean(items);
    let d2: Vec<f64> = items.iter().map(|q| naive_d2(q.values(), &mu)).collect();
    let v = d2.iter().sum::<f64>() / n as f64;
    let sigma = d2.iter().map(|d| d * d).sum::<f64>() / n as f64 - v * v;
    let (a, b) = items.split_at(m);
    let (m1, m2) = (naive_mean(a), naive_mean(b));
    let (v1, v2) = (naive_variance(a, &m1), naive_variance(b, &m2));
    let (v1c, v2c) = (naive_variance(a, &m2), naive_variance(b, &m1));
    let k = m as f64 / n as f64;
    k * (1.0 - k) / sigma * ((v1 - v2).powi(2) + (v1c - v1 + v2c - v2).powi(2))
}
