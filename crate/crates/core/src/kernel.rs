//! Smoothing kernels supported on `[-1, 1]`.
//!
//! Both families are symmetric, nonnegative and integrate to one. Because the
//! support is compact, the truncated masses needed by the boundary weight have
//! closed forms through [`KernelSpec::cdf`].

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use statrs::function::erf::erf;

use crate::error::Error;

/// Standard deviation of the Gaussian before truncation to `[-1, 1]`.
const GAUSSIAN_SCALE: f64 = 1.0 / 3.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum KernelFamily {
    /// `K(u) = 0.75 (1 - u²)` on `[-1, 1]`.
    #[default]
    Epanechnikov,
    /// Normal density with scale 1/3, truncated to `[-1, 1]` and renormalized.
    Gaussian,
}

impl fmt::Display for KernelFamily {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            KernelFamily::Epanechnikov => f.write_str("epanechnikov"),
            KernelFamily::Gaussian => f.write_str("gaussian"),
        }
    }
}

impl FromStr for KernelFamily {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "epanechnikov" | "epa" => Ok(KernelFamily::Epanechnikov),
            "gaussian" | "gauss" => Ok(KernelFamily::Gaussian),
            other => Err(Error::param(format!("unknown kernel family `{other}`"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct KernelSpec {
    pub family: KernelFamily,
}

impl KernelSpec {
    pub const SUPPORT_RADIUS: f64 = 1.0;

    pub fn new(family: KernelFamily) -> Self {
        Self { family }
    }

    pub fn epanechnikov() -> Self {
        Self::new(KernelFamily::Epanechnikov)
    }

    pub fn gaussian() -> Self {
        Self::new(KernelFamily::Gaussian)
    }

    /// Kernel value at `u`; zero outside `[-1, 1]`.
    #[inline]
    pub fn eval(&self, u: f64) -> f64 {
        if !(-1.0..=1.0).contains(&u) {
            return 0.0;
        }
        match self.family {
            KernelFamily::Epanechnikov => 0.75 * (1.0 - u * u),
            KernelFamily::Gaussian => {
                let z = u / GAUSSIAN_SCALE;
                (-0.5 * z * z).exp()
                    / (GAUSSIAN_SCALE * (2.0 * std::f64::consts::PI).sqrt() * gaussian_mass())
            }
        }
    }

    /// Kernel mass on `[-1, u]`.
    pub fn cdf(&self, u: f64) -> f64 {
        if u <= -1.0 {
            return 0.0;
        }
        if u >= 1.0 {
            return 1.0;
        }
        match self.family {
            KernelFamily::Epanechnikov => 0.5 + 0.75 * (u - u * u * u / 3.0),
            KernelFamily::Gaussian => {
                let phi =
                    |x: f64| 0.5 * (1.0 + erf(x / (GAUSSIAN_SCALE * std::f64::consts::SQRT_2)));
                (phi(u) - phi(-1.0)) / gaussian_mass()
            }
        }
    }

    /// Kernel mass on `[a, b]`.
    pub fn mass(&self, a: f64, b: f64) -> f64 {
        if b <= a {
            return 0.0;
        }
        self.cdf(b) - self.cdf(a)
    }
}

/// Mass of the untruncated normal on `[-1, 1]`.
fn gaussian_mass() -> f64 {
    erf(1.0 / (GAUSSIAN_SCALE * std::f64::consts::SQRT_2))
}
