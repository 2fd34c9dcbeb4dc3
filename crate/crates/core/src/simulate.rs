//! Synthetic panels with a planted change in the daily distribution.

use std::fmt;
use std::str::FromStr;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Beta, Distribution, Uniform};
use serde::{Deserialize, Serialize};

use crate::data::{AlignedPanel, PanelRow};
use crate::error::{Error, Result};

pub const SYNTHETIC_CONTINENT: &str = "Synthetic";

/// A distribution on `[0, 1]`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "family", rename_all = "lowercase")]
pub enum Family {
    Beta { a: f64, b: f64 },
    Uniform { lo: f64, hi: f64 },
}

impl Family {
    pub fn validate(&self) -> Result<()> {
        match *self {
            Family::Beta { a, b } if a > 0.0 && b > 0.0 && a.is_finite() && b.is_finite() => Ok(()),
            Family::Uniform { lo, hi } if 0.0 <= lo && lo < hi && hi <= 1.0 => Ok(()),
            _ => Err(Error::param(format!("invalid family parameters: {self}"))),
        }
    }

    fn sampler(&self) -> Result<Sampler> {
        self.validate()?;
        Ok(match *self {
            Family::Beta { a, b } => {
                Sampler::Beta(Beta::new(a, b).map_err(|e| Error::param(e.to_string()))?)
            }
            Family::Uniform { lo, hi } => Sampler::Uniform(
                Uniform::new_inclusive(lo, hi).map_err(|e| Error::param(e.to_string()))?,
            ),
        })
    }
}

impl fmt::Display for Family {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Family::Beta { a, b } => write!(f, "beta:{a},{b}"),
            Family::Uniform { lo, hi } => write!(f, "uniform:{lo},{hi}"),
        }
    }
}

/// Parses `beta:A,B` or `uniform:LO,HI`.
impl FromStr for Family {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let bad = || {
            Error::param(format!(
                "cannot parse family `{s}` (expected beta:A,B or uniform:LO,HI)"
            ))
        };
        let (name, params) = s.split_once(':').ok_or_else(bad)?;
        let (x, y) = params.split_once(',').ok_or_else(bad)?;
        let x: f64 = x.trim().parse().map_err(|_| bad())?;
        let y: f64 = y.trim().parse().map_err(|_| bad())?;
        let family = match name.trim().to_ascii_lowercase().as_str() {
            "beta" => Family::Beta { a: x, b: y },
            "uniform" => Family::Uniform { lo: x, hi: y },
            _ => return Err(bad()),
        };
        family.validate()?;
        Ok(family)
    }
}

enum Sampler {
    Beta(Beta<f64>),
    Uniform(Uniform<f64>),
}

impl Sampler {
    fn draw(&self, rng: &mut ChaCha8Rng) -> f64 {
        match self {
            Sampler::Beta(d) => d.sample(rng),
            Sampler::Uniform(d) => d.sample(rng),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SyntheticSpec {
    pub before: Family,
    pub after: Family,
    /// Last day drawn from `before` (1-based).
    pub change_index: usize,
    pub days: usize,
    pub draws: usize,
    pub replicates: usize,
    pub seed: u64,
}

impl Default for SyntheticSpec {
    fn default() -> Self {
        Self {
            before: Family::Beta { a: 2.0, b: 8.0 },
            after: Family::Beta { a: 2.0, b: 5.0 },
            change_index: 104,
            days: 150,
            draws: 189,
            replicates: 1,
            seed: 0,
        }
    }
}

impl SyntheticSpec {
    pub fn validate(&self) -> Result<()> {
        self.before.validate()?;
        self.after.validate()?;
        if self.days < 4 {
            return Err(Error::param("need at least 4 days"));
        }
        if self.change_index < 2 || self.change_index > self.days - 2 {
            return Err(Error::param(format!(
                "change index {} must lie in 2..={} so both regimes have two days",
                self.change_index,
                self.days - 2
            )));
        }
        if self.draws < 2 {
            return Err(Error::param("need at least 2 draws per day"));
        }
        if self.replicates == 0 {
            return Err(Error::param("need at least one replicate"));
        }
        Ok(())
    }

    /// Panel for replicate `r`: `draws` rows of independent draws per day.
    ///
    /// Each replicate uses its own ChaCha8 stream under the spec's seed.
    pub fn panel(&self, replicate: usize) -> Result<AlignedPanel> {
        self.validate()?;
        let before = self.before.sampler()?;
        let after = self.after.sampler()?;
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed);
        rng.set_stream(replicate as u64);

        let mut rates = vec![vec![0.0; self.days]; self.draws];
        for day in 0..self.days {
            let sampler = if day < self.change_index {
                &before
            } else {
                &after
            };
            for row in rates.iter_mut() {
                row[day] = sampler.draw(&mut rng);
            }
        }
        let rows = rates
            .into_iter()
            .enumerate()
            .map(|(i, rates)| PanelRow {
                country: format!("unit_{:04}", i + 1),
                continent: SYNTHETIC_CONTINENT.to_string(),
                origin: None,
                observed_days: self.days,
                rates,
                deaths: None,
                confirmed: None,
            })
            .collect();
        AlignedPanel::new(rows, self.days)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn family_parsing() {
        assert_eq!(
            "beta:2,8".parse::<Family>().unwrap(),
            Family::Beta { a: 2.0, b: 8.0 }
        );
        assert_eq!(
            "uniform:0.1,0.4".parse::<Family>().unwrap(),
            Family::Uniform { lo: 0.1, hi: 0.4 }
        );
        assert!("beta:-1,2".parse::<Family>().is_err());
        assert!("gamma:1,2".parse::<Family>().is_err());
        assert!("uniform:0.5,0.2".parse::<Family>().is_err());
    }

    #[test]
    fn default_panel_dimensions() {
        let spec = SyntheticSpec::default();
        let p = spec.panel(0).unwrap();
        assert_eq!(p.len(), 189);
        assert_eq!(p.window(), 150);
        assert_eq!(p, spec.panel(0).unwrap());
        assert_ne!(p, spec.panel(1).unwrap());
    }

    #[test]
    fn change_index_bounds() {
        for bad in [0, 1, 149, 150] {
            let spec = SyntheticSpec {
                change_index: bad,
                ..Default::default()
            };
            assert!(spec.validate().is_err(), "{bad}");
        }
    }
}
