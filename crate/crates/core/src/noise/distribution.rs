use std::f64::consts::SQRT_2;

use rand::Rng;
use serde::{Deserialize, Serialize};
use statrs::function::erf::erfc;

use crate::error::{Error, Result};
use crate::geometry::Interval;

fn neg_inf() -> f64 {
    f64::NEG_INFINITY
}

fn pos_inf() -> f64 {
    f64::INFINITY
}

/// One scalar noise distribution.
///
/// `Uniform { lo, hi }` with `lo == hi` is accepted as a point mass, which is
/// handy for noise-free runs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum NoiseComponent {
    Uniform {
        lo: f64,
        hi: f64,
    },
    TruncatedGaussian {
        mean: f64,
        stddev: f64,
        #[serde(default = "neg_inf")]
        lo: f64,
        #[serde(default = "pos_inf")]
        hi: f64,
    },
    Mixture {
        weights: Vec<f64>,
        components: Vec<NoiseComponent>,
    },
}

/// `P(a <= Z <= b)` for a standard normal, accurate in both tails.
fn std_normal_mass(a: f64, b: f64) -> f64 {
    if a >= b {
        return 0.0;
    }
    if a >= 0.0 {
        0.5 * (erfc(a / SQRT_2) - erfc(b / SQRT_2))
    } else if b <= 0.0 {
        0.5 * (erfc(-b / SQRT_2) - erfc(-a / SQRT_2))
    } else {
        1.0 - 0.5 * erfc(-a / SQRT_2) - 0.5 * erfc(b / SQRT_2)
    }
}

impl NoiseComponent {
    pub fn uniform(lo: f64, hi: f64) -> Self {
        NoiseComponent::Uniform { lo, hi }
    }

    pub fn truncated_gaussian(mean: f64, stddev: f64, lo: f64, hi: f64) -> Self {
        NoiseComponent::TruncatedGaussian {
            mean,
            stddev,
            lo,
            hi,
        }
    }

    pub fn mixture(weights: Vec<f64>, components: Vec<NoiseComponent>) -> Self {
        NoiseComponent::Mixture {
            weights,
            components,
        }
    }

    pub fn validate(&self) -> Result<()> {
        match self {
            NoiseComponent::Uniform { lo, hi } => {
                if !(lo.is_finite() && hi.is_finite() && lo <= hi) {
                    return Err(Error::invalid(format!("uniform bounds [{lo}, {hi}] are invalid")));
                }
            }
            NoiseComponent::TruncatedGaussian {
                mean,
                stddev,
                lo,
                hi,
            } => {
                if !mean.is_finite() || !(stddev.is_finite() && *stddev > 0.0) {
                    return Err(Error::invalid(format!(
                        "gaussian needs a finite mean and positive stddev (got {mean}, {stddev})"
                    )));
                }
                if lo.is_nan() || hi.is_nan() || lo >= hi {
                    return Err(Error::invalid(format!("truncation [{lo}, {hi}] is empty")));
                }
                if self.normalizer() <= 0.0 {
                    return Err(Error::invalid(format!(
                        "truncation [{lo}, {hi}] carries no gaussian mass"
                    )));
                }
            }
            NoiseComponent::Mixture {
                weights,
                components,
            } => {
                if weights.is_empty() || weights.len() != components.len() {
                    return Err(Error::invalid("mixture needs one weight per component"));
                }
                if weights.iter().any(|w| !(w.is_finite() && *w > 0.0)) {
                    return Err(Error::invalid("mixture weights must be positive"));
                }
                let total: f64 = weights.iter().sum();
                if (total - 1.0).abs() > 1e-12 {
                    return Err(Error::invalid(format!("mixture weights sum to {total}")));
                }
                components.iter().try_for_each(NoiseComponent::validate)?;
            }
        }
        Ok(())
    }

    fn normalizer(&self) -> f64 {
        match self {
            NoiseComponent::TruncatedGaussian {
                mean,
                stddev,
                lo,
                hi,
            } => std_normal_mass((lo - mean) / stddev, (hi - mean) / stddev),
            _ => 1.0,
        }
    }

    /// Smallest closed interval holding all the probability mass.
    pub fn support(&self) -> Interval {
        match self {
            NoiseComponent::Uniform { lo, hi } | NoiseComponent::TruncatedGaussian { lo, hi, .. } => {
                Interval::raw(*lo, *hi)
            }
            NoiseComponent::Mixture { components, .. } => components
                .iter()
                .map(NoiseComponent::support)
                .reduce(|a, b| a.hull(&b))
                .expect("validated mixture is non-empty"),
        }
    }

    /// `P(W <= t)`.
    pub fn cdf(&self, t: f64) -> f64 {
        self.cdf_impl(t, true)
    }

    /// `P(W < t)`; differs from [`cdf`](Self::cdf) only at atoms.
    pub fn cdf_left(&self, t: f64) -> f64 {
        self.cdf_impl(t, false)
    }

    fn cdf_impl(&self, t: f64, closed: bool) -> f64 {
        let v = match self {
            NoiseComponent::Uniform { lo, hi } => {
                if lo == hi {
                    let hit = if closed { t >= *lo } else { t > *lo };
                    if hit {
                        1.0
                    } else {
                        0.0
                    }
                } else if t <= *lo {
                    0.0
                } else if t >= *hi {
                    1.0
                } else {
                    (t - lo) / (hi - lo)
                }
            }
            NoiseComponent::TruncatedGaussian {
                mean,
                stddev,
                lo,
                hi,
            } => {
                if t <= *lo {
                    0.0
                } else if t >= *hi {
                    1.0
                } else {
                    std_normal_mass((lo - mean) / stddev, (t - mean) / stddev) / self.normalizer()
                }
            }
            NoiseComponent::Mixture {
                weights,
                components,
            } => weights
                .iter()
                .zip(components)
                .map(|(w, c)| w * c.cdf_impl(t, closed))
                .sum(),
        };
        v.clamp(0.0, 1.0)
    }

    /// `P(W in [lo, hi])` for a closed interval.
    pub fn prob(&self, iv: Interval) -> f64 {
        if iv.lo > iv.hi {
            return 0.0;
        }
        (self.cdf(iv.hi) - self.cdf_left(iv.lo)).clamp(0.0, 1.0)
    }

    /// Inverse-CDF sample. Truncated gaussians are inverted by bisection.
    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        match self {
            NoiseComponent::Mixture {
                weights,
                components,
            } => {
                let u: f64 = rng.random();
                let mut acc = 0.0;
                for (w, c) in weights.iter().zip(components) {
                    acc += w;
                    if u < acc {
                        return c.sample(rng);
                    }
                }
                components.last().expect("non-empty mixture").sample(rng)
            }
            _ => {
                let u: f64 = rng.random();
                self.quantile(u)
            }
        }
    }

    /// Inverse CDF for non-mixture components; bisection to 1e-12.
    pub fn quantile(&self, u: f64) -> f64 {
        let u = u.clamp(0.0, 1.0);
        match self {
            NoiseComponent::Uniform { lo, hi } => lo + u * (hi - lo),
            NoiseComponent::TruncatedGaussian {
                mean, stddev, lo, hi, ..
            } => {
                let mut a = lo.max(mean - 40.0 * stddev);
                let mut b = hi.min(mean + 40.0 * stddev);
                for _ in 0..200 {
                    if b - a <= 1e-12 {
                        break;
                    }
                    let m = 0.5 * (a + b);
                    if self.cdf(m) < u {
                        a = m;
                    } else {
                        b = m;
                    }
                }
                0.5 * (a + b)
            }
            NoiseComponent::Mixture { .. } => {
                let s = self.support();
                let (mut a, mut b) = (s.lo, s.hi);
                for _ in 0..200 {
                    if b - a <= 1e-12 {
                        break;
                    }
                    let m = 0.5 * (a + b);
                    if self.cdf(m) < u {
                        a = m;
                    } else {
                        b = m;
                    }
                }
                0.5 * (a + b)
            }
        }
    }
}

/// Independent per-component noise `w = (w_1, ..., w_n)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct NoiseModel {
    components: Vec<NoiseComponent>,
}

impl NoiseModel {
    pub fn new(components: Vec<NoiseComponent>) -> Result<Self> {
        if components.is_empty() {
            return Err(Error::invalid("noise model has no components"));
        }
        components.iter().try_for_each(NoiseComponent::validate)?;
        Ok(NoiseModel { components })
    }

    pub fn dim(&self) -> usize {
        self.components.len()
    }

    pub fn components(&self) -> &[NoiseComponent] {
        &self.components
    }

    pub fn component(&self, i: usize) -> &NoiseComponent {
        &self.components[i]
    }

    pub fn support(&self) -> Vec<Interval> {
        self.components.iter().map(NoiseComponent::support).collect()
    }

    /// `Pr(c)` for a product cell of closed intervals (ends may be infinite).
    pub fn cell_probability(&self, cell: &[Interval]) -> f64 {
        self.components
            .iter()
            .zip(cell)
            .map(|(c, &iv)| c.prob(iv))
            .product::<f64>()
            .clamp(0.0, 1.0)
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> Vec<f64> {
        self.components.iter().map(|c| c.sample(rng)).collect()
    }
}
