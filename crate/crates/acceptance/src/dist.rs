//! Scalar noise laws with closed-form CDFs, written independently of the
//! library's own noise code.

use imcabs::noise::NoiseComponent;

#[derive(Debug, Clone, PartialEq)]
pub enum Dist {
    Uniform { lo: f64, hi: f64 },
    TruncNormal { mean: f64, sd: f64, lo: f64, hi: f64 },
    Mixture(Vec<(f64, Dist)>),
}

fn phi(z: f64) -> f64 {
    0.5 * libm::erfc(-z / std::f64::consts::SQRT_2)
}

impl Dist {
    pub fn cdf(&self, t: f64) -> f64 {
        match *self {
            Dist::Uniform { lo, hi } => ((t - lo) / (hi - lo)).clamp(0.0, 1.0),
            Dist::TruncNormal { mean, sd, lo, hi } => {
                if t <= lo {
                    return 0.0;
                }
                if t >= hi {
                    return 1.0;
                }
                let (a, b) = (phi((lo - mean) / sd), phi((hi - mean) / sd));
                ((phi((t - mean) / sd) - a) / (b - a)).clamp(0.0, 1.0)
            }
            Dist::Mixture(ref parts) => parts.iter().map(|(w, d)| w * d.cdf(t)).sum(),
        }
    }

    /// Mass of `[a, b]`; every law here is atomless.
    pub fn prob(&self, a: f64, b: f64) -> f64 {
        if b < a {
            0.0
        } else {
            (self.cdf(b) - self.cdf(a)).max(0.0)
        }
    }

    pub fn support(&self) -> (f64, f64) {
        match *self {
            Dist::Uniform { lo, hi } | Dist::TruncNormal { lo, hi, .. } => (lo, hi),
            Dist::Mixture(ref parts) => parts.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(l, h), (_, d)| {
                let (a, b) = d.support();
                (l.min(a), h.max(b))
            }),
        }
    }

    pub fn to_component(&self) -> NoiseComponent {
        match *self {
            Dist::Uniform { lo, hi } => NoiseComponent::uniform(lo, hi),
            Dist::TruncNormal { mean, sd, lo, hi } => NoiseComponent::truncated_gaussian(mean, sd, lo, hi),
            Dist::Mixture(ref parts) => NoiseComponent::mixture(
                parts.iter().map(|(w, _)| *w).collect(),
                parts.iter().map(|(_, d)| d.to_component()).collect(),
            ),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn reference_values() {
        let u = Dist::Uniform { lo: -1.0, hi: 1.0 };
        assert_eq!(u.prob(0.0, 0.5), 0.25);
        assert_eq!(u.prob(-5.0, 5.0), 1.0);
        let g = Dist::TruncNormal { mean: 0.0, sd: 1.0, lo: -1.0, hi: 1.0 };
        assert!((g.cdf(0.0) - 0.5).abs() < 1e-15);
        // Phi(1) - Phi(-1) = 0.682689492137...
        let n = Dist::TruncNormal { mean: 0.0, sd: 1.0, lo: -50.0, hi: 50.0 };
        assert!((n.prob(-1.0, 1.0) - 0.682_689_492_137_085_9).abs() < 1e-12);
        let m = Dist::Mixture(vec![(0.5, Dist::Uniform { lo: -0.05, hi: -0.01 }), (0.5, Dist::Uniform { lo: 0.0, hi: 0.04 })]);
        assert!((m.prob(-0.01, 0.0)).abs() < 1e-15);
        assert!((m.cdf(-0.01) - 0.5).abs() < 1e-15);
        assert_eq!(m.support(), (-0.05, 0.04));
    }

    #[test]
    fn agrees_with_library_cdf() {
        let laws = [
            Dist::Uniform { lo: 0.8, hi: 1.2 },
            Dist::TruncNormal { mean: 1.0, sd: 0.1, lo: 0.9, hi: 1.1 },
            Dist::Mixture(vec![(0.3, Dist::Uniform { lo: 0.0, hi: 1.0 }), (0.7, Dist::TruncNormal { mean: 2.0, sd: 0.5, lo: 1.5, hi: 3.0 })]),
        ];
        for d in &laws {
            let c = d.to_component();
            // the library's erfc is good to a few 1e-11
            for k in 0..=40 {
                let t = -0.5 + 0.1 * k as f64;
                assert!((c.cdf(t) - d.cdf(t)).abs() < 1e-9, "{d:?} at {t}");
            }
        }
    }
}
