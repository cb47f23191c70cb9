//! Noise-domain partitions.
//!
//! For a single component with noise-free posterior `[C, D]` and target
//! `[A, B]`, the structured partitions split the noise axis into three
//! intervals each:
//!
//! * upper-bound cells `(-inf, e1) | [e1, e2] | (e2, inf)`: only the middle
//!   cell can move the posterior onto the target,
//! * lower-bound cells `(-inf, e3) | [e3, e4] | (e4, inf)`: only the middle
//!   cell keeps the posterior inside the target. When `e3 > e4` no noise
//!   value does, and the middle cell is empty.

use crate::error::{Error, Result};
use crate::geometry::Interval;

use super::NoiseModel;

/// Budget with connected posteriors: at most three cells per noise
/// component for each bound.
pub const MAX_CELLS_PER_COMPONENT: usize = 3;

/// Cut points of the optimal lower/upper partitions for one noise component.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PartitionPair {
    pub e1: f64,
    pub e2: f64,
    pub e3: f64,
    pub e4: f64,
}

impl PartitionPair {
    /// The noise range that can put the posterior on the target.
    pub fn upper_cell(&self) -> Interval {
        Interval::raw(self.e1, self.e2)
    }

    /// The noise range that keeps the posterior inside the target, if any.
    pub fn lower_cell(&self) -> Option<Interval> {
        (self.e3 <= self.e4).then(|| Interval::raw(self.e3, self.e4))
    }

    pub fn lower_is_empty(&self) -> bool {
        self.e3 > self.e4
    }

    pub fn upper_cells(&self) -> Vec<Interval> {
        vec![
            Interval::raw(f64::NEG_INFINITY, self.e1),
            self.upper_cell(),
            Interval::raw(self.e2, f64::INFINITY),
        ]
    }

    /// Lower-bound partition cells; the empty middle cell is dropped.
    pub fn lower_cells(&self) -> Vec<Interval> {
        let mut out = vec![Interval::raw(f64::NEG_INFINITY, self.e3.min(self.e4))];
        if let Some(mid) = self.lower_cell() {
            out.push(mid);
        }
        out.push(Interval::raw(self.e4.max(self.e3), f64::INFINITY));
        out
    }
}

fn check_bounded(what: &str, iv: Interval) -> Result<()> {
    if !iv.is_bounded() {
        return Err(Error::invalid(format!("{what} {iv} must be bounded")));
    }
    Ok(())
}

/// Partition for additive noise `g(x) + w`.
///
/// The case split on `W = D - C` reduces algebraically to the same four cut
/// points in every case; the "posterior wider than target" case shows up as
/// an empty lower cell.
pub fn optimal_partition_affine(postf: Interval, target: Interval) -> Result<PartitionPair> {
    check_bounded("posterior", postf)?;
    check_bounded("target", target)?;
    let (a, b, c, d) = (target.lo, target.hi, postf.lo, postf.hi);
    Ok(PartitionPair {
        e1: a - d,
        e2: b - c,
        e3: a - c,
        e4: b - d,
    })
}

/// Partition for positive multiplicative noise `g(x) * w`; all four
/// endpoints must be strictly positive.
pub fn optimal_partition_multiplicative(postf: Interval, target: Interval) -> Result<PartitionPair> {
    check_bounded("posterior", postf)?;
    check_bounded("target", target)?;
    let (a, b, c, d) = (target.lo, target.hi, postf.lo, postf.hi);
    if a <= 0.0 || c <= 0.0 {
        return Err(Error::invalid(format!(
            "multiplicative partition needs positive intervals, got posterior {postf} and target {target}"
        )));
    }
    Ok(PartitionPair {
        e1: a / d,
        e2: b / c,
        e3: a / c,
        e4: b / d,
    })
}

/// A product cell of the noise domain with its probability.
#[derive(Debug, Clone, PartialEq)]
pub struct NoiseCell {
    pub intervals: Vec<Interval>,
    pub probability: f64,
}

/// Uniform grid over each component's support hull.
///
/// Per component, the first piece is closed and the rest are half-open on
/// the left, so atoms on shared cut points are counted once and the cell
/// probabilities add up to one.
pub fn uniform_noise_grid(noise: &NoiseModel, resolution: &[usize]) -> Result<Vec<NoiseCell>> {
    if resolution.len() != noise.dim() {
        return Err(Error::invalid(format!(
            "noise resolution has {} entries for {} components",
            resolution.len(),
            noise.dim()
        )));
    }
    if resolution.contains(&0) {
        return Err(Error::invalid("noise grid resolution must be at least 1"));
    }
    let mut per_component: Vec<Vec<(Interval, f64)>> = Vec::with_capacity(noise.dim());
    for (i, (comp, &r)) in noise.components().iter().zip(resolution).enumerate() {
        let s = comp.support();
        if !s.is_bounded() {
            return Err(Error::Unsupported(format!(
                "noise component {} has unbounded support {s}; gridding needs bounded support",
                i + 1
            )));
        }
        let r = if s.width() == 0.0 { 1 } else { r };
        let step = s.width() / r as f64;
        let pieces = (0..r)
            .map(|k| {
                let lo = s.lo + step * k as f64;
                let hi = if k + 1 == r { s.hi } else { s.lo + step * (k + 1) as f64 };
                let p = if k == 0 {
                    comp.prob(Interval::raw(lo, hi))
                } else {
                    (comp.cdf(hi) - comp.cdf(lo)).clamp(0.0, 1.0)
                };
                (Interval::raw(lo, hi), p)
            })
            .collect();
        per_component.push(pieces);
    }
    let mut cells = vec![NoiseCell {
        intervals: Vec::new(),
        probability: 1.0,
    }];
    for pieces in &per_component {
        cells = cells
            .iter()
            .flat_map(|c| {
                pieces.iter().map(move |&(iv, p)| {
                    let mut intervals = c.intervals.clone();
                    intervals.push(iv);
                    NoiseCell {
                        intervals,
                        probability: c.probability * p,
                    }
                })
            })
            .collect();
    }
    Ok(cells)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::noise::NoiseComponent;
    use proptest::prelude::*;

    fn iv(lo: f64, hi: f64) -> Interval {
        Interval::new(lo, hi).unwrap()
    }

    #[test]
    fn affine_examples() {
        let p = optimal_partition_affine(iv(0.0, 2.0), iv(0.0, 1.0)).unwrap();
        assert!(p.lower_is_empty());
        assert_eq!((p.e1, p.e2), (-2.0, 1.0));

        let p = optimal_partition_affine(iv(0.0, 0.2), iv(1.0, 2.0)).unwrap();
        assert_eq!((p.e1, p.e2, p.e3, p.e4), (0.8, 2.0, 1.0, 1.8));

        let p = optimal_partition_affine(iv(0.0, 1.0), iv(0.0, 1.0)).unwrap();
        assert_eq!((p.e1, p.e2, p.e3, p.e4), (-1.0, 1.0, 0.0, 0.0));
        assert_eq!(p.lower_cell(), Some(Interval::point(0.0)));
        assert!(optimal_partition_affine(Interval::unbounded(), iv(0.0, 1.0)).is_err());
    }

    #[test]
    fn multiplicative_examples() {
        let p = optimal_partition_multiplicative(iv(1.0, 1.0), iv(0.9, 1.1)).unwrap();
        assert!((p.e1 - 0.9).abs() < 1e-15 && (p.e3 - 0.9).abs() < 1e-15);
        assert!((p.e2 - 1.1).abs() < 1e-15 && (p.e4 - 1.1).abs() < 1e-15);

        let p = optimal_partition_multiplicative(iv(0.5, 1.0), iv(1.0, 2.0)).unwrap();
        assert_eq!((p.e1, p.e2, p.e3, p.e4), (1.0, 4.0, 2.0, 2.0));

        let p = optimal_partition_multiplicative(iv(0.5, 2.0), iv(1.0, 1.5)).unwrap();
        assert_eq!((p.e3, p.e4), (2.0, 0.75));
        assert!(p.lower_is_empty());
        assert_eq!(p.lower_cells().len(), 2);

        assert!(optimal_partition_multiplicative(iv(0.0, 1.0), iv(1.0, 2.0)).is_err());
        assert!(optimal_partition_multiplicative(iv(0.5, 1.0), iv(-1.0, 2.0)).is_err());
    }

    #[test]
    fn grid_examples() {
        let u = NoiseModel::new(vec![NoiseComponent::uniform(0.0, 1.0)]).unwrap();
        let cells = uniform_noise_grid(&u, &[4]).unwrap();
        assert_eq!(cells.len(), 4);
        assert!(cells.iter().all(|c| c.probability == 0.25));

        let g = NoiseModel::new(vec![NoiseComponent::truncated_gaussian(1.0, 0.1, 0.9, 1.1)]).unwrap();
        let cells = uniform_noise_grid(&g, &[2]).unwrap();
        assert_eq!(cells[0].intervals, vec![iv(0.9, 1.0)]);
        assert_eq!(cells[1].intervals, vec![iv(1.0, 1.1)]);
        for c in &cells {
            assert!((c.probability - 0.5).abs() < 1e-12);
        }

        let m = NoiseModel::new(vec![NoiseComponent::mixture(
            vec![0.5, 0.5],
            vec![NoiseComponent::uniform(-0.05, -0.01), NoiseComponent::uniform(0.0, 0.04)],
        )])
        .unwrap();
        let cells = uniform_noise_grid(&m, &[3]).unwrap();
        assert_eq!(cells.len(), 3);
        assert_eq!(cells[0].intervals[0].lo, -0.05);
        assert_eq!(cells[2].intervals[0].hi, 0.04);
        let total: f64 = cells.iter().map(|c| c.probability).sum();
        assert!((total - 1.0).abs() < 1e-9);

        let unbounded =
            NoiseModel::new(vec![NoiseComponent::truncated_gaussian(0.0, 1.0, f64::NEG_INFINITY, f64::INFINITY)])
                .unwrap();
        assert!(matches!(uniform_noise_grid(&unbounded, &[3]), Err(Error::Unsupported(_))));
    }

    #[test]
    fn point_mass_grid_counts_the_atom_once() {
        let m = NoiseModel::new(vec![
            NoiseComponent::uniform(0.2, 0.2),
            NoiseComponent::uniform(0.0, 1.0),
        ])
        .unwrap();
        let cells = uniform_noise_grid(&m, &[5, 2]).unwrap();
        assert_eq!(cells.len(), 2);
        let total: f64 = cells.iter().map(|c| c.probability).sum();
        assert!((total - 1.0).abs() < 1e-15);
    }

    proptest! {
        #[test]
        fn grid_preserves_measure(
            r1 in 1usize..12, r2 in 1usize..12,
            m in -1.0f64..1.0, s in 0.05f64..1.0, w in 0.1f64..0.9,
        ) {
            let noise = NoiseModel::new(vec![
                NoiseComponent::truncated_gaussian(m, s, m - 2.0 * s, m + s),
                NoiseComponent::mixture(
                    vec![w, 1.0 - w],
                    vec![NoiseComponent::uniform(-1.0, -0.5), NoiseComponent::uniform(0.25, 0.5)],
                ),
            ]).unwrap();
            let cells = uniform_noise_grid(&noise, &[r1, r2]).unwrap();
            prop_assert_eq!(cells.len(), r1 * r2);
            let total: f64 = cells.iter().map(|c| c.probability).sum();
            prop_assert!((total - 1.0).abs() < 1e-9);
        }

        #[test]
        fn cell_budget_holds(c in -2.0f64..2.0, cw in 0.0f64..2.0, a in -2.0f64..2.0, aw in 0.0f64..2.0) {
            let p = optimal_partition_affine(iv(c, c + cw), iv(a, a + aw)).unwrap();
            prop_assert!(p.upper_cells().len() <= MAX_CELLS_PER_COMPONENT);
            prop_assert!(p.lower_cells().len() <= MAX_CELLS_PER_COMPONENT);
            prop_assert!(p.e1 <= p.e2);
        }
    }
}
