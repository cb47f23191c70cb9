//! Exhaustive search over three-cell noise partitions on a grid of cut points.

use crate::dist::Dist;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Composition {
    /// Posterior of a noise cell `[a, b]` is `[C + a, D + b]`.
    Additive,
    /// Posterior of a noise cell `[a, b]` is `[C a, D b]`; everything positive.
    Multiplicative,
}

fn post(kind: Composition, postf: (f64, f64), a: f64, b: f64) -> (f64, f64) {
    match kind {
        Composition::Additive => (postf.0 + a, postf.1 + b),
        Composition::Multiplicative => (postf.0 * a, postf.1 * b),
    }
}

/// Best lower bound (largest) and best upper bound (smallest) reachable by
/// any partition of the noise support into at most three intervals whose
/// cut points lie on a grid of spacing `step`.
pub fn best_three_cell_bounds(
    kind: Composition,
    postf: (f64, f64),
    target: (f64, f64),
    noise: &Dist,
    step: f64,
) -> (f64, f64) {
    let (lo, hi) = noise.support();
    let m = ((hi - lo) / step).ceil() as usize;
    let pts: Vec<f64> = (0..=m).map(|k| if k == m { hi } else { lo + step * k as f64 }).collect();
    let cdf: Vec<f64> = pts.iter().map(|&t| noise.cdf(t)).collect();
    // contribution of the cell [pts[a], pts[b]] to each bound
    let contrib = |a: usize, b: usize| -> (f64, f64) {
        if b <= a {
            return (0.0, 0.0);
        }
        let p = (cdf[b] - cdf[a]).max(0.0);
        let (pl, ph) = post(kind, postf, pts[a], pts[b]);
        let inside = pl >= target.0 && ph <= target.1;
        let meets = pl <= target.1 && ph >= target.0;
        (if inside { p } else { 0.0 }, if meets { p } else { 0.0 })
    };
    let mut best_lower = 0.0f64;
    let mut best_upper = 1.0f64;
    for i in 0..=m {
        let (l0, u0) = contrib(0, i);
        for j in i..=m {
            let (l1, u1) = contrib(i, j);
            let (l2, u2) = contrib(j, m);
            best_lower = best_lower.max(l0 + l1 + l2);
            best_upper = best_upper.min(u0 + u1 + u2);
        }
    }
    (best_lower, best_upper)
}
