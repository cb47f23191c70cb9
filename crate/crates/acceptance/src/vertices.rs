//! Extreme expectations by enumerating the vertices of
//! `{p : lower <= p <= upper, sum p = 1}`.

/// `None` when the polytope is empty. A vertex has every coordinate but at
/// most one at a bound, so trying each free coordinate against every
/// lower/upper assignment of the rest covers all of them.
pub fn extreme_by_vertices(values: &[f64], lower: &[f64], upper: &[f64], maximize: bool) -> Option<f64> {
    let n = values.len();
    let mut best: Option<f64> = None;
    for free in 0..n {
        for mask in 0u32..(1 << (n - 1)) {
            let mut p = vec![0.0; n];
            let mut bit = 0;
            for j in 0..n {
                if j == free {
                    continue;
                }
                p[j] = if mask >> bit & 1 == 1 { upper[j] } else { lower[j] };
                bit += 1;
            }
            let rest: f64 = p.iter().sum();
            p[free] = 1.0 - rest;
            if p[free] < lower[free] - 1e-15 || p[free] > upper[free] + 1e-15 {
                continue;
            }
            let v: f64 = p.iter().zip(values).map(|(a, b)| a * b).sum();
            best = Some(match best {
                None => v,
                Some(b) if maximize => b.max(v),
                Some(b) => b.min(v),
            });
        }
    }
    best
}
