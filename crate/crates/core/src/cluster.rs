//! Refinement-free tightening of satisfaction bounds by merging a source
//! state's successors into one box-shaped super-state.

use crate::error::{Error, Result};
use crate::geometry::{box_contains, Region, StatePartition};
use crate::imc::{BoundStrategy, Imc, PosteriorTable, SourceInfo, TableEntry, TransitionBound};
use crate::verify::{adversary_extreme_expectation, Mode, ReachAvoidSpec, VerificationResult};

/// Relative tolerance when matching cell edges against posterior hulls.
const EDGE_TOL: f64 = 1e-9;

#[derive(Debug, Clone, PartialEq)]
pub struct ClusterProposal {
    pub source: usize,
    /// Sorted member cell indices; at least two.
    pub members: Vec<usize>,
    /// Union box of the members.
    pub region: Region,
    /// Minimum lower value over members.
    pub lower: f64,
    /// Maximum upper value over members.
    pub upper: f64,
}

/// Outcome of one or more improvement passes.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct ImproveReport {
    /// Number of states improved in each pass, in order.
    pub improved_per_pass: Vec<usize>,
    /// States whose bounds changed in any pass, sorted.
    pub improved_states: Vec<usize>,
}

fn close(a: f64, b: f64) -> bool {
    (a - b).abs() <= EDGE_TOL * a.abs().max(b.abs()).max(1.0)
}

/// Index block of cells lying inside `hull` (edges within tolerance).
fn inner_block(partition: &StatePartition, hull: &Region) -> Option<Vec<(usize, usize)>> {
    let grid = partition.grid()?;
    let mut out = Vec::with_capacity(grid.resolution.len());
    for (d, (&r, &h)) in grid.resolution.iter().zip(&grid.step).enumerate() {
        let dom = partition.domain().interval(d);
        let iv = hull.interval(d);
        let a = (iv.lo.max(dom.lo) - dom.lo) / h;
        let b = (iv.hi.min(dom.hi) - dom.lo) / h;
        let lo = if close(a, a.round()) { a.round() } else { a.ceil() };
        let hi = if close(b, b.round()) { b.round() } else { b.floor() } - 1.0;
        if !(lo <= hi) || hi < 0.0 {
            return None;
        }
        out.push((lo as usize, (hi as usize).min(r - 1)));
    }
    Some(out)
}

fn block_len(block: &[(usize, usize)]) -> usize {
    block.iter().map(|(a, b)| b - a + 1).product()
}

/// Largest sub-block of `outer` whose cells all satisfy `ok`, ties broken by
/// enumeration order (lexicographic on per-dimension ranges).
fn largest_sub_block(
    partition: &StatePartition,
    outer: &[(usize, usize)],
    ok: &dyn Fn(usize) -> bool,
) -> Option<Vec<(usize, usize)>> {
    let ranges: Vec<Vec<(usize, usize)>> = outer
        .iter()
        .map(|&(a, b)| {
            let mut v = Vec::new();
            for lo in a..=b {
                for hi in lo..=b {
                    v.push((lo, hi));
                }
            }
            v
        })
        .collect();
    let mut candidates: Vec<Vec<(usize, usize)>> = vec![Vec::new()];
    for r in &ranges {
        candidates = candidates
            .into_iter()
            .flat_map(|c| {
                r.iter().map(move |&p| {
                    let mut c = c.clone();
                    c.push(p);
                    c
                })
            })
            .collect();
    }
    // stable sort keeps enumeration order among equal sizes
    candidates.sort_by_key(|b| std::cmp::Reverse(block_len(b)));
    candidates
        .into_iter()
        .take_while(|b| block_len(b) >= 2)
        .find(|b| partition.block_indices(b).into_iter().all(ok))
}

/// Chooses the cluster for state `q`.
///
/// If the hull of the posterior over the noise support lies in `X` and is
/// tiled exactly by successor cells, those cells form the cluster.
/// Otherwise the largest block of successor cells inside the hull is used.
/// `None` when no block of two or more cells qualifies.
pub fn select_cluster(
    q: usize,
    imc: &Imc,
    partition: &StatePartition,
    source: &SourceInfo,
    lower_values: &[f64],
    upper_values: &[f64],
) -> Option<ClusterProposal> {
    partition.grid()?;
    let row = imc.row(q);
    let n = partition.len();
    let is_succ = |j: usize| j < n && row.binary_search_by_key(&j, |t| t.to).is_ok_and(|k| row[k].upper > 0.0);
    if row.iter().filter(|t| t.to < n && t.upper > 0.0).count() < 2 {
        return None;
    }
    let hull = &source.reach;
    let inner = inner_block(partition, hull)?;

    let tiles_hull = box_contains(partition.domain(), hull).unwrap_or(false)
        && partition
            .block_region(&inner)
            .is_some_and(|r| {
                r.intervals()
                    .iter()
                    .zip(hull.intervals())
                    .all(|(a, b)| close(a.lo, b.lo) && close(a.hi, b.hi))
            });
    let block = if tiles_hull && partition.block_indices(&inner).into_iter().all(is_succ) {
        inner
    } else {
        largest_sub_block(partition, &inner, &is_succ)?
    };
    let members = partition.block_indices(&block);
    if members.len() < 2 {
        return None;
    }
    let region = partition.block_region(&block)?;
    let lower = members.iter().map(|&j| lower_values[j]).fold(f64::INFINITY, f64::min);
    let upper = members.iter().map(|&j| upper_values[j]).fold(f64::NEG_INFINITY, f64::max);
    Some(ClusterProposal {
        source: q,
        members,
        region,
        lower,
        upper,
    })
}

/// One-step bounds for `q` with the proposal's members merged into a
/// single successor. Returns `(lower, upper)`.
fn recompute(
    strategy: &dyn BoundStrategy,
    source: &SourceInfo,
    row: &[TransitionBound],
    proposal: &ClusterProposal,
    lower_values: &[f64],
    upper_values: &[f64],
) -> Result<(f64, f64)> {
    let b = strategy.bounds(source, &proposal.region)?;
    let mut local = Vec::with_capacity(row.len() + 1);
    let mut lo_vals = Vec::with_capacity(row.len() + 1);
    let mut hi_vals = Vec::with_capacity(row.len() + 1);
    for t in row.iter().filter(|t| proposal.members.binary_search(&t.to).is_err()) {
        local.push(TransitionBound {
            from: 0,
            to: local.len(),
            lower: t.lower,
            upper: t.upper,
        });
        lo_vals.push(lower_values[t.to]);
        hi_vals.push(upper_values[t.to]);
    }
    local.push(TransitionBound {
        from: 0,
        to: local.len(),
        lower: b.lower,
        upper: b.upper,
    });
    lo_vals.push(proposal.lower);
    hi_vals.push(proposal.upper);
    let as_soundness = |e: Error| Error::Soundness(format!("clustered row for state {}: {e}", proposal.source));
    let lo = adversary_extreme_expectation(&lo_vals, &local, Mode::Min).map_err(as_soundness)?;
    let hi = adversary_extreme_expectation(&hi_vals, &local, Mode::Max).map_err(as_soundness)?;
    Ok((lo, hi))
}

/// Runs one improvement pass over the result in place, visiting states in
/// descending order of their lower bound. Each bound is replaced only if the
/// clustered recomputation is strictly better. Returns the improved states.
pub fn cluster_improve(
    imc: &Imc,
    partition: &StatePartition,
    strategy: &dyn BoundStrategy,
    table: Option<&PosteriorTable>,
    spec: &ReachAvoidSpec,
    result: &mut VerificationResult,
) -> Result<Vec<usize>> {
    let n = partition.len();
    let mut order: Vec<usize> = (0..n)
        .filter(|&q| !imc.has_label(q, spec.goal) && !spec.avoid.iter().any(|&l| imc.has_label(q, l)))
        .collect();
    order.sort_by(|&a, &b| result.lower[b].total_cmp(&result.lower[a]).then(a.cmp(&b)));

    let finite = result.previous.is_some();
    let mut improved = Vec::new();
    for q in order {
        let postf = match table.and_then(|t| t.entry(q)) {
            Some(TableEntry { valid: false, .. }) => continue,
            Some(e) => Some(e.region.clone()),
            None => None,
        };
        let source = strategy.prepare(partition.cell(q), postf)?;
        // finite horizons read the frozen k-1 iterate; unbounded ones read
        // the live values so later states see earlier improvements
        let (lv, uv): (Vec<f64>, Vec<f64>) = if finite {
            let (l, u) = result.successor_values();
            (l.to_vec(), u.to_vec())
        } else {
            (result.lower.clone(), result.upper.clone())
        };
        let Some(proposal) = select_cluster(q, imc, partition, &source, &lv, &uv) else {
            continue;
        };
        let (lo, hi) = recompute(strategy, &source, imc.row(q), &proposal, &lv, &uv)?;
        let mut changed = false;
        if lo > result.lower[q] {
            if lo > result.upper[q] + 1e-9 {
                return Err(Error::Soundness(format!(
                    "state {q}: clustered lower bound {lo} exceeds upper bound {}",
                    result.upper[q]
                )));
            }
            result.lower[q] = lo.min(result.upper[q]);
            changed = true;
        }
        if hi < result.upper[q] {
            result.upper[q] = hi.max(result.lower[q]);
            changed = true;
        }
        if changed {
            improved.push(q);
        }
    }
    result.reclassify();
    improved.sort_unstable();
    Ok(improved)
}

/// Repeats [`cluster_improve`] up to `passes` times, stopping early after a
/// pass with no improvement.
pub fn cluster_passes(
    imc: &Imc,
    partition: &StatePartition,
    strategy: &dyn BoundStrategy,
    table: Option<&PosteriorTable>,
    spec: &ReachAvoidSpec,
    result: &mut VerificationResult,
    passes: usize,
) -> Result<ImproveReport> {
    let mut report = ImproveReport::default();
    for _ in 0..passes {
        let improved = cluster_improve(imc, partition, strategy, table, spec, result)?;
        report.improved_per_pass.push(improved.len());
        let stop = improved.is_empty();
        report.improved_states.extend(improved);
        if stop {
            break;
        }
    }
    report.improved_states.sort_unstable();
    report.improved_states.dedup();
    Ok(report)
}
