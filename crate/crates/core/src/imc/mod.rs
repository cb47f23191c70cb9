//! Interval Markov chain abstraction.

mod io;
mod strategy;
mod table;

use std::fmt;
use std::str::FromStr;

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::geometry::{box_intersects, Interval, Region, StatePartition};

pub use io::{read_imc, read_labels, write_imc, write_labels};
pub use strategy::{
    transition_bounds_general, transition_bounds_structured, AffineBounds, BoundStrategy,
    GridBounds, MultiplicativeBounds, PairBounds, SourceInfo, StrategyContext, StrategyFactory,
    StrategyRegistry,
};
pub use table::{PosteriorTable, TableEntry};

pub(crate) use strategy::expand;

/// Tolerance for the per-row `sum lower <= 1 <= sum upper` check.
pub const ROW_TOLERANCE: f64 = 1e-9;

/// One stored entry of the sparse transition-bound matrices.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TransitionBound {
    pub from: usize,
    pub to: usize,
    pub lower: f64,
    pub upper: f64,
}

/// Atomic propositions attached to abstract states.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Label {
    Goal,
    Obstacle,
    Unsafe,
}

impl Label {
    pub fn as_str(self) -> &'static str {
        match self {
            Label::Goal => "goal",
            Label::Obstacle => "obstacle",
            Label::Unsafe => "unsafe",
        }
    }
}

impl fmt::Display for Label {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Label {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim() {
            "goal" => Ok(Label::Goal),
            "obstacle" => Ok(Label::Obstacle),
            "unsafe" => Ok(Label::Unsafe),
            other => Err(Error::Input(format!("unknown label `{other}`"))),
        }
    }
}

/// Sorted, duplicate-free set of labels.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct LabelSet(Vec<Label>);

impl LabelSet {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn of(labels: &[Label]) -> Self {
        let mut s = Self::new();
        for &l in labels {
            s.insert(l);
        }
        s
    }

    pub fn insert(&mut self, l: Label) {
        if let Err(pos) = self.0.binary_search(&l) {
            self.0.insert(pos, l);
        }
    }

    pub fn contains(&self, l: Label) -> bool {
        self.0.binary_search(&l).is_ok()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = Label> + '_ {
        self.0.iter().copied()
    }
}

/// Goal and obstacle boxes to be mapped onto partition cells.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct LabelRegions {
    pub goal: Vec<Region>,
    pub obstacles: Vec<Region>,
}

/// Finite IMC `(Q, P_lower, P_upper, labels)` with sparse rows.
#[derive(Debug, Clone, PartialEq)]
pub struct Imc {
    rows: Vec<Vec<TransitionBound>>,
    labels: Vec<LabelSet>,
}

impl Imc {
    /// Validates bounds, ordering and per-row feasibility.
    pub fn new(rows: Vec<Vec<TransitionBound>>, labels: Vec<LabelSet>) -> Result<Self> {
        if rows.len() != labels.len() {
            return Err(Error::InvalidModel(format!(
                "{} rows but {} label sets",
                rows.len(),
                labels.len()
            )));
        }
        let n = rows.len();
        for (i, row) in rows.iter().enumerate() {
            let mut prev = None;
            for t in row {
                if t.from != i || t.to >= n {
                    return Err(Error::InvalidModel(format!(
                        "row {i} holds transition {} -> {}",
                        t.from, t.to
                    )));
                }
                if prev.is_some_and(|p| p >= t.to) {
                    return Err(Error::InvalidModel(format!(
                        "row {i} is not sorted by target or has duplicates"
                    )));
                }
                prev = Some(t.to);
                if !(0.0..=1.0).contains(&t.lower) || !(0.0..=1.0).contains(&t.upper) || t.lower > t.upper {
                    return Err(Error::InvalidModel(format!(
                        "transition {i} -> {} has bounds [{}, {}]",
                        t.to, t.lower, t.upper
                    )));
                }
            }
            check_row(i, row).map_err(|e| match e {
                Error::Soundness(m) => Error::InvalidModel(m),
                other => other,
            })?;
        }
        Ok(Imc { rows, labels })
    }

    pub fn state_count(&self) -> usize {
        self.rows.len()
    }

    pub fn row(&self, q: usize) -> &[TransitionBound] {
        &self.rows[q]
    }

    pub fn rows(&self) -> &[Vec<TransitionBound>] {
        &self.rows
    }

    pub fn labels(&self, q: usize) -> &LabelSet {
        &self.labels[q]
    }

    pub fn label_sets(&self) -> &[LabelSet] {
        &self.labels
    }

    pub fn has_label(&self, q: usize, l: Label) -> bool {
        self.labels[q].contains(l)
    }

    pub fn states_with(&self, l: Label) -> Vec<usize> {
        (0..self.state_count()).filter(|&q| self.has_label(q, l)).collect()
    }

    pub fn transition(&self, from: usize, to: usize) -> Option<&TransitionBound> {
        let row = &self.rows[from];
        row.binary_search_by_key(&to, |t| t.to).ok().map(|i| &row[i])
    }

    /// Number of stored `(q, q')` pairs.
    pub fn transition_count(&self) -> usize {
        self.rows.iter().map(Vec::len).sum()
    }
}

fn check_row(i: usize, row: &[TransitionBound]) -> Result<()> {
    let lo: f64 = row.iter().map(|t| t.lower).sum();
    let hi: f64 = row.iter().map(|t| t.upper).sum();
    if lo > 1.0 + ROW_TOLERANCE || hi < 1.0 - ROW_TOLERANCE {
        return Err(Error::Soundness(format!(
            "row {i} violates sum(lower) <= 1 <= sum(upper): sum(lower) = {lo}, sum(upper) = {hi}"
        )));
    }
    Ok(())
}

/// Bounds on escaping the safe set from `q`: the complement of the bounds
/// to `X` itself.
pub fn unsafe_transitions(
    strategy: &dyn BoundStrategy,
    source: &SourceInfo,
    safe: &Region,
) -> Result<(f64, f64)> {
    let x = strategy.bounds(source, safe)?;
    Ok(((1.0 - x.upper).clamp(0.0, 1.0), (1.0 - x.lower).clamp(0.0, 1.0)))
}

/// Slack for grid edges that differ from label edges only by rounding.
fn label_tol(c: &Interval, r: &Interval) -> f64 {
    1e-9 * c.lo.abs().max(c.hi.abs()).max(r.lo.abs()).max(r.hi.abs()).max(1.0)
}

/// Maps goal/obstacle boxes onto cells. A cell carries a label iff its
/// interior meets the label box; a cell that meets it without lying inside
/// it is a misalignment error.
pub fn assign_labels(partition: &StatePartition, regions: &LabelRegions) -> Result<Vec<LabelSet>> {
    let mut labels = vec![LabelSet::new(); partition.state_count()];
    let tagged = regions
        .goal
        .iter()
        .map(|r| (Label::Goal, r))
        .chain(regions.obstacles.iter().map(|r| (Label::Obstacle, r)));
    for (label, region) in tagged {
        if region.dim() != partition.dim() {
            return Err(Error::Specification(format!(
                "{label} box {region} has dimension {}, domain has {}",
                region.dim(),
                partition.dim()
            )));
        }
        if !region.is_full_dimensional() {
            return Err(Error::Specification(format!("{label} box {region} is degenerate")));
        }
        for (i, cell) in partition.cells().iter().enumerate() {
            let pairs = || cell.intervals().iter().zip(region.intervals());
            let meets = pairs().all(|(c, r)| c.hi.min(r.hi) - c.lo.max(r.lo) > label_tol(c, r));
            if !meets {
                continue;
            }
            let inside = pairs().all(|(c, r)| {
                let tol = label_tol(c, r);
                c.lo >= r.lo - tol && c.hi <= r.hi + tol
            });
            if !inside {
                return Err(Error::Specification(format!(
                    "{label} box {region} is not aligned with cell {i} ({cell})"
                )));
            }
            labels[i].insert(label);
        }
    }
    for (i, l) in labels.iter().enumerate() {
        if l.contains(Label::Goal) && l.contains(Label::Obstacle) {
            return Err(Error::Specification(format!(
                "cell {i} ({}) is both goal and obstacle",
                partition.cell(i)
            )));
        }
    }
    labels[partition.unsafe_index()].insert(Label::Unsafe);
    Ok(labels)
}

/// Computes the abstraction's row for source cell `i`.
fn build_row(
    partition: &StatePartition,
    strategy: &dyn BoundStrategy,
    table: Option<&PosteriorTable>,
    i: usize,
) -> Result<Vec<TransitionBound>> {
    let n = partition.len();
    let cell = partition.cell(i);
    let postf = match table {
        Some(t) => match t.entry(i) {
            Some(TableEntry { valid: false, .. }) => return Ok(vacuous_row(i, n)),
            Some(e) => Some(e.region.clone()),
            None => return Err(Error::Input(format!("posterior table has no entry for state {i}"))),
        },
        None => None,
    };
    let source = strategy.prepare(cell, postf)?;

    let candidates: Vec<usize> = match partition.grid() {
        Some(grid) => {
            let padded = expand(&source.reach, &grid.step);
            match partition.cell_range(&padded) {
                Some(block) => partition.block_indices(&block),
                None => Vec::new(),
            }
        }
        None => {
            let mut v = Vec::new();
            for (j, c) in partition.cells().iter().enumerate() {
                if box_intersects(&source.reach, c)? {
                    v.push(j);
                }
            }
            v
        }
    };

    let mut row = Vec::with_capacity(candidates.len() + 1);
    for j in candidates {
        let b = strategy.bounds(&source, partition.cell(j))?;
        if b.upper > 0.0 {
            row.push(TransitionBound {
                from: i,
                to: j,
                lower: b.lower,
                upper: b.upper,
            });
        }
    }
    row.sort_by_key(|t| t.to);
    let (lo, hi) = unsafe_transitions(strategy, &source, partition.domain())?;
    row.push(TransitionBound {
        from: i,
        to: partition.unsafe_index(),
        lower: lo,
        upper: hi,
    });
    check_row(i, &row)?;
    Ok(row)
}

/// Every successor allowed with bounds `[0, 1]`.
fn vacuous_row(i: usize, n: usize) -> Vec<TransitionBound> {
    (0..=n)
        .map(|j| TransitionBound {
            from: i,
            to: j,
            lower: 0.0,
            upper: 1.0,
        })
        .collect()
}

/// Builds the full abstraction over a partition. Rows are computed in
/// parallel and stored sorted by target index.
pub fn build_imc(
    partition: &StatePartition,
    strategy: &dyn BoundStrategy,
    labels: &LabelRegions,
    table: Option<&PosteriorTable>,
) -> Result<Imc> {
    if let Some(t) = table {
        t.check_covers(partition)?;
    }
    let label_sets = assign_labels(partition, labels)?;
    let n = partition.len();
    let mut rows = (0..n)
        .into_par_iter()
        .map(|i| build_row(partition, strategy, table, i))
        .collect::<Result<Vec<_>>>()?;
    rows.push(vec![TransitionBound {
        from: n,
        to: n,
        lower: 1.0,
        upper: 1.0,
    }]);
    Ok(Imc {
        rows,
        labels: label_sets,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dynamics::{DynamicsModel, NoiseStructure};
    use crate::geometry::partition_domain;
    use crate::noise::{NoiseComponent, NoiseModel};

    fn region(b: &[(f64, f64)]) -> Region {
        Region::from_bounds(
            &b.iter().map(|p| p.0).collect::<Vec<_>>(),
            &b.iter().map(|p| p.1).collect::<Vec<_>>(),
        )
        .unwrap()
    }

    fn affine(exprs: &[&str], noise: Vec<NoiseComponent>) -> Box<dyn BoundStrategy> {
        let ctx = StrategyContext {
            model: DynamicsModel::from_strings(exprs, NoiseStructure::Additive).unwrap(),
            noise: NoiseModel::new(noise).unwrap(),
            noise_resolution: None,
        };
        StrategyRegistry::with_defaults().create("affine", &ctx).unwrap()
    }

    /// Exact `min/max over x in q` of `Pr(x + w in target)` for uniform
    /// `w`, by dense sampling of `x`.
    fn brute_identity(q: (f64, f64), target: (f64, f64), w: (f64, f64)) -> (f64, f64) {
        let mut lo = f64::INFINITY;
        let mut hi = f64::NEG_INFINITY;
        for k in 0..=1000 {
            let x = q.0 + (q.1 - q.0) * k as f64 / 1000.0;
            let a = (target.0 - x).max(w.0);
            let b = (target.1 - x).min(w.1);
            let p = ((b - a) / (w.1 - w.0)).max(0.0);
            lo = lo.min(p);
            hi = hi.max(p);
        }
        (lo, hi)
    }

    #[test]
    fn single_cell_self_loop() {
        let s = affine(&["0.5 * x1"], vec![NoiseComponent::uniform(0.0, 0.1)]);
        let p = partition_domain(&region(&[(0.0, 1.0)]), &[1]).unwrap();
        let imc = build_imc(&p, s.as_ref(), &LabelRegions::default(), None).unwrap();
        assert_eq!(imc.state_count(), 2);
        let t = imc.transition(0, 0).unwrap();
        assert_eq!((t.lower, t.upper), (1.0, 1.0));
        let u = imc.transition(0, 1).unwrap();
        assert_eq!((u.lower, u.upper), (0.0, 0.0));
        let uu = imc.transition(1, 1).unwrap();
        assert_eq!((uu.lower, uu.upper), (1.0, 1.0));
        assert!(imc.has_label(1, Label::Unsafe));
    }

    #[test]
    fn two_cell_identity_matches_brute_force() {
        let w = (-0.25, 0.25);
        let s = affine(&["x1"], vec![NoiseComponent::uniform(w.0, w.1)]);
        let p = partition_domain(&region(&[(0.0, 1.0)]), &[2]).unwrap();
        let imc = build_imc(&p, s.as_ref(), &LabelRegions::default(), None).unwrap();
        assert_eq!(imc.state_count(), 3);
        for i in 0..2 {
            let q = p.cell(i).interval(0);
            for j in 0..2 {
                let t = p.cell(j).interval(0);
                let (lo, hi) = brute_identity((q.lo, q.hi), (t.lo, t.hi), w);
                let tb = imc.transition(i, j).unwrap();
                assert!(tb.lower <= lo + 1e-9 && hi <= tb.upper + 1e-9);
            }
            // escape mass: 1 - Pr(x + w in [0, 1])
            let (lo, hi) = brute_identity((q.lo, q.hi), (0.0, 1.0), w);
            let u = imc.transition(i, 2).unwrap();
            assert!(u.lower <= 1.0 - hi + 1e-9 && 1.0 - lo <= u.upper + 1e-9);
        }
    }

    #[test]
    fn unsafe_examples() {
        let s = affine(&["x1"], vec![NoiseComponent::uniform(-0.1, 0.1)]);
        let inner = s.prepare(&region(&[(0.4, 0.6)]), None).unwrap();
        assert_eq!(unsafe_transitions(s.as_ref(), &inner, &region(&[(0.0, 1.0)])).unwrap(), (0.0, 0.0));
        let far = s.prepare(&region(&[(5.0, 6.0)]), None).unwrap();
        assert_eq!(unsafe_transitions(s.as_ref(), &far, &region(&[(0.0, 1.0)])).unwrap(), (1.0, 1.0));
    }

    #[test]
    fn labels_must_align() {
        let p = partition_domain(&region(&[(0.0, 1.0), (0.0, 1.0)]), &[4, 4]).unwrap();
        let ok = LabelRegions {
            goal: vec![region(&[(0.0, 0.5), (0.0, 0.25)])],
            obstacles: vec![region(&[(0.75, 1.0), (0.75, 1.0)])],
        };
        let labels = assign_labels(&p, &ok).unwrap();
        let goals: Vec<usize> = (0..16).filter(|&i| labels[i].contains(Label::Goal)).collect();
        assert_eq!(goals, vec![0, 4]);
        assert!(labels[15].contains(Label::Obstacle));
        assert!(labels[16].contains(Label::Unsafe));

        let bad = LabelRegions {
            goal: vec![region(&[(0.0, 0.3), (0.0, 0.25)])],
            obstacles: vec![],
        };
        assert!(matches!(assign_labels(&p, &bad), Err(Error::Specification(_))));

        let clash = LabelRegions {
            goal: vec![region(&[(0.0, 0.25), (0.0, 0.25)])],
            obstacles: vec![region(&[(0.0, 0.5), (0.0, 0.5)])],
        };
        assert!(matches!(assign_labels(&p, &clash), Err(Error::Specification(_))));
    }

    #[test]
    fn label_edges_tolerate_rounding() {
        // 0.25 + 6 * 0.1 rounds to 0.8500000000000001
        let p = partition_domain(&region(&[(0.25, 2.25)]), &[20]).unwrap();
        let regions = LabelRegions {
            goal: vec![],
            obstacles: vec![region(&[(0.85, 1.25)])],
        };
        let labels = assign_labels(&p, &regions).unwrap();
        let hit: Vec<usize> = (0..20).filter(|&i| labels[i].contains(Label::Obstacle)).collect();
        assert_eq!(hit, vec![6, 7, 8, 9]);
    }

    #[test]
    fn rows_are_sorted_and_valid() {
        let s = affine(
            &["0.9 * x1 + 0.1 * x2", "0.2 * x1 + 0.7 * x2"],
            vec![NoiseComponent::uniform(-0.2, 0.2), NoiseComponent::uniform(-0.1, 0.1)],
        );
        let p = partition_domain(&region(&[(-1.0, 1.0), (-1.0, 1.0)]), &[6, 5]).unwrap();
        let imc = build_imc(&p, s.as_ref(), &LabelRegions::default(), None).unwrap();
        for (i, row) in imc.rows().iter().enumerate() {
            assert!(row.windows(2).all(|w| w[0].to < w[1].to));
            assert_eq!(row.last().unwrap().to, p.unsafe_index());
            assert!(row.iter().all(|t| t.from == i && t.lower <= t.upper));
        }
        // the rebuilt, validated IMC is identical
        let again = Imc::new(imc.rows().to_vec(), imc.label_sets().to_vec()).unwrap();
        assert_eq!(again, imc);
    }

    #[test]
    fn pruning_matches_full_scan() {
        let s = affine(&["0.8 * x1 + 0.3"], vec![NoiseComponent::uniform(-0.3, 0.3)]);
        let dom = region(&[(-2.0, 2.0)]);
        let grid = partition_domain(&dom, &[20]).unwrap();
        let loose = StatePartition::from_cells(dom, grid.cells().to_vec()).unwrap();
        let a = build_imc(&grid, s.as_ref(), &LabelRegions::default(), None).unwrap();
        let b = build_imc(&loose, s.as_ref(), &LabelRegions::default(), None).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn infeasible_row_is_rejected() {
        let row = vec![TransitionBound {
            from: 0,
            to: 0,
            lower: 0.2,
            upper: 0.5,
        }];
        assert!(matches!(
            Imc::new(vec![row], vec![LabelSet::new()]),
            Err(Error::InvalidModel(_))
        ));
        assert!(check_row(0, &[TransitionBound { from: 0, to: 0, lower: 0.2, upper: 0.5 }])
            .unwrap_err()
            .is_soundness());
    }
}
