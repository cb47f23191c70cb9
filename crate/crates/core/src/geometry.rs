//! Closed intervals, axis-aligned regions and uniform state-space grids.
//!
//! All sets here are closed. Two regions that only share a face are reported
//! as intersecting, which keeps upper transition bounds conservative, and
//! containment is closed inclusion.

use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// A closed real interval `[lo, hi]`. Either end may be infinite.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Interval {
    pub lo: f64,
    pub hi: f64,
}

impl Interval {
    pub fn new(lo: f64, hi: f64) -> Result<Self> {
        if lo.is_nan() || hi.is_nan() || lo > hi {
            return Err(Error::invalid(format!("malformed interval [{lo}, {hi}]")));
        }
        Ok(Interval { lo, hi })
    }

    /// Builds an interval without validation. Callers guarantee `lo <= hi`.
    pub(crate) const fn raw(lo: f64, hi: f64) -> Self {
        Interval { lo, hi }
    }

    pub const fn point(v: f64) -> Self {
        Interval { lo: v, hi: v }
    }

    pub const fn unbounded() -> Self {
        Interval {
            lo: f64::NEG_INFINITY,
            hi: f64::INFINITY,
        }
    }

    pub fn width(&self) -> f64 {
        self.hi - self.lo
    }

    pub fn mid(&self) -> f64 {
        0.5 * (self.lo + self.hi)
    }

    pub fn is_bounded(&self) -> bool {
        self.lo.is_finite() && self.hi.is_finite()
    }

    pub fn contains_point(&self, v: f64) -> bool {
        self.lo <= v && v <= self.hi
    }

    pub fn contains(&self, inner: &Interval) -> bool {
        self.lo <= inner.lo && inner.hi <= self.hi
    }

    pub fn intersects(&self, other: &Interval) -> bool {
        self.lo <= other.hi && other.lo <= self.hi
    }

    /// True when the open interiors overlap.
    pub fn overlaps_interior(&self, other: &Interval) -> bool {
        self.lo < other.hi && other.lo < self.hi
    }

    pub fn intersection(&self, other: &Interval) -> Option<Interval> {
        let lo = self.lo.max(other.lo);
        let hi = self.hi.min(other.hi);
        (lo <= hi).then_some(Interval { lo, hi })
    }

    pub fn hull(&self, other: &Interval) -> Interval {
        Interval {
            lo: self.lo.min(other.lo),
            hi: self.hi.max(other.hi),
        }
    }
}

impl fmt::Display for Interval {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "[{}, {}]", self.lo, self.hi)
    }
}

/// An axis-aligned box in `R^n`, one closed interval per dimension.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Region {
    dims: Vec<Interval>,
}

impl Region {
    pub fn new(dims: Vec<Interval>) -> Result<Self> {
        if dims.is_empty() {
            return Err(Error::invalid("region needs at least one dimension"));
        }
        for d in &dims {
            Interval::new(d.lo, d.hi)?;
        }
        Ok(Region { dims })
    }

    pub fn from_bounds(lo: &[f64], hi: &[f64]) -> Result<Self> {
        if lo.len() != hi.len() {
            return Err(Error::invalid(format!(
                "bound vectors differ in length ({} vs {})",
                lo.len(),
                hi.len()
            )));
        }
        let dims = lo
            .iter()
            .zip(hi)
            .map(|(&l, &h)| Interval::new(l, h))
            .collect::<Result<Vec<_>>>()?;
        Region::new(dims)
    }

    pub(crate) fn from_intervals_unchecked(dims: Vec<Interval>) -> Self {
        Region { dims }
    }

    pub fn dim(&self) -> usize {
        self.dims.len()
    }

    pub fn intervals(&self) -> &[Interval] {
        &self.dims
    }

    pub fn interval(&self, i: usize) -> Interval {
        self.dims[i]
    }

    pub fn lo(&self) -> Vec<f64> {
        self.dims.iter().map(|d| d.lo).collect()
    }

    pub fn hi(&self) -> Vec<f64> {
        self.dims.iter().map(|d| d.hi).collect()
    }

    pub fn center(&self) -> Vec<f64> {
        self.dims.iter().map(Interval::mid).collect()
    }

    pub fn volume(&self) -> f64 {
        self.dims.iter().map(Interval::width).product()
    }

    /// Every dimension has strictly positive width.
    pub fn is_full_dimensional(&self) -> bool {
        self.dims.iter().all(|d| d.width() > 0.0)
    }

    pub fn contains_point(&self, x: &[f64]) -> bool {
        x.len() == self.dim() && self.dims.iter().zip(x).all(|(d, &v)| d.contains_point(v))
    }

    pub fn hull(&self, other: &Region) -> Result<Region> {
        check_dims(self, other)?;
        Ok(Region {
            dims: self
                .dims
                .iter()
                .zip(&other.dims)
                .map(|(a, b)| a.hull(b))
                .collect(),
        })
    }

    pub fn intersection(&self, other: &Region) -> Result<Option<Region>> {
        check_dims(self, other)?;
        let dims: Option<Vec<_>> = self
            .dims
            .iter()
            .zip(&other.dims)
            .map(|(a, b)| a.intersection(b))
            .collect();
        Ok(dims.map(|dims| Region { dims }))
    }
}

impl fmt::Display for Region {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for (i, d) in self.dims.iter().enumerate() {
            if i > 0 {
                f.write_str(" x ")?;
            }
            write!(f, "{d}")?;
        }
        Ok(())
    }
}

fn check_dims(a: &Region, b: &Region) -> Result<()> {
    if a.dim() != b.dim() {
        return Err(Error::invalid(format!(
            "dimension mismatch: {} vs {}",
            a.dim(),
            b.dim()
        )));
    }
    Ok(())
}

/// Closed containment: every component of `inner` lies within `outer`.
pub fn box_contains(outer: &Region, inner: &Region) -> Result<bool> {
    check_dims(outer, inner)?;
    Ok(outer
        .dims
        .iter()
        .zip(&inner.dims)
        .all(|(o, i)| o.contains(i)))
}

/// Closed intersection test; touching faces count.
pub fn box_intersects(a: &Region, b: &Region) -> Result<bool> {
    check_dims(a, b)?;
    Ok(a.dims.iter().zip(&b.dims).all(|(x, y)| x.intersects(y)))
}

/// Uniform grid metadata kept alongside a partition built by [`partition_domain`].
#[derive(Debug, Clone, PartialEq)]
pub struct Grid {
    pub resolution: Vec<usize>,
    pub step: Vec<f64>,
}

/// A finite partition `Q_X` of the safe domain `X`, plus the unsafe sink state.
///
/// Cells are indexed `0..cells.len()`; the unsafe state takes index
/// `cells.len()`.
#[derive(Debug, Clone, PartialEq)]
pub struct StatePartition {
    domain: Region,
    cells: Vec<Region>,
    grid: Option<Grid>,
}

impl StatePartition {
    /// Accepts an externally built partition. Cells must lie inside the
    /// domain and their volumes must add up to the domain volume.
    pub fn from_cells(domain: Region, cells: Vec<Region>) -> Result<Self> {
        if cells.is_empty() {
            return Err(Error::invalid("partition has no cells"));
        }
        for (i, c) in cells.iter().enumerate() {
            if !box_contains(&domain, c)? {
                return Err(Error::invalid(format!("cell {i} ({c}) leaves the domain")));
            }
        }
        let total: f64 = cells.iter().map(Region::volume).sum();
        let vol = domain.volume();
        if (total - vol).abs() > 1e-9 * vol.abs().max(1.0) {
            return Err(Error::invalid(format!(
                "cell volumes sum to {total}, domain volume is {vol}"
            )));
        }
        Ok(StatePartition {
            domain,
            cells,
            grid: None,
        })
    }

    pub fn domain(&self) -> &Region {
        &self.domain
    }

    pub fn cells(&self) -> &[Region] {
        &self.cells
    }

    pub fn cell(&self, i: usize) -> &Region {
        &self.cells[i]
    }

    pub fn len(&self) -> usize {
        self.cells.len()
    }

    pub fn is_empty(&self) -> bool {
        self.cells.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.domain.dim()
    }

    pub fn unsafe_index(&self) -> usize {
        self.cells.len()
    }

    /// Total number of IMC states, including the unsafe sink.
    pub fn state_count(&self) -> usize {
        self.cells.len() + 1
    }

    pub fn grid(&self) -> Option<&Grid> {
        self.grid.as_ref()
    }

    /// Row-major flat index of a grid multi-index (last dimension fastest).
    pub fn flat_index(&self, multi: &[usize]) -> Option<usize> {
        let grid = self.grid.as_ref()?;
        let mut idx = 0;
        for (&m, &r) in multi.iter().zip(&grid.resolution) {
            if m >= r {
                return None;
            }
            idx = idx * r + m;
        }
        Some(idx)
    }

    pub fn multi_index(&self, mut flat: usize) -> Option<Vec<usize>> {
        let grid = self.grid.as_ref()?;
        let mut out = vec![0; grid.resolution.len()];
        for (slot, &r) in out.iter_mut().zip(&grid.resolution).rev() {
            *slot = flat % r;
            flat /= r;
        }
        Some(out)
    }

    /// Inclusive index range, per dimension, of grid cells whose interior can
    /// meet `region`. `None` for non-grid partitions or when `region` misses
    /// the domain entirely.
    pub fn cell_range(&self, region: &Region) -> Option<Vec<(usize, usize)>> {
        let grid = self.grid.as_ref()?;
        let mut out = Vec::with_capacity(grid.resolution.len());
        for (d, (&r, &h)) in grid.resolution.iter().zip(&grid.step).enumerate() {
            let dom = self.domain.interval(d);
            let iv = region.interval(d);
            if iv.hi < dom.lo || iv.lo > dom.hi {
                return None;
            }
            let lo = ((iv.lo - dom.lo) / h).floor().max(0.0);
            let hi = ((iv.hi - dom.lo) / h).ceil() - 1.0;
            let lo = (lo as usize).min(r - 1);
            let hi = if hi < 0.0 { 0 } else { (hi as usize).min(r - 1) };
            out.push((lo, hi.max(lo)));
        }
        Some(out)
    }

    /// Flat indices of all cells in an inclusive per-dimension index block.
    pub fn block_indices(&self, block: &[(usize, usize)]) -> Vec<usize> {
        let mut out = Vec::new();
        let mut cursor: Vec<usize> = block.iter().map(|b| b.0).collect();
        loop {
            if let Some(i) = self.flat_index(&cursor) {
                out.push(i);
            }
            let mut d = block.len();
            loop {
                if d == 0 {
                    return out;
                }
                d -= 1;
                if cursor[d] < block[d].1 {
                    cursor[d] += 1;
                    break;
                }
                cursor[d] = block[d].0;
            }
        }
    }

    /// The union box of an index block.
    pub fn block_region(&self, block: &[(usize, usize)]) -> Option<Region> {
        let grid = self.grid.as_ref()?;
        let dims = block
            .iter()
            .enumerate()
            .map(|(d, &(lo, hi))| {
                let dom = self.domain.interval(d);
                Interval::raw(
                    grid_coord(dom, grid.step[d], grid.resolution[d], lo),
                    grid_coord(dom, grid.step[d], grid.resolution[d], hi + 1),
                )
            })
            .collect();
        Some(Region::from_intervals_unchecked(dims))
    }
}

fn grid_coord(dom: Interval, step: f64, res: usize, k: usize) -> f64 {
    if k == res {
        dom.hi
    } else {
        dom.lo + step * k as f64
    }
}

/// Splits `domain` into a uniform grid with `resolution[d]` cells along
/// dimension `d`. Cells are ordered row-major (last dimension fastest).
pub fn partition_domain(domain: &Region, resolution: &[usize]) -> Result<StatePartition> {
    if resolution.len() != domain.dim() {
        return Err(Error::invalid(format!(
            "resolution has {} entries for a {}-dimensional domain",
            resolution.len(),
            domain.dim()
        )));
    }
    if resolution.contains(&0) {
        return Err(Error::invalid("grid resolution must be at least 1"));
    }
    if !domain.is_full_dimensional() || !domain.intervals().iter().all(Interval::is_bounded) {
        return Err(Error::invalid(format!("degenerate domain {domain}")));
    }
    let step: Vec<f64> = domain
        .intervals()
        .iter()
        .zip(resolution)
        .map(|(d, &r)| d.width() / r as f64)
        .collect();
    let total: usize = resolution.iter().product();
    let mut cells = Vec::with_capacity(total);
    let mut multi = vec![0usize; resolution.len()];
    for _ in 0..total {
        let dims = multi
            .iter()
            .enumerate()
            .map(|(d, &k)| {
                let dom = domain.interval(d);
                Interval::raw(
                    grid_coord(dom, step[d], resolution[d], k),
                    grid_coord(dom, step[d], resolution[d], k + 1),
                )
            })
            .collect();
        cells.push(Region::from_intervals_unchecked(dims));
        for d in (0..multi.len()).rev() {
            multi[d] += 1;
            if multi[d] < resolution[d] {
                break;
            }
            multi[d] = 0;
        }
    }
    Ok(StatePartition {
        domain: domain.clone(),
        cells,
        grid: Some(Grid {
            resolution: resolution.to_vec(),
            step,
        }),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn r(b: &[(f64, f64)]) -> Region {
        Region::new(b.iter().map(|&(l, h)| Interval::new(l, h).unwrap()).collect()).unwrap()
    }

    #[test]
    fn single_cell_partition_is_the_domain() {
        let dom = r(&[(0.0, 1.0), (0.0, 1.0)]);
        let p = partition_domain(&dom, &[1, 1]).unwrap();
        assert_eq!(p.len(), 1);
        assert_eq!(p.cell(0), &dom);
        assert_eq!(p.unsafe_index(), 1);
    }

    #[test]
    fn two_by_two_grid_has_half_cells() {
        let dom = r(&[(0.0, 1.0), (0.0, 1.0)]);
        let p = partition_domain(&dom, &[2, 2]).unwrap();
        assert_eq!(p.len(), 4);
        for c in p.cells() {
            for d in c.intervals() {
                assert_eq!(d.width(), 0.5);
            }
        }
        // row-major: second dimension moves fastest
        assert_eq!(p.cell(1), &r(&[(0.0, 0.5), (0.5, 1.0)]));
        assert_eq!(p.cell(2), &r(&[(0.5, 1.0), (0.0, 0.5)]));
    }

    #[test]
    fn sixteen_unit_cells_have_integer_corners() {
        let dom = r(&[(-2.0, 2.0), (-2.0, 2.0)]);
        let p = partition_domain(&dom, &[4, 4]).unwrap();
        assert_eq!(p.len(), 16);
        for (i, c) in p.cells().iter().enumerate() {
            let (a, b) = (i / 4, i % 4);
            assert_eq!(c.lo(), vec![-2.0 + a as f64, -2.0 + b as f64]);
            assert_eq!(c.hi(), vec![-1.0 + a as f64, -1.0 + b as f64]);
        }
    }

    #[test]
    fn bad_partitions_are_rejected() {
        let dom = r(&[(0.0, 1.0)]);
        assert!(partition_domain(&dom, &[0]).is_err());
        assert!(partition_domain(&dom, &[1, 1]).is_err());
        let flat = r(&[(0.0, 0.0)]);
        assert!(partition_domain(&flat, &[2]).is_err());
    }

    #[test]
    fn containment_and_intersection_examples() {
        assert!(box_contains(&r(&[(0.0, 1.0)]), &r(&[(0.2, 0.8)])).unwrap());
        assert!(box_contains(&r(&[(0.0, 1.0)]), &r(&[(0.0, 1.0)])).unwrap());
        assert!(!box_contains(
            &r(&[(0.0, 1.0), (0.0, 1.0)]),
            &r(&[(0.5, 1.5), (0.0, 1.0)])
        )
        .unwrap());
        assert!(box_intersects(&r(&[(0.0, 1.0)]), &r(&[(1.0, 2.0)])).unwrap());
        assert!(!box_intersects(&r(&[(0.0, 1.0)]), &r(&[(2.0, 3.0)])).unwrap());
        assert!(box_intersects(
            &r(&[(0.0, 1.0), (0.0, 1.0)]),
            &r(&[(0.5, 2.0), (0.9, 3.0)])
        )
        .unwrap());
        assert!(box_contains(&r(&[(0.0, 1.0)]), &r(&[(0.0, 1.0), (0.0, 1.0)])).is_err());
        assert!(box_intersects(&r(&[(0.0, 1.0)]), &r(&[(0.0, 1.0), (0.0, 1.0)])).is_err());
    }

    #[test]
    fn cell_range_and_blocks() {
        let dom = r(&[(0.0, 4.0), (0.0, 2.0)]);
        let p = partition_domain(&dom, &[4, 2]).unwrap();
        let range = p.cell_range(&r(&[(0.5, 2.0), (1.0, 1.0)])).unwrap();
        assert_eq!(range, vec![(0, 1), (1, 1)]);
        let idx = p.block_indices(&range);
        assert_eq!(idx, vec![1, 3]);
        assert_eq!(p.block_region(&range).unwrap(), r(&[(0.0, 2.0), (1.0, 2.0)]));
        assert_eq!(p.multi_index(5), Some(vec![2, 1]));
        assert_eq!(p.flat_index(&[2, 1]), Some(5));
        assert!(p.cell_range(&r(&[(5.0, 6.0), (0.0, 1.0)])).is_none());
    }

    #[test]
    fn external_partition_must_tile() {
        let dom = r(&[(0.0, 1.0)]);
        let ok = StatePartition::from_cells(
            dom.clone(),
            vec![r(&[(0.0, 0.3)]), r(&[(0.3, 1.0)])],
        );
        assert!(ok.is_ok());
        assert!(StatePartition::from_cells(dom.clone(), vec![r(&[(0.0, 0.3)])]).is_err());
        assert!(StatePartition::from_cells(dom, vec![r(&[(0.0, 1.2)])]).is_err());
    }

    fn arb_box(n: usize) -> impl Strategy<Value = Region> {
        proptest::collection::vec((-5.0f64..5.0, 0.0f64..3.0), n).prop_map(|v| {
            Region::new(v.into_iter().map(|(l, w)| Interval::raw(l, l + w)).collect()).unwrap()
        })
    }

    proptest! {
        #[test]
        fn partition_tiles_domain(
            lo in proptest::collection::vec(-10.0f64..10.0, 1..4),
            widths in proptest::collection::vec(0.1f64..5.0, 3),
            res in proptest::collection::vec(1usize..6, 3),
        ) {
            let n = lo.len();
            let dom = Region::from_bounds(
                &lo,
                &lo.iter().zip(&widths).map(|(l, w)| l + w).collect::<Vec<_>>(),
            ).unwrap();
            let p = partition_domain(&dom, &res[..n]).unwrap();
            prop_assert_eq!(p.len(), res[..n].iter().product::<usize>());
            let total: f64 = p.cells().iter().map(Region::volume).sum();
            prop_assert!((total - dom.volume()).abs() <= 1e-9 * dom.volume());
            for c in p.cells() {
                prop_assert!(box_contains(&dom, c).unwrap());
            }
            prop_assert_eq!(p, partition_domain(&dom, &res[..n]).unwrap());
        }

        #[test]
        fn containment_implies_intersection(a in arb_box(2), b in arb_box(2)) {
            if box_contains(&a, &b).unwrap() {
                prop_assert!(box_intersects(&a, &b).unwrap());
            }
        }
    }
}
