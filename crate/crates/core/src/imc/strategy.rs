//! Transition-bound strategies.
//!
//! Each strategy turns a source region and a target box into a pair of
//! bounds on the one-step transition kernel. Strategies are looked up by
//! name in a [`StrategyRegistry`] so the pipeline can pick one from its
//! configuration.

use std::collections::BTreeMap;
use std::fmt;

use crate::dynamics::{structured_posterior, DynamicsModel, NoiseStructure};
use crate::error::{Error, Result};
use crate::geometry::{box_contains, box_intersects, Interval, Region};
use crate::noise::{
    optimal_partition_affine, optimal_partition_multiplicative, uniform_noise_grid, NoiseCell,
    NoiseModel, PartitionPair, MAX_CELLS_PER_COMPONENT,
};

/// Bounds on `T(target | x)` over all `x` in a source region.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PairBounds {
    pub lower: f64,
    pub upper: f64,
    /// Largest number of noise cells examined along any single component.
    pub cells_per_component: usize,
}

/// Per-source data a strategy computes once and reuses for every target.
#[derive(Debug, Clone)]
pub struct SourceInfo {
    pub region: Region,
    /// Noise-free posterior `Post_f(q)` for structured strategies.
    pub postf: Option<Region>,
    /// `(Post(q, c), Pr(c))` for each noise cell with positive mass.
    pub cell_posteriors: Vec<(Region, f64)>,
    /// Hull of `Post(q, W)` over the whole noise support.
    pub reach: Region,
}

pub trait BoundStrategy: Send + Sync {
    fn name(&self) -> &str;

    /// `postf` replaces the model's noise-free posterior when supplied
    /// (externally learned posteriors).
    fn prepare(&self, region: &Region, postf: Option<Region>) -> Result<SourceInfo>;

    fn bounds(&self, source: &SourceInfo, target: &Region) -> Result<PairBounds>;
}

impl fmt::Debug for dyn BoundStrategy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "BoundStrategy({})", self.name())
    }
}

/// Inputs available to strategy constructors.
#[derive(Debug, Clone)]
pub struct StrategyContext {
    pub model: DynamicsModel,
    pub noise: NoiseModel,
    /// Cells per noise component for gridding strategies.
    pub noise_resolution: Option<Vec<usize>>,
}

pub type StrategyFactory = fn(&StrategyContext) -> Result<Box<dyn BoundStrategy>>;

struct Entry {
    description: &'static str,
    factory: StrategyFactory,
}

/// Name-keyed collection of strategy constructors.
pub struct StrategyRegistry {
    entries: BTreeMap<String, Entry>,
}

impl Default for StrategyRegistry {
    fn default() -> Self {
        Self::with_defaults()
    }
}

impl StrategyRegistry {
    pub fn empty() -> Self {
        StrategyRegistry {
            entries: BTreeMap::new(),
        }
    }

    /// Registry holding `affine`, `multiplicative` and `grid`.
    pub fn with_defaults() -> Self {
        let mut r = Self::empty();
        r.register(
            AffineBounds::NAME,
            "optimal three-cell partitions for additive noise",
            |ctx| Ok(Box::new(AffineBounds::new(ctx)?)),
        );
        r.register(
            MultiplicativeBounds::NAME,
            "optimal three-cell partitions for positive multiplicative noise",
            |ctx| Ok(Box::new(MultiplicativeBounds::new(ctx)?)),
        );
        r.register(
            GridBounds::NAME,
            "uniform noise grid with interval posteriors; works for any structure",
            |ctx| Ok(Box::new(GridBounds::new(ctx)?)),
        );
        r
    }

    pub fn register(&mut self, name: &str, description: &'static str, factory: StrategyFactory) {
        self.entries.insert(
            name.to_string(),
            Entry {
                description,
                factory,
            },
        );
    }

    pub fn names(&self) -> Vec<&str> {
        self.entries.keys().map(String::as_str).collect()
    }

    pub fn describe(&self) -> Vec<(&str, &'static str)> {
        self.entries
            .iter()
            .map(|(k, e)| (k.as_str(), e.description))
            .collect()
    }

    pub fn create(&self, name: &str, ctx: &StrategyContext) -> Result<Box<dyn BoundStrategy>> {
        let entry = self.entries.get(name).ok_or_else(|| {
            Error::invalid(format!(
                "unknown bound strategy `{name}` (available: {})",
                self.names().join(", ")
            ))
        })?;
        (entry.factory)(ctx)
    }

    /// The strategy matching a model's declared noise structure.
    pub fn default_name(structure: NoiseStructure) -> &'static str {
        match structure {
            NoiseStructure::Additive => AffineBounds::NAME,
            NoiseStructure::Multiplicative => MultiplicativeBounds::NAME,
            NoiseStructure::General => GridBounds::NAME,
        }
    }
}

/// Transition bounds for a structured system using per-component optimal
/// partitions: the lower bound is the product of the "stays inside" cell
/// probabilities and the upper bound the product of the "can reach" cells.
pub fn transition_bounds_structured(
    postf: &Region,
    target: &Region,
    noise: &NoiseModel,
    structure: NoiseStructure,
) -> Result<PairBounds> {
    if postf.dim() != target.dim() || postf.dim() != noise.dim() {
        return Err(Error::invalid("posterior, target and noise dimensions differ"));
    }
    let mut lower = 1.0;
    let mut upper = 1.0;
    let mut cells = 0;
    for i in 0..postf.dim() {
        let pair: PartitionPair = match structure {
            NoiseStructure::Additive => optimal_partition_affine(postf.interval(i), target.interval(i))?,
            NoiseStructure::Multiplicative => {
                optimal_partition_multiplicative(postf.interval(i), target.interval(i))?
            }
            NoiseStructure::General => {
                return Err(Error::invalid("structured bounds need an additive or multiplicative system"))
            }
        };
        let used = pair.upper_cells().len().max(pair.lower_cells().len());
        assert!(
            used <= MAX_CELLS_PER_COMPONENT,
            "partition uses {used} cells on component {i}"
        );
        cells = cells.max(used);
        let comp = noise.component(i);
        lower *= pair.lower_cell().map_or(0.0, |c| comp.prob(c));
        upper *= comp.prob(pair.upper_cell());
    }
    let lower = lower.clamp(0.0, 1.0);
    let upper = upper.clamp(0.0, 1.0);
    Ok(PairBounds {
        lower: lower.min(upper),
        upper,
        cells_per_component: cells,
    })
}

/// Transition bounds against a fixed, measure-preserving noise partition.
pub fn transition_bounds_general(
    model: &DynamicsModel,
    cells: &[NoiseCell],
    q: &Region,
    target: &Region,
) -> Result<PairBounds> {
    let posts = cells
        .iter()
        .filter(|c| c.probability > 0.0)
        .map(|c| Ok((model.posterior(q, &c.intervals)?, c.probability)))
        .collect::<Result<Vec<_>>>()?;
    sum_over_cells(&posts, target, cells.len())
}

fn sum_over_cells(posts: &[(Region, f64)], target: &Region, ncells: usize) -> Result<PairBounds> {
    let mut lower = 0.0;
    let mut upper = 0.0;
    for (post, p) in posts {
        if box_contains(target, post)? {
            lower += p;
        }
        if box_intersects(post, target)? {
            upper += p;
        }
    }
    let upper = upper.clamp(0.0, 1.0);
    Ok(PairBounds {
        lower: lower.clamp(0.0, 1.0).min(upper),
        upper,
        cells_per_component: ncells,
    })
}

fn structured_source(
    model: &DynamicsModel,
    noise: &NoiseModel,
    structure: NoiseStructure,
    region: &Region,
    postf: Option<Region>,
) -> Result<SourceInfo> {
    let postf = match postf {
        Some(p) => p,
        None => model.posterior_f(region)?,
    };
    let reach = structured_posterior(structure, &postf, &noise.support())?;
    Ok(SourceInfo {
        region: region.clone(),
        postf: Some(postf),
        cell_posteriors: Vec::new(),
        reach,
    })
}

fn check_structured(ctx: &StrategyContext, structure: NoiseStructure, name: &str) -> Result<()> {
    if ctx.model.structure() != structure {
        return Err(Error::Unsupported(format!(
            "the `{name}` strategy needs a {structure} model, got {}",
            ctx.model.structure()
        )));
    }
    if ctx.model.dim() != ctx.noise.dim() {
        return Err(Error::invalid(format!(
            "model has {} components but noise has {}",
            ctx.model.dim(),
            ctx.noise.dim()
        )));
    }
    Ok(())
}

/// Additive noise `g(x) + w`.
#[derive(Debug, Clone)]
pub struct AffineBounds {
    model: DynamicsModel,
    noise: NoiseModel,
}

impl AffineBounds {
    pub const NAME: &'static str = "affine";

    pub fn new(ctx: &StrategyContext) -> Result<Self> {
        check_structured(ctx, NoiseStructure::Additive, Self::NAME)?;
        Ok(AffineBounds {
            model: ctx.model.clone(),
            noise: ctx.noise.clone(),
        })
    }
}

impl BoundStrategy for AffineBounds {
    fn name(&self) -> &str {
        Self::NAME
    }

    fn prepare(&self, region: &Region, postf: Option<Region>) -> Result<SourceInfo> {
        structured_source(&self.model, &self.noise, NoiseStructure::Additive, region, postf)
    }

    fn bounds(&self, source: &SourceInfo, target: &Region) -> Result<PairBounds> {
        let postf = source.postf.as_ref().expect("prepared by a structured strategy");
        transition_bounds_structured(postf, target, &self.noise, NoiseStructure::Additive)
    }
}

/// Positive multiplicative noise `g(x) * w` with `w >= 0`.
#[derive(Debug, Clone)]
pub struct MultiplicativeBounds {
    model: DynamicsModel,
    noise: NoiseModel,
}

impl MultiplicativeBounds {
    pub const NAME: &'static str = "multiplicative";

    pub fn new(ctx: &StrategyContext) -> Result<Self> {
        check_structured(ctx, NoiseStructure::Multiplicative, Self::NAME)?;
        if let Some((i, s)) = ctx
            .noise
            .support()
            .into_iter()
            .enumerate()
            .find(|(_, s)| s.lo < 0.0)
        {
            return Err(Error::Unsupported(format!(
                "multiplicative noise must be non-negative; component {} has support {s}",
                i + 1
            )));
        }
        Ok(MultiplicativeBounds {
            model: ctx.model.clone(),
            noise: ctx.noise.clone(),
        })
    }
}

impl BoundStrategy for MultiplicativeBounds {
    fn name(&self) -> &str {
        Self::NAME
    }

    fn prepare(&self, region: &Region, postf: Option<Region>) -> Result<SourceInfo> {
        structured_source(&self.model, &self.noise, NoiseStructure::Multiplicative, region, postf)
    }

    fn bounds(&self, source: &SourceInfo, target: &Region) -> Result<PairBounds> {
        let postf = source.postf.as_ref().expect("prepared by a structured strategy");
        transition_bounds_structured(postf, target, &self.noise, NoiseStructure::Multiplicative)
    }
}

/// Uniform noise grid; sound for any structure, tight only as the grid
/// gets fine.
#[derive(Debug, Clone)]
pub struct GridBounds {
    model: DynamicsModel,
    cells: Vec<NoiseCell>,
    max_resolution: usize,
}

impl GridBounds {
    pub const NAME: &'static str = "grid";
    pub const DEFAULT_RESOLUTION: usize = 16;

    pub fn new(ctx: &StrategyContext) -> Result<Self> {
        if ctx.model.dim() != ctx.noise.dim() {
            return Err(Error::invalid(format!(
                "model has {} components but noise has {}",
                ctx.model.dim(),
                ctx.noise.dim()
            )));
        }
        let resolution = ctx
            .noise_resolution
            .clone()
            .unwrap_or_else(|| vec![Self::DEFAULT_RESOLUTION; ctx.noise.dim()]);
        let cells = uniform_noise_grid(&ctx.noise, &resolution)?;
        Ok(GridBounds {
            model: ctx.model.clone(),
            cells,
            max_resolution: resolution.iter().copied().max().unwrap_or(1),
        })
    }

    pub fn cells(&self) -> &[NoiseCell] {
        &self.cells
    }
}

impl BoundStrategy for GridBounds {
    fn name(&self) -> &str {
        Self::NAME
    }

    fn prepare(&self, region: &Region, postf: Option<Region>) -> Result<SourceInfo> {
        let structure = self.model.structure();
        if postf.is_some() && !structure.is_structured() {
            return Err(Error::Unsupported(
                "external posteriors need an additive or multiplicative model".into(),
            ));
        }
        let postf = match postf {
            Some(p) => Some(p),
            None if structure.is_structured() => Some(self.model.posterior_f(region)?),
            None => None,
        };
        let mut posts = Vec::with_capacity(self.cells.len());
        for c in self.cells.iter().filter(|c| c.probability > 0.0) {
            let post = match &postf {
                Some(pf) => structured_posterior(structure, pf, &c.intervals)?,
                None => self.model.posterior(region, &c.intervals)?,
            };
            posts.push((post, c.probability));
        }
        let reach = posts
            .iter()
            .map(|(p, _)| p.clone())
            .reduce(|a, b| a.hull(&b).expect("same dimension"))
            .ok_or_else(|| Error::InvalidModel("noise grid has no cell with positive mass".into()))?;
        Ok(SourceInfo {
            region: region.clone(),
            postf,
            cell_posteriors: posts,
            reach,
        })
    }

    fn bounds(&self, source: &SourceInfo, target: &Region) -> Result<PairBounds> {
        let mut b = sum_over_cells(&source.cell_posteriors, target, self.cells.len())?;
        b.cells_per_component = self.max_resolution;
        Ok(b)
    }
}

/// Expands a region outward by `pad[d]` along each dimension.
pub(crate) fn expand(region: &Region, pad: &[f64]) -> Region {
    Region::from_intervals_unchecked(
        region
            .intervals()
            .iter()
            .zip(pad)
            .map(|(iv, p)| Interval::raw(iv.lo - p, iv.hi + p))
            .collect(),
    )
}
