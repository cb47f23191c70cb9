//! Monte Carlo validation of verified satisfaction bounds.

use std::fmt;
use std::io::Write;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::Serialize;
use statrs::distribution::{Beta, ContinuousCDF};

use crate::dynamics::DynamicsModel;
use crate::error::{Error, Result};
use crate::geometry::{Region, StatePartition};
use crate::noise::NoiseModel;
use crate::verify::VerificationResult;

pub const DEFAULT_CONFIDENCE: f64 = 0.99;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Termination {
    Horizon,
    GoalHit,
    AvoidHit,
    LeftDomain,
}

impl Termination {
    pub fn as_str(self) -> &'static str {
        match self {
            Termination::Horizon => "horizon",
            Termination::GoalHit => "goal_hit",
            Termination::AvoidHit => "avoid_hit",
            Termination::LeftDomain => "left_domain",
        }
    }
}

impl fmt::Display for Termination {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory {
    /// Visited states including `x0`.
    pub states: Vec<Vec<f64>>,
    pub termination: Termination,
}

impl Trajectory {
    pub fn satisfied(&self) -> bool {
        self.termination == Termination::GoalHit
    }
}

/// What a simulated run must reach and avoid.
#[derive(Debug, Clone, PartialEq)]
pub struct SimulationSpec {
    pub domain: Region,
    pub goal: Vec<Region>,
    pub obstacles: Vec<Region>,
    /// Number of transitions to simulate at most.
    pub steps: usize,
}

impl SimulationSpec {
    fn status(&self, x: &[f64]) -> Option<Termination> {
        if !self.domain.contains_point(x) {
            Some(Termination::LeftDomain)
        } else if self.obstacles.iter().any(|o| o.contains_point(x)) {
            Some(Termination::AvoidHit)
        } else if self.goal.iter().any(|g| g.contains_point(x)) {
            Some(Termination::GoalHit)
        } else {
            None
        }
    }
}

/// Independent generator for trajectory `stream` under `seed`.
pub fn trajectory_rng(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

/// Mixes a sub-index into a seed (splitmix64 finaliser).
pub fn derive_seed(seed: u64, index: u64) -> u64 {
    let mut z = seed ^ index.wrapping_add(0x9e37_79b9_7f4a_7c15).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

pub fn sample_noise<R: Rng + ?Sized>(noise: &NoiseModel, rng: &mut R) -> Vec<f64> {
    noise.sample(rng)
}

/// Iterates the system from `x0` until the goal, an obstacle or the edge of
/// the domain is hit, or `spec.steps` transitions have been taken.
pub fn simulate<R: Rng + ?Sized>(
    model: &DynamicsModel,
    noise: &NoiseModel,
    x0: &[f64],
    spec: &SimulationSpec,
    rng: &mut R,
) -> Result<Trajectory> {
    if !spec.domain.contains_point(x0) {
        return Err(Error::invalid(format!("initial state {x0:?} lies outside the domain")));
    }
    let mut states = vec![x0.to_vec()];
    if let Some(t) = spec.status(x0) {
        return Ok(Trajectory { states, termination: t });
    }
    let mut x = x0.to_vec();
    for _ in 0..spec.steps {
        let w = noise.sample(rng);
        x = model.eval_point(&x, &w)?;
        states.push(x.clone());
        if let Some(t) = spec.status(&x) {
            return Ok(Trajectory { states, termination: t });
        }
    }
    Ok(Trajectory {
        states,
        termination: Termination::Horizon,
    })
}

/// Empirical satisfaction probability with a two-sided Clopper-Pearson
/// interval.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Estimate {
    pub successes: usize,
    pub samples: usize,
    pub estimate: f64,
    pub ci_lower: f64,
    pub ci_upper: f64,
}

/// Exact binomial confidence interval for `k` successes out of `n`.
pub fn clopper_pearson(k: usize, n: usize, confidence: f64) -> Result<(f64, f64)> {
    if n == 0 || k > n {
        return Err(Error::invalid(format!("bad binomial counts {k}/{n}")));
    }
    if !(confidence > 0.0 && confidence < 1.0) {
        return Err(Error::invalid(format!("confidence {confidence} must lie in (0, 1)")));
    }
    let alpha = 1.0 - confidence;
    let (k, n) = (k as f64, n as f64);
    let lo = if k == 0.0 {
        0.0
    } else {
        Beta::new(k, n - k + 1.0)
            .map_err(|e| Error::invalid(e.to_string()))?
            .inverse_cdf(alpha / 2.0)
    };
    let hi = if k == n {
        1.0
    } else {
        Beta::new(k + 1.0, n - k)
            .map_err(|e| Error::invalid(e.to_string()))?
            .inverse_cdf(1.0 - alpha / 2.0)
    };
    Ok((lo.clamp(0.0, 1.0), hi.clamp(0.0, 1.0)))
}

/// Runs `n` trajectories from `x0`; trajectory `i` draws from stream `i`.
pub fn run_trajectories(
    model: &DynamicsModel,
    noise: &NoiseModel,
    spec: &SimulationSpec,
    x0: &[f64],
    n: usize,
    seed: u64,
) -> Result<Vec<Trajectory>> {
    (0..n)
        .into_par_iter()
        .map(|i| {
            let mut rng = trajectory_rng(seed, i as u64);
            simulate(model, noise, x0, spec, &mut rng)
        })
        .collect()
}

pub fn estimate_satisfaction(
    model: &DynamicsModel,
    noise: &NoiseModel,
    spec: &SimulationSpec,
    x0: &[f64],
    n: usize,
    seed: u64,
    confidence: f64,
) -> Result<Estimate> {
    if n == 0 {
        return Err(Error::invalid("sample count must be at least 1"));
    }
    let trajectories = run_trajectories(model, noise, spec, x0, n, seed)?;
    summarize(&trajectories, confidence)
}

fn summarize(trajectories: &[Trajectory], confidence: f64) -> Result<Estimate> {
    let n = trajectories.len();
    let k = trajectories.iter().filter(|t| t.satisfied()).count();
    let (lo, hi) = clopper_pearson(k, n, confidence)?;
    Ok(Estimate {
        successes: k,
        samples: n,
        estimate: k as f64 / n as f64,
        ci_lower: lo,
        ci_upper: hi,
    })
}

/// Monte Carlo check of one cell's verified interval.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CellValidation {
    pub cell: usize,
    pub x0: Vec<f64>,
    #[serde(flatten)]
    pub estimate: Estimate,
    pub verified_lower: f64,
    pub verified_upper: f64,
    /// The confidence interval meets `[verified_lower, verified_upper]`.
    pub consistent: bool,
}

/// Settings for [`validate_cells`].
#[derive(Debug, Clone, PartialEq)]
pub struct ValidationSettings {
    pub cells: Vec<usize>,
    pub samples: usize,
    pub confidence: f64,
    pub seed: u64,
    /// Trajectories kept per cell for export.
    pub keep: usize,
}

/// Draws `count` distinct cell indices out of `0..total`, sorted.
pub fn pick_cells(total: usize, count: usize, seed: u64) -> Vec<usize> {
    if count >= total {
        return (0..total).collect();
    }
    let mut rng = trajectory_rng(derive_seed(seed, u64::MAX), 0);
    let mut picked = rand::seq::index::sample(&mut rng, total, count).into_vec();
    picked.sort_unstable();
    picked
}

/// Simulates from a seeded random point of each listed cell and compares
/// the estimate against the verified interval. Returns the verdicts and the
/// retained trajectories, tagged with their cell.
pub fn validate_cells(
    model: &DynamicsModel,
    noise: &NoiseModel,
    partition: &StatePartition,
    spec: &SimulationSpec,
    result: &VerificationResult,
    settings: &ValidationSettings,
) -> Result<(Vec<CellValidation>, Vec<(usize, Trajectory)>)> {
    let mut verdicts = Vec::with_capacity(settings.cells.len());
    let mut kept = Vec::new();
    for &cell in &settings.cells {
        if cell >= partition.len() {
            return Err(Error::invalid(format!("cell {cell} is outside the partition")));
        }
        let cell_seed = derive_seed(settings.seed, cell as u64);
        let mut rng = trajectory_rng(cell_seed, u64::MAX);
        let x0: Vec<f64> = partition
            .cell(cell)
            .intervals()
            .iter()
            .map(|iv| iv.lo + (iv.hi - iv.lo) * rng.random::<f64>())
            .collect();
        let trajectories = run_trajectories(model, noise, spec, &x0, settings.samples, cell_seed)?;
        let estimate = summarize(&trajectories, settings.confidence)?;
        let (lo, hi) = (result.lower[cell], result.upper[cell]);
        verdicts.push(CellValidation {
            cell,
            x0,
            estimate,
            verified_lower: lo,
            verified_upper: hi,
            consistent: estimate.ci_upper >= lo && estimate.ci_lower <= hi,
        });
        kept.extend(trajectories.into_iter().take(settings.keep).map(|t| (cell, t)));
    }
    Ok((verdicts, kept))
}

/// One row per visited state: `id, step, x1.., termination`.
pub fn write_trajectories<W: Write>(trajectories: &[Trajectory], out: W) -> Result<()> {
    let dim = trajectories.first().map_or(0, |t| t.states[0].len());
    let mut w = csv::Writer::from_writer(out);
    let mut header = vec!["id".to_string(), "step".to_string()];
    header.extend((1..=dim).map(|i| format!("x{i}")));
    header.push("termination".into());
    w.write_record(&header).map_err(io_err)?;
    for (id, t) in trajectories.iter().enumerate() {
        for (step, x) in t.states.iter().enumerate() {
            let mut rec = vec![id.to_string(), step.to_string()];
            rec.extend(x.iter().map(f64::to_string));
            rec.push(t.termination.as_str().to_string());
            w.write_record(&rec).map_err(io_err)?;
        }
    }
    w.flush()?;
    Ok(())
}

pub fn write_validation<W: Write>(rows: &[CellValidation], out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record([
        "cell",
        "x0",
        "successes",
        "samples",
        "estimate",
        "ci_lower",
        "ci_upper",
        "verified_lower",
        "verified_upper",
        "consistent",
    ])
    .map_err(io_err)?;
    for r in rows {
        let x0 = r.x0.iter().map(f64::to_string).collect::<Vec<_>>().join(" ");
        w.write_record([
            r.cell.to_string(),
            x0,
            r.estimate.successes.to_string(),
            r.estimate.samples.to_string(),
            r.estimate.estimate.to_string(),
            r.estimate.ci_lower.to_string(),
            r.estimate.ci_upper.to_string(),
            r.verified_lower.to_string(),
            r.verified_upper.to_string(),
            r.consistent.to_string(),
        ])
        .map_err(io_err)?;
    }
    w.flush()?;
    Ok(())
}

fn io_err(e: csv::Error) -> Error {
    Error::Io(std::io::Error::other(e))
}
