//! TOML run configuration.
//!
//! ```toml
//! [domain]
//! lo = [0.0]
//! hi = [1.0]
//! resolution = [10]
//!
//! [dynamics]
//! structure = "additive"
//! expressions = ["0.9 * x1"]
//!
//! [[noise]]
//! kind = "uniform"
//! lo = -0.05
//! hi = 0.05
//!
//! [labels]
//! goal = [{ lo = [0.0], hi = [0.2] }]
//! ```

use std::path::{Path, PathBuf};

use serde::Deserialize;

use crate::dynamics::{DynamicsModel, NoiseStructure};
use crate::error::{Error, Result};
use crate::geometry::Region;
use crate::imc::{LabelRegions, StrategyRegistry};
use crate::mc::DEFAULT_CONFIDENCE;
use crate::noise::{NoiseComponent, NoiseModel};
use crate::verify::{Horizon, ReachAvoidSpec, DEFAULT_EPS_CONV, DEFAULT_MAX_ITERATIONS, DEFAULT_THRESHOLD};

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawConfig {
    domain: RawDomain,
    dynamics: RawDynamics,
    noise: Vec<NoiseComponent>,
    #[serde(default)]
    labels: RawLabels,
    #[serde(default)]
    spec: RawSpec,
    #[serde(default)]
    bounds: RawBounds,
    #[serde(default)]
    cluster: RawCluster,
    #[serde(default)]
    validation: Option<RawValidation>,
    #[serde(default)]
    output: RawOutput,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawDomain {
    lo: Vec<f64>,
    hi: Vec<f64>,
    resolution: Vec<usize>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawDynamics {
    structure: String,
    expressions: Vec<String>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawBox {
    lo: Vec<f64>,
    hi: Vec<f64>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawLabels {
    #[serde(default)]
    goal: Vec<RawBox>,
    #[serde(default)]
    obstacles: Vec<RawBox>,
}

#[derive(Debug, Deserialize)]
#[serde(untagged)]
enum RawHorizon {
    Steps(i64),
    Named(String),
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawSpec {
    horizon: Option<RawHorizon>,
    threshold: Option<f64>,
    eps_conv: Option<f64>,
    max_iterations: Option<usize>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawBounds {
    strategy: Option<String>,
    noise_resolution: Option<Vec<usize>>,
    posterior_table: Option<PathBuf>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawCluster {
    #[serde(default)]
    passes: usize,
}

#[derive(Debug, Deserialize)]
#[serde(untagged)]
enum RawCells {
    Count(usize),
    List(Vec<usize>),
    Named(String),
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawValidation {
    #[serde(default = "default_true")]
    enabled: bool,
    samples: Option<usize>,
    cells: Option<RawCells>,
    confidence: Option<f64>,
    seed: Option<u64>,
    max_steps: Option<usize>,
    export_trajectories: Option<usize>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawOutput {
    dir: Option<PathBuf>,
}

fn default_true() -> bool {
    true
}

/// Which cells to validate by simulation.
#[derive(Debug, Clone, PartialEq)]
pub enum CellSelection {
    All,
    /// This many cells drawn without replacement using the seed.
    Random(usize),
    List(Vec<usize>),
}

#[derive(Debug, Clone, PartialEq)]
pub struct ValidationConfig {
    pub samples: usize,
    pub cells: CellSelection,
    pub confidence: f64,
    pub seed: u64,
    /// Step cap for unbounded horizons.
    pub max_steps: usize,
    pub export_trajectories: usize,
}

/// Fully validated run configuration.
#[derive(Debug, Clone)]
pub struct RunConfig {
    pub domain: Region,
    pub resolution: Vec<usize>,
    pub model: DynamicsModel,
    pub noise: NoiseModel,
    pub labels: LabelRegions,
    pub spec: ReachAvoidSpec,
    pub strategy: String,
    pub noise_resolution: Option<Vec<usize>>,
    pub posterior_table: Option<PathBuf>,
    pub cluster_passes: usize,
    pub validation: Option<ValidationConfig>,
    pub output_dir: PathBuf,
}

fn location(text: &str, offset: usize) -> (usize, usize) {
    let before = &text[..offset.min(text.len())];
    let line = before.matches('\n').count() + 1;
    let col = before.rsplit('\n').next().map_or(0, |l| l.chars().count()) + 1;
    (line, col)
}

pub fn load_config(path: &Path) -> Result<RunConfig> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| Error::Input(format!("cannot read config {}: {e}", path.display())))?;
    let base = path.parent().unwrap_or(Path::new("."));
    parse_config(&text, base)
}

/// Parses and validates config text; relative paths resolve against `base`.
pub fn parse_config(text: &str, base: &Path) -> Result<RunConfig> {
    let raw: RawConfig = toml::from_str(text).map_err(|e| {
        let (line, column) = e.span().map_or((0, 0), |s| location(text, s.start));
        Error::Syntax {
            line,
            column,
            message: e.message().to_string(),
        }
    })?;
    validate(raw, base)
}

fn region(field: &str, lo: &[f64], hi: &[f64]) -> Result<Region> {
    if lo.len() != hi.len() {
        return Err(Error::config(field, format!("lo has {} entries, hi has {}", lo.len(), hi.len())));
    }
    if lo.iter().chain(hi).any(|v| !v.is_finite()) {
        return Err(Error::config(field, "bounds must be finite"));
    }
    Region::from_bounds(lo, hi).map_err(|e| Error::config(field, e.to_string()))
}

fn validate(raw: RawConfig, base: &Path) -> Result<RunConfig> {
    let domain = region("domain", &raw.domain.lo, &raw.domain.hi)?;
    let dim = domain.dim();
    if dim == 0 {
        return Err(Error::config("domain", "needs at least one dimension"));
    }
    if !domain.is_full_dimensional() {
        return Err(Error::config("domain", "every dimension needs lo < hi"));
    }
    if raw.domain.resolution.len() != dim {
        return Err(Error::config(
            "domain.resolution",
            format!("has {} entries for a {dim}-dimensional domain", raw.domain.resolution.len()),
        ));
    }
    if raw.domain.resolution.contains(&0) {
        return Err(Error::config("domain.resolution", "entries must be at least 1"));
    }

    let structure: NoiseStructure = raw
        .dynamics
        .structure
        .parse()
        .map_err(|e: Error| Error::config("dynamics.structure", e.to_string()))?;
    if raw.dynamics.expressions.len() != dim {
        return Err(Error::config(
            "dynamics.expressions",
            format!("has {} expressions for a {dim}-dimensional domain", raw.dynamics.expressions.len()),
        ));
    }
    let model = DynamicsModel::from_strings(&raw.dynamics.expressions, structure).map_err(|e| {
        let field = match &e {
            Error::Syntax { line, .. } | Error::Structure { component: line, .. } => {
                format!("dynamics.expressions[{}]", line.saturating_sub(1))
            }
            _ => "dynamics.expressions".to_string(),
        };
        Error::config(field, e.to_string())
    })?;

    if raw.noise.len() != dim {
        return Err(Error::config(
            "noise",
            format!("has {} components for a {dim}-dimensional domain", raw.noise.len()),
        ));
    }
    for (i, c) in raw.noise.iter().enumerate() {
        c.validate().map_err(|e| Error::config(format!("noise[{i}]"), e.to_string()))?;
    }
    let noise = NoiseModel::new(raw.noise).map_err(|e| Error::config("noise", e.to_string()))?;

    let mut labels = LabelRegions::default();
    for (name, boxes, dest) in [
        ("goal", &raw.labels.goal, &mut labels.goal),
        ("obstacles", &raw.labels.obstacles, &mut labels.obstacles),
    ] {
        for (i, b) in boxes.iter().enumerate() {
            let field = format!("labels.{name}[{i}]");
            let r = region(&field, &b.lo, &b.hi)?;
            if r.dim() != dim {
                return Err(Error::config(field, format!("has dimension {}, domain has {dim}", r.dim())));
            }
            if !crate::geometry::box_contains(&domain, &r)? {
                return Err(Error::config(field, format!("box {r} is not inside the domain {domain}")));
            }
            dest.push(r);
        }
    }

    let horizon = match raw.spec.horizon {
        None => Horizon::Unbounded,
        Some(RawHorizon::Named(s)) if s == "unbounded" => Horizon::Unbounded,
        Some(RawHorizon::Named(s)) => {
            return Err(Error::config("spec.horizon", format!("expected a step count or \"unbounded\", got \"{s}\"")))
        }
        Some(RawHorizon::Steps(k)) if k >= 0 => Horizon::Finite(k as usize),
        Some(RawHorizon::Steps(k)) => {
            return Err(Error::config("spec.horizon", format!("must be non-negative, got {k}")))
        }
    };
    let threshold = raw.spec.threshold.unwrap_or(DEFAULT_THRESHOLD);
    if !(threshold > 0.0 && threshold < 1.0) {
        return Err(Error::config("spec.threshold", format!("must lie in (0, 1), got {threshold}")));
    }
    let eps_conv = raw.spec.eps_conv.unwrap_or(DEFAULT_EPS_CONV);
    if !(eps_conv > 0.0) {
        return Err(Error::config("spec.eps_conv", format!("must be positive, got {eps_conv}")));
    }
    let max_iterations = raw.spec.max_iterations.unwrap_or(DEFAULT_MAX_ITERATIONS);
    if max_iterations == 0 {
        return Err(Error::config("spec.max_iterations", "must be at least 1"));
    }
    let spec = ReachAvoidSpec {
        horizon,
        threshold,
        eps_conv,
        max_iterations,
        ..ReachAvoidSpec::default()
    };

    let registry = StrategyRegistry::with_defaults();
    let strategy = raw
        .bounds
        .strategy
        .unwrap_or_else(|| StrategyRegistry::default_name(structure).to_string());
    if !registry.names().contains(&strategy.as_str()) {
        return Err(Error::config(
            "bounds.strategy",
            format!("unknown strategy `{strategy}` (available: {})", registry.names().join(", ")),
        ));
    }
    if let Some(r) = &raw.bounds.noise_resolution {
        if r.len() != dim || r.contains(&0) {
            return Err(Error::config(
                "bounds.noise_resolution",
                format!("needs {dim} entries, each at least 1"),
            ));
        }
    }
    let posterior_table = raw.bounds.posterior_table.map(|p| base.join(p));
    if posterior_table.is_some() && !structure.is_structured() {
        return Err(Error::config(
            "bounds.posterior_table",
            "external posteriors need an additive or multiplicative structure",
        ));
    }

    let total_cells: usize = raw.domain.resolution.iter().product();
    let validation = match raw.validation {
        Some(v) if v.enabled => {
            let samples = v.samples.unwrap_or(1000);
            if samples == 0 {
                return Err(Error::config("validation.samples", "must be at least 1"));
            }
            let confidence = v.confidence.unwrap_or(DEFAULT_CONFIDENCE);
            if !(confidence > 0.0 && confidence < 1.0) {
                return Err(Error::config("validation.confidence", format!("must lie in (0, 1), got {confidence}")));
            }
            let cells = match v.cells {
                None => CellSelection::All,
                Some(RawCells::Named(s)) if s == "all" => CellSelection::All,
                Some(RawCells::Named(s)) => {
                    return Err(Error::config("validation.cells", format!("expected a count, a list or \"all\", got \"{s}\"")))
                }
                Some(RawCells::Count(0)) => return Err(Error::config("validation.cells", "must be at least 1")),
                Some(RawCells::Count(n)) => CellSelection::Random(n),
                Some(RawCells::List(l)) => {
                    if let Some(bad) = l.iter().find(|&&c| c >= total_cells) {
                        return Err(Error::config(
                            "validation.cells",
                            format!("cell {bad} is outside 0..{total_cells}"),
                        ));
                    }
                    CellSelection::List(l)
                }
            };
            let max_steps = v.max_steps.unwrap_or(1000);
            if max_steps == 0 {
                return Err(Error::config("validation.max_steps", "must be at least 1"));
            }
            Some(ValidationConfig {
                samples,
                cells,
                confidence,
                seed: v.seed.unwrap_or(0),
                max_steps,
                export_trajectories: v.export_trajectories.unwrap_or(10),
            })
        }
        _ => None,
    };

    Ok(RunConfig {
        domain,
        resolution: raw.domain.resolution,
        model,
        noise,
        labels,
        spec,
        strategy,
        noise_resolution: raw.bounds.noise_resolution,
        posterior_table,
        cluster_passes: raw.cluster.passes,
        validation,
        output_dir: base.join(raw.output.dir.unwrap_or_else(|| PathBuf::from("out"))),
    })
}
