//! Phase orchestration: abstract, verify, improve, validate.
//!
//! Every phase writes its artifacts into the output directory and later
//! phases can pick them up from there, so each one can run on its own.

use std::fs::{self, File};
use std::io::{BufReader, BufWriter};
use std::path::{Path, PathBuf};
use std::time::Instant;

use log::info;
use serde::{Deserialize, Serialize};

use crate::cluster::{cluster_passes, ImproveReport};
use crate::config::{CellSelection, RunConfig};
use crate::error::{Error, Result};
use crate::geometry::{partition_domain, StatePartition};
use crate::imc::{
    build_imc, read_imc, write_imc, write_labels, BoundStrategy, Imc, Label, PosteriorTable,
    StrategyContext, StrategyRegistry,
};
use crate::mc::{pick_cells, validate_cells, write_trajectories, write_validation, CellValidation, SimulationSpec, ValidationSettings};
use crate::verify::{read_results, robust_value_iteration, write_results, Classification, Horizon, VerificationResult};

pub const IMC_FILE: &str = "imc.csv";
pub const LABELS_FILE: &str = "labels.csv";
pub const RESULTS_FILE: &str = "results.csv";
pub const IMPROVED_FILE: &str = "results_improved.csv";
pub const TRAJECTORIES_FILE: &str = "trajectories.csv";
pub const VALIDATION_FILE: &str = "validation.csv";
pub const SUMMARY_FILE: &str = "summary.json";

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Phase {
    Abstract,
    Verify,
    Improve,
    Validate,
}

impl Phase {
    pub fn as_str(self) -> &'static str {
        match self {
            Phase::Abstract => "abstract",
            Phase::Verify => "verify",
            Phase::Improve => "improve",
            Phase::Validate => "validate",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ClassBreakdown {
    pub satisfies: usize,
    pub violates: usize,
    pub undetermined: usize,
    pub fraction_satisfies: f64,
    pub fraction_violates: f64,
    pub fraction_undetermined: f64,
}

impl ClassBreakdown {
    /// Counts over the partition cells; the unsafe sink is left out.
    fn of(result: &VerificationResult, cells: usize) -> Self {
        let count = |c| result.class[..cells].iter().filter(|&&x| x == c).count();
        let (s, v, u) = (
            count(Classification::Satisfies),
            count(Classification::Violates),
            count(Classification::Undetermined),
        );
        let frac = |k: usize| if cells == 0 { 0.0 } else { k as f64 / cells as f64 };
        ClassBreakdown {
            satisfies: s,
            violates: v,
            undetermined: u,
            fraction_satisfies: frac(s),
            fraction_violates: frac(v),
            fraction_undetermined: frac(u),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AbstractionSummary {
    pub strategy: String,
    pub cells: usize,
    /// Cells plus the unsafe sink.
    pub states: usize,
    pub transitions: usize,
    pub goal_states: usize,
    pub obstacle_states: usize,
    pub seconds: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VerificationSummary {
    pub iterations: usize,
    pub converged: bool,
    pub threshold: f64,
    pub classes: ClassBreakdown,
    pub seconds: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ImprovementSummary {
    pub passes_requested: usize,
    pub improved_per_pass: Vec<usize>,
    pub improved_states: Vec<usize>,
    pub classes: ClassBreakdown,
    pub seconds: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CellVerdict {
    pub cell: usize,
    pub estimate: f64,
    pub ci_lower: f64,
    pub ci_upper: f64,
    pub verified_lower: f64,
    pub verified_upper: f64,
    pub consistent: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ValidationSummary {
    pub samples: usize,
    pub confidence: f64,
    pub seed: u64,
    pub cells_checked: usize,
    pub consistent: usize,
    pub verdicts: Vec<CellVerdict>,
    pub seconds: f64,
}

/// Contents of `summary.json`. Sections are filled by the phases that ran.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct Summary {
    #[serde(skip_serializing_if = "Option::is_none")]
    pub abstraction: Option<AbstractionSummary>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub verification: Option<VerificationSummary>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub improvement: Option<ImprovementSummary>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub validation: Option<ValidationSummary>,
}

impl Summary {
    pub fn load(dir: &Path) -> Option<Summary> {
        let text = fs::read_to_string(dir.join(SUMMARY_FILE)).ok()?;
        serde_json::from_str(&text).ok()
    }

    pub fn save(&self, dir: &Path) -> Result<()> {
        let text = serde_json::to_string_pretty(self).map_err(|e| Error::Io(e.into()))?;
        fs::write(dir.join(SUMMARY_FILE), text + "\n")?;
        Ok(())
    }
}

/// Partition, strategy and optional posterior table derived from a config.
pub struct Workspace<'a> {
    pub config: &'a RunConfig,
    pub partition: StatePartition,
    pub strategy: Box<dyn BoundStrategy>,
    pub table: Option<PosteriorTable>,
}

impl<'a> Workspace<'a> {
    pub fn new(config: &'a RunConfig) -> Result<Self> {
        let partition = partition_domain(&config.domain, &config.resolution)?;
        let ctx = StrategyContext {
            model: config.model.clone(),
            noise: config.noise.clone(),
            noise_resolution: config.noise_resolution.clone(),
        };
        let strategy = StrategyRegistry::with_defaults().create(&config.strategy, &ctx)?;
        let table = config.posterior_table.as_deref().map(PosteriorTable::load).transpose()?;
        fs::create_dir_all(&config.output_dir)?;
        Ok(Workspace {
            config,
            partition,
            strategy,
            table,
        })
    }

    fn path(&self, name: &str) -> PathBuf {
        self.config.output_dir.join(name)
    }

    fn create(&self, name: &str) -> Result<BufWriter<File>> {
        Ok(BufWriter::new(File::create(self.path(name))?))
    }

    fn open(&self, name: &str, producer: &str) -> Result<BufReader<File>> {
        let p = self.path(name);
        File::open(&p).map(BufReader::new).map_err(|e| {
            Error::Input(format!("cannot open {} ({e}); run `{producer}` first", p.display()))
        })
    }

    /// Builds the IMC and writes `imc.csv` and `labels.csv`.
    pub fn abstraction(&self, summary: &mut Summary) -> Result<Imc> {
        let t = Instant::now();
        let imc = build_imc(&self.partition, self.strategy.as_ref(), &self.config.labels, self.table.as_ref())?;
        write_imc(&imc, self.create(IMC_FILE)?)?;
        write_labels(&imc, self.create(LABELS_FILE)?)?;
        let s = AbstractionSummary {
            strategy: self.strategy.name().to_string(),
            cells: self.partition.len(),
            states: imc.state_count(),
            transitions: imc.transition_count(),
            goal_states: imc.states_with(Label::Goal).len(),
            obstacle_states: imc.states_with(Label::Obstacle).len(),
            seconds: t.elapsed().as_secs_f64(),
        };
        info!("abstraction: {} states, {} transitions", s.states, s.transitions);
        summary.abstraction = Some(s);
        Ok(imc)
    }

    /// Reads the IMC written by an earlier abstraction run.
    pub fn load_imc(&self) -> Result<Imc> {
        let imc = read_imc(self.open(IMC_FILE, "abstract")?, self.open(LABELS_FILE, "abstract")?)?;
        if imc.state_count() != self.partition.state_count() {
            return Err(Error::Input(format!(
                "{IMC_FILE} has {} states but the configured grid needs {}; rerun `abstract`",
                imc.state_count(),
                self.partition.state_count()
            )));
        }
        Ok(imc)
    }

    /// Value iteration; writes `results.csv`.
    pub fn verification(&self, imc: &Imc, summary: &mut Summary) -> Result<VerificationResult> {
        let t = Instant::now();
        let result = robust_value_iteration(imc, &self.config.spec)?;
        write_results(&result, &self.partition, self.create(RESULTS_FILE)?)?;
        let s = VerificationSummary {
            iterations: result.iterations,
            converged: result.converged,
            threshold: result.threshold,
            classes: ClassBreakdown::of(&result, self.partition.len()),
            seconds: t.elapsed().as_secs_f64(),
        };
        info!(
            "verification: {} iterations, converged = {}, {} satisfy, {} violate",
            s.iterations, s.converged, s.classes.satisfies, s.classes.violates
        );
        summary.verification = Some(s);
        Ok(result)
    }

    /// Clustering passes on a copy of `result`; writes `results_improved.csv`.
    pub fn improvement(&self, imc: &Imc, result: &VerificationResult, summary: &mut Summary) -> Result<VerificationResult> {
        let t = Instant::now();
        let mut improved = result.clone();
        let report: ImproveReport = cluster_passes(
            imc,
            &self.partition,
            self.strategy.as_ref(),
            self.table.as_ref(),
            &self.config.spec,
            &mut improved,
            self.config.cluster_passes,
        )?;
        write_results(&improved, &self.partition, self.create(IMPROVED_FILE)?)?;
        info!("improvement: per pass {:?}", report.improved_per_pass);
        summary.improvement = Some(ImprovementSummary {
            passes_requested: self.config.cluster_passes,
            improved_per_pass: report.improved_per_pass,
            improved_states: report.improved_states,
            classes: ClassBreakdown::of(&improved, self.partition.len()),
            seconds: t.elapsed().as_secs_f64(),
        });
        Ok(improved)
    }

    /// Reads the most refined result table available on disk.
    pub fn load_results(&self) -> Result<VerificationResult> {
        let name = if self.config.cluster_passes > 0 && self.path(IMPROVED_FILE).exists() {
            IMPROVED_FILE
        } else {
            RESULTS_FILE
        };
        let r = read_results(self.open(name, "verify")?, self.config.spec.threshold)?;
        if r.state_count() != self.partition.state_count() {
            return Err(Error::Input(format!("{name} does not match the configured grid; rerun `verify`")));
        }
        Ok(r)
    }

    /// Monte Carlo validation; writes `validation.csv` and `trajectories.csv`.
    /// A no-op when the config has no validation section.
    pub fn validation(&self, result: &VerificationResult, summary: &mut Summary) -> Result<()> {
        let Some(v) = &self.config.validation else {
            return Ok(());
        };
        let t = Instant::now();
        let n = self.partition.len();
        let cells = match &v.cells {
            CellSelection::All => (0..n).collect(),
            CellSelection::Random(k) => pick_cells(n, *k, v.seed),
            CellSelection::List(l) => l.clone(),
        };
        let steps = match self.config.spec.horizon {
            Horizon::Finite(k) => k,
            Horizon::Unbounded => v.max_steps,
        };
        let sim = SimulationSpec {
            domain: self.config.domain.clone(),
            goal: self.config.labels.goal.clone(),
            obstacles: self.config.labels.obstacles.clone(),
            steps,
        };
        let settings = ValidationSettings {
            cells,
            samples: v.samples,
            confidence: v.confidence,
            seed: v.seed,
            keep: v.export_trajectories,
        };
        let (rows, kept) = validate_cells(&self.config.model, &self.config.noise, &self.partition, &sim, result, &settings)?;
        write_validation(&rows, self.create(VALIDATION_FILE)?)?;
        let trajectories: Vec<_> = kept.into_iter().map(|(_, t)| t).collect();
        write_trajectories(&trajectories, self.create(TRAJECTORIES_FILE)?)?;
        let consistent = rows.iter().filter(|r| r.consistent).count();
        info!("validation: {consistent}/{} cells consistent", rows.len());
        summary.validation = Some(ValidationSummary {
            samples: v.samples,
            confidence: v.confidence,
            seed: v.seed,
            cells_checked: rows.len(),
            consistent,
            verdicts: rows.iter().map(verdict).collect(),
            seconds: t.elapsed().as_secs_f64(),
        });
        Ok(())
    }
}

fn verdict(r: &CellValidation) -> CellVerdict {
    CellVerdict {
        cell: r.cell,
        estimate: r.estimate.estimate,
        ci_lower: r.estimate.ci_lower,
        ci_upper: r.estimate.ci_upper,
        verified_lower: r.verified_lower,
        verified_upper: r.verified_upper,
        consistent: r.consistent,
    }
}

/// Runs one phase against artifacts already on disk and merges its section
/// into the existing summary.
pub fn run_phase(config: &RunConfig, phase: Phase) -> Result<Summary> {
    let inner = || -> Result<Summary> {
        let ws = Workspace::new(config)?;
        let mut summary = Summary::load(&config.output_dir).unwrap_or_default();
        match phase {
            Phase::Abstract => {
                ws.abstraction(&mut summary)?;
            }
            Phase::Verify => {
                let imc = ws.load_imc()?;
                ws.verification(&imc, &mut summary)?;
            }
            Phase::Improve => {
                // finite horizons need the k-1 iterate, which is not exported
                let imc = ws.load_imc()?;
                let mut scratch = Summary::default();
                let result = ws.verification(&imc, &mut scratch)?;
                ws.improvement(&imc, &result, &mut summary)?;
            }
            Phase::Validate => {
                let result = ws.load_results()?;
                ws.validation(&result, &mut summary)?;
            }
        }
        summary.save(&config.output_dir)?;
        Ok(summary)
    };
    inner().map_err(|e| e.in_phase(phase.as_str()))
}

/// Full pipeline in memory. Clustering is skipped when no passes are
/// configured and validation when the config has no validation section.
pub fn run_pipeline(config: &RunConfig) -> Result<Summary> {
    let ws = Workspace::new(config).map_err(|e| e.in_phase("setup"))?;
    let mut summary = Summary::default();
    let imc = ws.abstraction(&mut summary).map_err(|e| e.in_phase("abstract"))?;
    let mut result = ws.verification(&imc, &mut summary).map_err(|e| e.in_phase("verify"))?;
    if config.cluster_passes > 0 {
        result = ws
            .improvement(&imc, &result, &mut summary)
            .map_err(|e| e.in_phase("improve"))?;
    }
    ws.validation(&result, &mut summary).map_err(|e| e.in_phase("validate"))?;
    summary.save(&config.output_dir)?;
    Ok(summary)
}

/// Process exit status for a pipeline outcome.
pub fn exit_code(outcome: &Result<Summary>) -> i32 {
    match outcome {
        Ok(_) => 0,
        Err(e) if e.is_soundness() => 2,
        Err(_) => 1,
    }
}
