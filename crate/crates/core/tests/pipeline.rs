use std::fs;
use std::path::Path;

use imcabs::config::{parse_config, RunConfig};
use imcabs::pipeline::{exit_code, run_phase, run_pipeline, Phase, Summary};
use imcabs::Error;

fn toy(dir: &Path, passes: usize, validation: bool) -> RunConfig {
    let mut text = format!(
        r#"
[domain]
lo = [0.0]
hi = [5.0]
resolution = [10]

[dynamics]
structure = "additive"
expressions = ["x1"]

[[noise]]
kind = "uniform"
lo = -0.5
hi = 0.5

[labels]
goal = [{{ lo = [4.0], hi = [5.0] }}]
obstacles = [{{ lo = [1.5], hi = [2.0] }}]

[cluster]
passes = {passes}

[output]
dir = "{}"
"#,
        dir.display()
    );
    if validation {
        text.push_str("\n[validation]\nsamples = 400\ncells = [0, 4, 7]\nseed = 11\nmax_steps = 500\n");
    }
    parse_config(&text, dir).unwrap()
}

fn read(dir: &Path, name: &str) -> String {
    fs::read_to_string(dir.join(name)).unwrap_or_else(|e| panic!("{name}: {e}"))
}

#[test]
fn toy_run_writes_all_artifacts() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = toy(tmp.path(), 0, false);
    let summary = run_pipeline(&cfg).unwrap();
    for f in ["imc.csv", "labels.csv", "results.csv", "summary.json"] {
        assert!(tmp.path().join(f).exists(), "{f} missing");
    }
    // header plus one row per cell and one for the unsafe sink
    assert_eq!(read(tmp.path(), "results.csv").lines().count(), 1 + 10 + 1);
    let a = summary.abstraction.unwrap();
    assert_eq!((a.cells, a.states), (10, 11));
    let v = summary.verification.unwrap();
    let c = v.classes;
    assert_eq!(c.satisfies + c.violates + c.undetermined, 10);
    assert!((c.fraction_satisfies + c.fraction_violates + c.fraction_undetermined - 1.0).abs() < 1e-12);
    assert!(summary.improvement.is_none() && summary.validation.is_none());
    assert!(!tmp.path().join("results_improved.csv").exists());
}

#[test]
fn cluster_passes_are_reported() {
    let tmp = tempfile::tempdir().unwrap();
    let summary = run_pipeline(&toy(tmp.path(), 2, false)).unwrap();
    let imp = summary.improvement.unwrap();
    assert_eq!(imp.passes_requested, 2);
    assert!(!imp.improved_per_pass.is_empty() && imp.improved_per_pass.len() <= 2);
    assert!(imp.improved_per_pass.iter().sum::<usize>() >= imp.improved_states.len());
    let saved = Summary::load(tmp.path()).unwrap();
    assert_eq!(saved.improvement.unwrap().improved_per_pass, imp.improved_per_pass);
}

#[test]
fn multiplicative_clustering_tightens_bounds() {
    let tmp = tempfile::tempdir().unwrap();
    let text = format!(
        r#"
[domain]
lo = [0.25, 0.25]
hi = [2.25, 2.25]
resolution = [10, 10]

[dynamics]
structure = "multiplicative"
expressions = ["0.7*x1 + 0.1*x2", "0.1*x1 + 0.8*x2"]

[[noise]]
kind = "truncated_gaussian"
mean = 1.0
stddev = 0.1
lo = 0.9
hi = 1.1

[[noise]]
kind = "truncated_gaussian"
mean = 1.0
stddev = 0.1
lo = 0.9
hi = 1.1

[labels]
goal = [{{ lo = [0.25, 0.25], hi = [0.65, 0.65] }}]

[cluster]
passes = 2

[output]
dir = "{}"
"#,
        tmp.path().display()
    );
    let summary = run_pipeline(&parse_config(&text, tmp.path()).unwrap()).unwrap();
    let imp = summary.improvement.unwrap();
    assert!(imp.improved_per_pass[0] > 0, "{:?}", imp.improved_per_pass);
    let base = imcabs::verify::read_results(fs::File::open(tmp.path().join("results.csv")).unwrap(), 0.9).unwrap();
    let better =
        imcabs::verify::read_results(fs::File::open(tmp.path().join("results_improved.csv")).unwrap(), 0.9).unwrap();
    for q in 0..base.state_count() {
        assert!(better.lower[q] >= base.lower[q] && better.upper[q] <= base.upper[q]);
    }
}

#[test]
fn validation_reports_cell_verdicts() {
    let tmp = tempfile::tempdir().unwrap();
    let summary = run_pipeline(&toy(tmp.path(), 1, true)).unwrap();
    let v = summary.validation.unwrap();
    assert_eq!(v.cells_checked, 3);
    assert_eq!(v.verdicts.iter().map(|r| r.cell).collect::<Vec<_>>(), vec![0, 4, 7]);
    assert_eq!(v.consistent, 3);
    for r in &v.verdicts {
        assert!(r.ci_lower <= r.estimate && r.estimate <= r.ci_upper);
    }
    assert_eq!(read(tmp.path(), "validation.csv").lines().count(), 4);
    assert!(read(tmp.path(), "trajectories.csv").starts_with("id,step,x1,termination\n"));
}

#[test]
fn later_phases_leave_earlier_outputs_alone() {
    let plain = tempfile::tempdir().unwrap();
    let full = tempfile::tempdir().unwrap();
    run_pipeline(&toy(plain.path(), 0, false)).unwrap();
    run_pipeline(&toy(full.path(), 2, true)).unwrap();
    for f in ["imc.csv", "labels.csv", "results.csv"] {
        assert_eq!(read(plain.path(), f), read(full.path(), f), "{f}");
    }
}

#[test]
fn phases_from_disk_match_the_full_run() {
    let staged = tempfile::tempdir().unwrap();
    let full = tempfile::tempdir().unwrap();
    let cfg = toy(staged.path(), 1, true);
    for p in [Phase::Abstract, Phase::Verify, Phase::Improve, Phase::Validate] {
        run_phase(&cfg, p).unwrap();
    }
    run_pipeline(&toy(full.path(), 1, true)).unwrap();
    for f in ["imc.csv", "labels.csv", "results.csv", "results_improved.csv", "validation.csv", "trajectories.csv"] {
        assert_eq!(read(staged.path(), f), read(full.path(), f), "{f}");
    }
    let s = Summary::load(staged.path()).unwrap();
    assert!(s.abstraction.is_some() && s.verification.is_some());
    assert!(s.improvement.is_some() && s.validation.is_some());
}

#[test]
fn verify_without_abstraction_is_an_input_error() {
    let tmp = tempfile::tempdir().unwrap();
    let out = run_phase(&toy(tmp.path(), 0, false), Phase::Verify);
    let err = out.as_ref().unwrap_err();
    assert!(err.to_string().starts_with("verify: "), "{err}");
    assert!(err.to_string().contains("run `abstract` first"), "{err}");
    assert_eq!(exit_code(&out), 1);
}

#[test]
fn soundness_failures_exit_with_two() {
    let out: imcabs::Result<Summary> = Err(Error::Soundness("lower above upper".into()).in_phase("improve"));
    assert_eq!(exit_code(&out), 2);
    assert_eq!(exit_code(&Ok(Summary::default())), 0);
}

#[test]
fn missing_posterior_table_is_reported_at_setup() {
    let tmp = tempfile::tempdir().unwrap();
    let mut cfg = toy(tmp.path(), 0, false);
    cfg.posterior_table = Some(tmp.path().join("nope.csv"));
    let out = run_pipeline(&cfg);
    assert!(out.as_ref().unwrap_err().to_string().starts_with("setup: "));
    assert_eq!(exit_code(&out), 1);
}
