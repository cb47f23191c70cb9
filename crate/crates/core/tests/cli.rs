use std::fs;
use std::path::Path;
use std::process::{Command, Output};

const CONFIG: &str = r#"
[domain]
lo = [0.0]
hi = [1.0]
resolution = [8]

[dynamics]
structure = "additive"
expressions = ["0.8 * x1 + 0.05"]

[[noise]]
kind = "truncated_gaussian"
mean = 0.0
stddev = 0.05
lo = -0.1
hi = 0.1

[labels]
goal = [{ lo = [0.0], hi = [0.375] }]

[spec]
horizon = 10

[validation]
samples = 200
cells = 3
seed = 5
"#;

fn imcabs(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_imcabs")).args(args).output().unwrap()
}

fn write_config(dir: &Path, text: &str) -> String {
    let p = dir.join("run.toml");
    fs::write(&p, text).unwrap();
    p.to_str().unwrap().to_string()
}

#[test]
fn run_with_output_override() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_config(tmp.path(), CONFIG);
    let out_dir = tmp.path().join("elsewhere");
    let out = imcabs(&["run", "--config", &cfg, "--output-dir", out_dir.to_str().unwrap(), "--threads", "2"]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    assert!(String::from_utf8_lossy(&out.stdout).contains("satisfies"));
    for f in ["imc.csv", "results.csv", "validation.csv", "trajectories.csv", "summary.json"] {
        assert!(out_dir.join(f).exists(), "{f}");
    }
    assert!(!tmp.path().join("out").exists());
}

#[test]
fn seed_override_changes_trajectories() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_config(tmp.path(), CONFIG);
    let traj = |seed: &str, name: &str| {
        let dir = tmp.path().join(name);
        let out = imcabs(&["run", "-c", &cfg, "-o", dir.to_str().unwrap(), "--seed", seed]);
        assert!(out.status.success());
        fs::read_to_string(dir.join("trajectories.csv")).unwrap()
    };
    let a = traj("1", "a");
    assert_eq!(a, traj("1", "b"));
    assert_ne!(a, traj("2", "c"));
}

#[test]
fn subcommands_chain_through_disk() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_config(tmp.path(), CONFIG);
    for sub in ["abstract", "verify", "improve", "simulate"] {
        let out = imcabs(&[sub, "-c", &cfg, "-v"]);
        assert!(out.status.success(), "{sub}: {}", String::from_utf8_lossy(&out.stderr));
    }
    let summary: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(tmp.path().join("out/summary.json")).unwrap()).unwrap();
    for key in ["abstraction", "verification", "improvement", "validation"] {
        assert!(summary.get(key).is_some(), "{key}");
    }
}

#[test]
fn input_errors_exit_with_one() {
    let tmp = tempfile::tempdir().unwrap();
    let bad = write_config(tmp.path(), &CONFIG.replace("horizon = 10", "horizon = 10\nthreshold = 1.5"));
    let out = imcabs(&["run", "-c", &bad]);
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).contains("spec.threshold"));

    let cfg = write_config(tmp.path(), CONFIG);
    let out = imcabs(&["verify", "-c", &cfg]);
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).contains("abstract"));

    let out = imcabs(&["run", "-c", tmp.path().join("missing.toml").to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(1));
}

#[test]
fn config_is_required() {
    let out = imcabs(&["run"]);
    assert!(!out.status.success());
    assert!(String::from_utf8_lossy(&out.stderr).contains("--config"));
}
