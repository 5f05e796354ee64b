use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use serde_json::Value;

fn workspace() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../..")
}

fn ringstab(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_ringstab"))
        .args(args)
        .current_dir(workspace())
        .env_remove("RINGSTAB_JOBS")
        .output()
        .expect("binary runs")
}

fn stdout_json(output: &Output) -> Value {
    serde_json::from_slice(&output.stdout).unwrap_or_else(|e| {
        panic!("stdout is not JSON ({e}); stderr: {}", String::from_utf8_lossy(&output.stderr))
    })
}

fn check_schema(command: &str, document: &Value) {
    let path = workspace().join("schemas").join(format!("{command}.schema.json"));
    let schema: Value = serde_json::from_str(&std::fs::read_to_string(&path).unwrap()).unwrap();
    let validator = jsonschema::validator_for(&schema).expect("schema compiles");
    let errors: Vec<String> = validator.iter_errors(document).map(|e| format!("{} at {}", e, e.instance_path())).collect();
    assert!(errors.is_empty(), "{command} output violates its schema: {errors:#?}");
}

fn run_ok(args: &[&str]) -> Value {
    let output = ringstab(args);
    assert_eq!(
        output.status.code(),
        Some(0),
        "{args:?} failed: {}",
        String::from_utf8_lossy(&output.stderr)
    );
    let json = stdout_json(&output);
    check_schema(args[0], &json);
    json
}

fn write_config(dir: &Path, name: &str, text: &str) -> String {
    let path = dir.join(name);
    std::fs::write(&path, text).unwrap();
    path.to_str().unwrap().to_string()
}

#[test]
fn analyze_reports_two_cell_loads() {
    let json = run_ok(&["analyze", "--config", "configs/two_cell.json"]);
    let rho: Vec<f64> = serde_json::from_value(json["rho"].clone()).unwrap();
    assert!((rho[0] - 57.0 / 70.0).abs() < 1e-12);
    assert!((rho[1] - 51.0 / 70.0).abs() < 1e-12);
    assert_eq!(json["stability"]["verdict"], "Stable");
}

#[test]
fn region_writes_boundary_sidecar() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().to_str().unwrap();
    run_ok(&["region", "--config", "configs/two_cell.json", "--out", out]);
    let csv = std::fs::read_to_string(dir.path().join("region_boundary.csv")).unwrap();
    assert!(csv.lines().count() > 10);
}

#[test]
fn every_simulation_model_matches_the_schema() {
    for model in ["ring", "ring-legacy", "mcn"] {
        let json = run_ok(&["simulate", "--config", "configs/two_cell.json", "--horizon", "3000", "--model", model]);
        assert_eq!(json["model"], model);
    }
}

#[test]
fn simulate_writes_one_trajectory_per_replication() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().to_str().unwrap();
    let args = [
        "simulate", "--config", "configs/two_cell.json", "--horizon", "2000", "--replications", "3", "--seed", "5",
        "--out", out,
    ];
    let json = run_ok(&args);
    assert_eq!(json["runs"].as_array().unwrap().len(), 3);
    for seed in 5..8 {
        assert!(dir.path().join(format!("trajectory_seed{seed}.csv")).exists());
    }
}

#[test]
fn output_is_deterministic_across_runs_and_thread_counts() {
    let base = [
        "simulate", "--config", "configs/two_cell.json", "--horizon", "4000", "--replications", "4", "--seed", "3",
    ];
    let first = ringstab(&[&base[..], &["--jobs", "1"]].concat());
    let second = ringstab(&[&base[..], &["--jobs", "3"]].concat());
    let third = ringstab(&base);
    assert!(first.status.success());
    assert_eq!(first.stdout, second.stdout);
    assert_eq!(first.stdout, third.stdout);

    let other = ringstab(&[&base[..7], &["--seed", "4"]].concat());
    assert_ne!(first.stdout, other.stdout);
}

#[test]
fn jobs_fall_back_to_the_environment() {
    let args = ["couple", "--config", "configs/two_cell.json", "--horizon", "2000", "--replications", "2"];
    let with_env = Command::new(env!("CARGO_BIN_EXE_ringstab"))
        .args(args)
        .current_dir(workspace())
        .env("RINGSTAB_JOBS", "2")
        .output()
        .unwrap();
    assert!(with_env.status.success());
    assert_eq!(with_env.stdout, ringstab(&args).stdout);

    let zero = Command::new(env!("CARGO_BIN_EXE_ringstab"))
        .args(args)
        .current_dir(workspace())
        .env("RINGSTAB_JOBS", "0")
        .output()
        .unwrap();
    assert_eq!(zero.status.code(), Some(1));
}

#[test]
fn couplings_pass() {
    let json = run_ok(&["couple", "--config", "configs/two_cell.json", "--seed", "7", "--horizon", "100000"]);
    assert_eq!(json["coupling"], "ring-network");
    assert_eq!(json["passed"], true);
    let json = run_ok(&["couple", "--config", "configs/two_cell.json", "--horizon", "20000", "--model", "ring-legacy"]);
    assert_eq!(json["coupling"], "legacy-current");
    assert_eq!(json["passed"], true);
}

#[test]
fn fluid_runs_drain() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().to_str().unwrap();
    let json = run_ok(&["fluid", "--config", "configs/two_cell_fluid.json", "--replications", "4", "--out", out]);
    assert_eq!(json["passed"], true);
    assert!(dir.path().join("fluid_seed0.csv").exists());
}

#[test]
fn impossible_fluid_tolerance_is_a_check_failure() {
    let dir = tempfile::tempdir().unwrap();
    let config = write_config(
        dir.path(),
        "strict.json",
        r#"{"L": 2, "p": [0.3, 0.3], "q": [[0.75, 0.75], [0.5, 0.5]], "entry_mass": [200, 200],
            "tolerances": {"slope": 1e-9, "min_busy_length": 0.0}}"#,
    );
    let output = ringstab(&["fluid", "--config", &config, "--replications", "2"]);
    assert_eq!(output.status.code(), Some(2), "{}", String::from_utf8_lossy(&output.stderr));
    let json = stdout_json(&output);
    check_schema("fluid", &json);
    assert_eq!(json["passed"], false);
}

#[test]
fn transient_prediction_matches_simulation() {
    let json = run_ok(&[
        "transient", "--config", "configs/single_cell_unstable.json", "--horizon", "200000", "--replications", "2",
    ]);
    assert_eq!(json["verdict"], "Unstable");
    let predicted = json["comparison"]["predicted"][0].as_f64().unwrap();
    let observed = json["comparison"]["mean_slope"][0].as_f64().unwrap();
    assert!((predicted - (0.46 - 3.0 / 7.0)).abs() < 1e-9);
    assert!((observed - predicted).abs() < 0.01, "{observed} vs {predicted}");
}

#[test]
fn slotted_mapping_for_three_stations() {
    let json = run_ok(&["slotted-map", "--config", "configs/slotted_3x2.json", "--horizon", "20000"]);
    let mapping = &json["mapping"];
    assert_eq!(mapping["L"], 6);
    assert_eq!(mapping["m"], 3);
    assert_eq!(mapping["k"], 2);
    assert!((mapping["threshold"].as_f64().unwrap() - 1.0 / 3.0).abs() < 1e-12);
    assert_eq!(json["equivalence"]["phantom_violations"], 0);
    run_ok(&["slotted-map", "--config", "configs/slotted_swap.json"]);
}

#[test]
fn invalid_input_exits_with_one() {
    let dir = tempfile::tempdir().unwrap();
    let mismatch = write_config(dir.path(), "mismatch.json", r#"{"L": 2, "p": [0.2], "q": [[0.5, 0.5], [0.5, 0.5]]}"#);
    let unknown = write_config(dir.path(), "unknown.json", r#"{"L": 1, "p": [0.2], "q": [[0.5]], "horizn": 10}"#);
    let missing = dir.path().join("absent.json");
    for args in [
        vec!["analyze", "--config", mismatch.as_str()],
        vec!["analyze", "--config", unknown.as_str()],
        vec!["analyze", "--config", missing.to_str().unwrap()],
        vec!["couple", "--config", "configs/two_cell.json", "--model", "mcn"],
        vec!["analyze", "--config", "configs/slotted_swap.json"],
        vec!["frobnicate"],
    ] {
        let output = ringstab(&args);
        assert_eq!(output.status.code(), Some(1), "{args:?}");
        assert!(output.stdout.is_empty(), "{args:?}");
    }
    assert_eq!(ringstab(&["--help"]).status.code(), Some(0));
}
