use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use ccil_core::experiments::AblationReport;
use ccil_core::labeler::read_labels;
use ccil_core::TrajectoryDataset;

fn ccil(dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_ccil"))
        .current_dir(dir)
        .args(args)
        .output()
        .expect("binary runs")
}

fn ok(dir: &Path, args: &[&str]) -> String {
    let out = ccil(dir, args);
    assert!(
        out.status.success(),
        "ccil {args:?} failed: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    String::from_utf8(out.stdout).unwrap()
}

fn fails(dir: &Path, args: &[&str]) -> String {
    let out = ccil(dir, args);
    assert!(!out.status.success(), "ccil {args:?} unexpectedly succeeded");
    String::from_utf8(out.stderr).unwrap()
}

fn demos(dir: &Path) {
    ok(dir, &["collect", "--env", "wallgrasp", "--n", "10", "--seed", "7", "--out", "demos.jsonl"]);
}

fn dynamics(dir: &Path) {
    ok(
        dir,
        &["train-dynamics", "--data", "demos.jsonl", "--seed", "1", "--cap", "4", "--epochs", "10", "--out", "dyn.json"],
    );
}

#[test]
fn collect_writes_requested_trajectories() {
    let tmp = tempfile::tempdir().unwrap();
    demos(tmp.path());
    let data = TrajectoryDataset::read_jsonl(&tmp.path().join("demos.jsonl")).unwrap();
    assert_eq!(data.num_trajectories(), 10);
}

#[test]
fn collect_is_deterministic_per_seed() {
    let tmp = tempfile::tempdir().unwrap();
    let d = tmp.path();
    ok(d, &["collect", "--env", "peg1d", "--n", "3", "--seed", "5", "--out", "a.jsonl"]);
    ok(d, &["collect", "--env", "peg1d", "--n", "3", "--seed", "5", "--out", "b.jsonl"]);
    ok(d, &["collect", "--env", "peg1d", "--n", "3", "--seed", "6", "--out", "c.jsonl"]);
    let a = fs::read(d.join("a.jsonl")).unwrap();
    assert_eq!(a, fs::read(d.join("b.jsonl")).unwrap());
    assert_ne!(a, fs::read(d.join("c.jsonl")).unwrap());
}

#[test]
fn gen_labels_accepts_requested_fraction() {
    let tmp = tempfile::tempdir().unwrap();
    let d = tmp.path();
    demos(d);
    dynamics(d);
    ok(d, &["gen-labels", "--model", "dyn.json", "--data", "demos.jsonl", "--quantile", "0.8", "--out", "labels.jsonl"]);
    let labels = read_labels(&d.join("labels.jsonl")).unwrap();
    let data = TrajectoryDataset::read_jsonl(&d.join("demos.jsonl")).unwrap();
    assert_eq!(labels.len(), data.len());
    let accepted = labels.iter().filter(|l| l.accepted).count() as f64;
    assert!((accepted - 0.8 * labels.len() as f64).abs() <= 1.0, "accepted {accepted} of {}", labels.len());
}

#[test]
fn full_pipeline_runs_and_leaves_inputs_untouched() {
    let tmp = tempfile::tempdir().unwrap();
    let d = tmp.path();
    demos(d);
    dynamics(d);
    let demos_before = fs::read(d.join("demos.jsonl")).unwrap();
    let dyn_before = fs::read(d.join("dyn.json")).unwrap();

    ok(d, &["analyze-continuity", "--model", "dyn.json", "--data", "demos.jsonl", "--out", "cont"]);
    for f in ["continuity.json", "lipschitz.csv", "label_cdf.csv", "lipschitz_hist.csv"] {
        assert!(d.join("cont").join(f).is_file(), "missing {f}");
    }
    ok(d, &["gen-labels", "--model", "dyn.json", "--data", "demos.jsonl", "--threshold", "0.05", "--out", "labels.jsonl"]);
    let labels_before = fs::read(d.join("labels.jsonl")).unwrap();
    ok(
        d,
        &["train-policy", "--data", "demos.jsonl", "--labels", "labels.jsonl", "--seed", "2", "--epochs", "10", "--out", "pol.json"],
    );
    let stdout = ok(d, &["evaluate", "--env", "wallgrasp", "--policy", "pol.json", "--trials", "32", "--noise", "0.01", "--seed", "3", "--out", "eval.json"]);
    assert!(stdout.contains("/ 32 successes"), "{stdout}");
    let eval: serde_json::Value = serde_json::from_str(&fs::read_to_string(d.join("eval.json")).unwrap()).unwrap();
    assert_eq!(eval["trials"], 32);

    assert_eq!(fs::read(d.join("demos.jsonl")).unwrap(), demos_before);
    assert_eq!(fs::read(d.join("dyn.json")).unwrap(), dyn_before);
    assert_eq!(fs::read(d.join("labels.jsonl")).unwrap(), labels_before);
}

#[test]
fn expert_evaluation_without_noise_succeeds() {
    let tmp = tempfile::tempdir().unwrap();
    let stdout = ok(tmp.path(), &["evaluate", "--env", "wallgrasp", "--expert", "--seed", "1"]);
    assert!(stdout.starts_with("48 / 48"), "{stdout}");
}

#[test]
fn stochastic_commands_require_seed() {
    let tmp = tempfile::tempdir().unwrap();
    let d = tmp.path();
    let cases: [&[&str]; 5] = [
        &["collect", "--env", "wallgrasp", "--n", "2", "--out", "x.jsonl"],
        &["train-dynamics", "--data", "demos.jsonl", "--out", "dyn.json"],
        &["train-policy", "--data", "demos.jsonl", "--out", "pol.json"],
        &["evaluate", "--env", "wallgrasp", "--expert"],
        &["ablate", "--config", "grid.json", "--out", "report"],
    ];
    for args in cases {
        let err = fails(d, args);
        assert!(err.contains("--seed"), "{args:?}: {err}");
    }
    assert!(!d.join("x.jsonl").exists());
}

#[test]
fn errors_have_distinct_messages() {
    let tmp = tempfile::tempdir().unwrap();
    let d = tmp.path();
    demos(d);
    dynamics(d);
    fs::write(d.join("broken.json"), "{\"format\": \"ccil-model\"").unwrap();

    let unknown_flag = fails(d, &["collect", "--env", "wallgrasp", "--n", "2", "--seed", "1", "--out", "x", "--bogus"]);
    let missing = fails(d, &["gen-labels", "--model", "nope.json", "--data", "demos.jsonl", "--quantile", "0.5", "--out", "l.jsonl"]);
    let wrong_kind = fails(d, &["gen-labels", "--model", "demos.jsonl", "--data", "demos.jsonl", "--quantile", "0.5", "--out", "l.jsonl"]);
    let broken = fails(d, &["gen-labels", "--model", "broken.json", "--data", "demos.jsonl", "--quantile", "0.5", "--out", "l.jsonl"]);
    let not_policy = fails(d, &["evaluate", "--env", "wallgrasp", "--policy", "dyn.json", "--seed", "1"]);
    let bad_env = fails(d, &["collect", "--env", "moon", "--n", "2", "--seed", "1", "--out", "x"]);
    let overwrite = fails(d, &["gen-labels", "--model", "dyn.json", "--data", "demos.jsonl", "--quantile", "0.5", "--out", "demos.jsonl"]);
    let no_rule = fails(d, &["gen-labels", "--model", "dyn.json", "--data", "demos.jsonl", "--out", "l.jsonl"]);

    assert!(unknown_flag.contains("--bogus"));
    assert!(missing.contains("not found"));
    assert!(wrong_kind.contains("malformed"));
    assert!(broken.contains("malformed"));
    assert!(not_policy.contains("expected a policy model"));
    assert!(bad_env.contains("unknown environment"));
    assert!(overwrite.contains("overwrite"));
    assert!(no_rule.contains("--quantile"));
    let all = [&unknown_flag, &missing, &wrong_kind, &broken, &not_policy, &bad_env, &overwrite, &no_rule];
    for (i, a) in all.iter().enumerate() {
        for b in &all[i + 1..] {
            assert_ne!(a, b);
        }
    }
    assert!(!d.join("l.jsonl").exists());
}

const GRID: &str = r#"{
  "env": "wallgrasp",
  "data_sizes": [2],
  "quantiles": [0.0, 0.5, 1.0],
  "caps": [2.0, "inf"],
  "trials": 32,
  "replicates": [0],
  "noise_scale": 0.01,
  "dynamics": {"train": {"epochs": 5}},
  "policy": {"train": {"epochs": 5}}
}"#;

#[test]
fn ablate_emits_report_directory_and_is_reproducible() {
    let tmp = tempfile::tempdir().unwrap();
    let d = tmp.path();
    fs::write(d.join("grid.json"), GRID).unwrap();
    ok(d, &["ablate", "--config", "grid.json", "--out", "r1", "--seed", "11"]);
    ok(d, &["ablate", "--config", "grid.json", "--out", "r2", "--seed", "11", "--jobs", "3"]);
    let r1 = fs::read(d.join("r1/report.json")).unwrap();
    assert_eq!(r1, fs::read(d.join("r2/report.json")).unwrap());
    assert_eq!(fs::read_to_string(d.join("grid.json")).unwrap(), GRID);

    let report = AblationReport::load(&d.join("r1/report.json")).unwrap();
    assert_eq!(report.config.master_seed, 11);
    let cells = fs::read_to_string(d.join("r1/cells.csv")).unwrap();
    assert_eq!(cells.lines().count(), 1 + 3 * 2);
    assert_eq!(fs::read_dir(d.join("r1/cdf")).unwrap().count(), 2);
    assert_eq!(fs::read_dir(d.join("r1/hist")).unwrap().count(), 2);

    let summary = ok(d, &["report", "--input", "r1/report.json", "--out", "r3"]);
    assert!(summary.contains("independent"), "{summary}");
    assert_eq!(fs::read(d.join("r3/cells.csv")).unwrap(), cells.as_bytes());

    ok(d, &["ablate", "--config", "grid.json", "--out", "r4", "--seed", "12"]);
    assert_ne!(r1, fs::read(d.join("r4/report.json")).unwrap());
}

#[test]
fn ablate_rejects_invalid_grid() {
    let tmp = tempfile::tempdir().unwrap();
    let d = tmp.path();
    fs::write(d.join("grid.json"), GRID.replace("\"trials\": 32", "\"trials\": 10")).unwrap();
    let err = fails(d, &["ablate", "--config", "grid.json", "--out", "r", "--seed", "1"]);
    assert!(err.contains("30 trials"), "{err}");
    fs::write(d.join("grid.json"), GRID.replace("[0.0, 0.5, 1.0]", "[]")).unwrap();
    let err = fails(d, &["ablate", "--config", "grid.json", "--out", "r", "--seed", "1"]);
    assert!(err.contains("non-empty"), "{err}");
    assert!(!d.join("r").exists());
}
