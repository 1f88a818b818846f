//! End-to-end checks of the `platsim` binary: each subcommand is exercised
//! through a real process, and the simulation outputs are checked for
//! byte-level reproducibility.

use std::path::Path;
use std::process::{Command, Output};

fn platsim(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_platsim"))
        .args(args)
        .output()
        .expect("failed to spawn platsim")
}

fn stdout_of(args: &[&str]) -> String {
    let out = platsim(args);
    assert!(
        out.status.success(),
        "platsim {:?} failed: {}",
        args,
        String::from_utf8_lossy(&out.stderr)
    );
    String::from_utf8(out.stdout).unwrap()
}

const SCENARIO: &str = r#"
name = "cli_demo"
arms = 2
sample_size = 24
entry = [0, 24]
hypothesis = "alternative"
theta = 1.0
replications = 10
master_seed = 77

[trend]
pattern = "stepwise"
lambda = 0.1

[[methods]]
kind = "separate"

[[methods]]
kind = "pooled"
"#;

#[test]
fn calibrate_prints_the_analytic_solution() {
    let text = stdout_of(&["calibrate", "--d-expected", "1", "--d-maximum", "1.5"]);
    let mut lines = text.lines();
    assert_eq!(lines.next(), Some("a_tau,b_tau"));
    let row: Vec<f64> =
        lines.next().unwrap().split(',').map(|v| v.parse().unwrap()).collect();
    // a/b = 1 forces b = a here; the shape solves the 1% tail condition.
    assert!((row[0] - 11.562213390788964).abs() < 1e-9, "a_tau = {}", row[0]);
    assert_eq!(row[0], row[1]);

    let json: serde_json::Value = serde_json::from_str(&stdout_of(&[
        "calibrate",
        "--d-expected",
        "1",
        "--d-maximum",
        "1.5",
        "--format",
        "json",
    ]))
    .unwrap();
    assert!((json["a_tau"].as_f64().unwrap() - row[0]).abs() < 1e-12);
}

#[test]
fn bands_match_the_reference_interval() {
    let json: serde_json::Value = serde_json::from_str(&stdout_of(&[
        "bands",
        "--alpha",
        "0.025",
        "--replications",
        "10000",
        "--format",
        "json",
    ]))
    .unwrap();
    assert!((json["band_low"].as_f64().unwrap() - 0.021939950980784783).abs() < 1e-12);
    assert!((json["band_high"].as_f64().unwrap() - 0.028060049019215217).abs() < 1e-12);

    let degenerate = stdout_of(&["bands", "--alpha", "0", "--replications", "5"]);
    assert_eq!(degenerate.trim(), "band_low,band_high\n0,0");
}

#[test]
fn simulate_is_reproducible_across_runs_and_worker_counts() {
    let dir = tempfile::tempdir().unwrap();
    let config = dir.path().join("scenario.toml");
    std::fs::write(&config, SCENARIO).unwrap();
    let cfg = config.to_str().unwrap();

    let run = |out: &Path, workers: &str| {
        let out_s = out.to_str().unwrap().to_string();
        stdout_of(&["simulate", "--config", cfg, "--out", &out_s, "--workers", workers]);
        std::fs::read(out.join("decisions.csv")).unwrap()
    };
    let first = run(&dir.path().join("run1"), "1");
    let second = run(&dir.path().join("run2"), "1");
    let parallel = run(&dir.path().join("run3"), "3");
    assert_eq!(first, second, "same config must give identical decision logs");
    assert_eq!(first, parallel, "worker count must not change the decisions");

    // 10 replications x 2 arms x 2 methods, plus the header.
    let text = String::from_utf8(first).unwrap();
    assert_eq!(text.lines().count(), 41);

    // The --seed override must change the decisions file.
    let out4 = dir.path().join("run4");
    let out4_s = out4.to_str().unwrap().to_string();
    stdout_of(&[
        "simulate", "--config", cfg, "--out", &out4_s, "--seed", "78", "--reps", "10",
    ]);
    let reseeded = std::fs::read_to_string(out4.join("decisions.csv")).unwrap();
    assert_ne!(text, reseeded);
}

#[test]
fn simulate_without_an_output_directory_prints_the_results() {
    let dir = tempfile::tempdir().unwrap();
    let config = dir.path().join("scenario.toml");
    std::fs::write(&config, SCENARIO).unwrap();
    let cfg = config.to_str().unwrap();

    let csv = stdout_of(&["simulate", "--config", cfg, "--reps", "4"]);
    assert!(csv.starts_with("setting,arm,method,metric,value,replications,seed"));
    assert!(csv.contains("cli_demo,1,separate,rejection_rate,"));
    // 2 arms x 2 methods x 4 metrics, plus the header.
    assert_eq!(csv.lines().count(), 17);

    let json: serde_json::Value = serde_json::from_str(&stdout_of(&[
        "simulate", "--config", cfg, "--reps", "4", "--format", "json",
    ]))
    .unwrap();
    assert_eq!(json["setting"], "cli_demo");
    assert_eq!(json["completed"], 4);
    assert_eq!(json["results"].as_array().unwrap().len(), 4);
}

#[test]
fn aggregate_recovers_the_rates_reported_by_simulate() {
    let dir = tempfile::tempdir().unwrap();
    let config = dir.path().join("scenario.toml");
    std::fs::write(&config, SCENARIO).unwrap();
    let cfg = config.to_str().unwrap();
    let out = dir.path().join("run");
    let out_s = out.to_str().unwrap().to_string();
    stdout_of(&["simulate", "--config", cfg, "--out", &out_s]);

    let summary: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(out.join("summary.json")).unwrap())
            .unwrap();
    let decisions = out.join("decisions.csv");
    let decisions_s = decisions.to_str().unwrap();

    // One shard: rates and counts must match the simulate summary exactly.
    let single: serde_json::Value = serde_json::from_str(&stdout_of(&[
        "aggregate",
        decisions_s,
        "--format",
        "json",
    ]))
    .unwrap();
    let rate_of = |v: &serde_json::Value, arm: u64, method: &str| -> f64 {
        v.as_array()
            .unwrap()
            .iter()
            .find(|r| r["arm"] == arm && r["method"] == method)
            .unwrap_or_else(|| panic!("no row for arm {arm} {method}"))["rejection_rate"]
            .as_f64()
            .unwrap()
    };
    for arm in [1u64, 2] {
        for method in ["separate", "pooled"] {
            assert_eq!(
                rate_of(&single, arm, method),
                rate_of(&summary["results"], arm, method),
                "arm {arm} {method}"
            );
        }
    }

    // Two copies of the shard: twice the replications, identical rates.
    let doubled: serde_json::Value = serde_json::from_str(&stdout_of(&[
        "aggregate",
        decisions_s,
        decisions_s,
        "--format",
        "json",
    ]))
    .unwrap();
    assert_eq!(doubled[0]["completed"], 20);
    assert_eq!(
        rate_of(&doubled, 1, "separate"),
        rate_of(&single, 1, "separate")
    );
}

#[test]
fn analyze_applies_one_method_to_one_dataset() {
    // Single-period toy trial: control near 0, arm 1 near 2 — every sane
    // one-sided test at 2.5% rejects.
    let mut data = String::from("j,k,s,y\n");
    for i in 0..12 {
        data.push_str(&format!("{},0,1,{}\n", 2 * i + 1, 0.1 * (i as f64 - 5.5)));
        data.push_str(&format!("{},1,1,{}\n", 2 * i + 2, 2.0 + 0.1 * (i as f64 - 5.5)));
    }
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("toy.csv");
    std::fs::write(&path, data).unwrap();
    let path_s = path.to_str().unwrap();

    let text = stdout_of(&["analyze", "--data", path_s, "--method", "separate", "--arm", "1"]);
    let mut lines = text.lines();
    assert_eq!(lines.next(), Some("arm,method,estimate,statistic,p_or_prob,reject"));
    let row: Vec<&str> = lines.next().unwrap().split(',').collect();
    assert_eq!(row[0], "1");
    assert_eq!(row[1], "separate");
    assert!((row[2].parse::<f64>().unwrap() - 2.0).abs() < 1e-9);
    assert_eq!(row[5], "true");

    // With a single period, adjusting for period effects changes nothing.
    let regression: serde_json::Value = serde_json::from_str(&stdout_of(&[
        "analyze", "--data", path_s, "--method", "regression", "--arm", "1", "--format",
        "json",
    ]))
    .unwrap();
    assert!((regression["estimate"].as_f64().unwrap() - 2.0).abs() < 1e-9);
    assert_eq!(regression["reject"], true);

    // A Bayesian method driven by an explicit seed is reproducible.
    let tm = |seed: &str| {
        stdout_of(&[
            "analyze",
            "--data",
            path_s,
            "--method",
            "time_machine",
            "--arm",
            "1",
            "--seed",
            seed,
            "--iterations",
            "600",
            "--burn-in",
            "200",
        ])
    };
    assert_eq!(tm("5"), tm("5"));
    assert_ne!(tm("5"), tm("6"));
}

#[test]
fn bad_inputs_fail_with_a_nonzero_exit_and_a_reason() {
    let missing = platsim(&["simulate", "--config", "/nonexistent/scenario.toml"]);
    assert!(!missing.status.success());
    assert!(String::from_utf8_lossy(&missing.stderr).contains("/nonexistent/scenario.toml"));

    let dir = tempfile::tempdir().unwrap();
    let bad_field = dir.path().join("bad.toml");
    std::fs::write(&bad_field, SCENARIO.replace("arms = 2", "arms = 0")).unwrap();
    let invalid = platsim(&["simulate", "--config", bad_field.to_str().unwrap()]);
    assert!(!invalid.status.success());
    assert!(String::from_utf8_lossy(&invalid.stderr).contains("arms"));

    let unknown_method = dir.path().join("toy.csv");
    std::fs::write(&unknown_method, "j,k,s,y\n1,0,1,0.0\n2,1,1,1.0\n").unwrap();
    let bad_method = platsim(&[
        "analyze",
        "--data",
        unknown_method.to_str().unwrap(),
        "--method",
        "warp_drive",
        "--arm",
        "1",
    ]);
    assert!(!bad_method.status.success());
    assert!(String::from_utf8_lossy(&bad_method.stderr).contains("warp_drive"));

    let bad_alpha = platsim(&["bands", "--alpha", "1.5", "--replications", "100"]);
    assert!(!bad_alpha.status.success());
}
