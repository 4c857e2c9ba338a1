//! End-to-end tests of the `incseq` binary: reference invocations, JSON
//! summary shape, CSV artifacts, exit-code contract, and the output
//! directory environment override.

use serde_json::Value;
use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn out_dir(name: &str) -> PathBuf {
    let dir = Path::new(env!("CARGO_TARGET_TMPDIR")).join(name);
    fs::create_dir_all(&dir).unwrap();
    dir
}

fn run_in(dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_incseq"))
        .arg("--out-dir")
        .arg(dir)
        .args(args)
        .env_remove("INCSEQ_OUT_DIR")
        .output()
        .expect("binary launches")
}

fn stdout_json(output: &Output) -> Value {
    serde_json::from_slice(&output.stdout).expect("stdout is a JSON document")
}

#[test]
fn discrete_solve_reports_small_horizon_values() {
    let dir = out_dir("discrete-example");
    let out = run_in(
        &dir,
        &["discrete-solve", "--n-max", "100", "--grid", "2049"],
    );
    assert_eq!(out.status.code(), Some(0));
    let doc = stdout_json(&out);
    assert_eq!(doc["schema_version"], 1);
    assert_eq!(doc["command"], "discrete-solve");
    assert!(doc["seed"].is_null());
    assert_eq!(doc["config"]["n_max"], 100);
    assert_eq!(doc["config"]["grid"], 2049);
    assert_eq!(doc["status"], "pass");
    let v3 = doc["results"]["v_at_zero"][3].as_f64().unwrap();
    let exact = 3.0f64.sqrt() + 1.0 / 6.0;
    assert!((v3 - exact).abs() < 2.0e-4, "v_3 = {v3}");
    assert!(doc["diagnostics"]["max_second_difference"].is_number());
    // The summary file mirrors stdout byte for byte.
    let file = fs::read(dir.join("discrete-solve.json")).unwrap();
    assert_eq!(file, out.stdout);
}

#[test]
fn poisson_solve_emits_curve_from_origin() {
    let dir = out_dir("poisson-example");
    let out = run_in(&dir, &["poisson-solve", "--t-max", "10", "--emit-curve"]);
    assert_eq!(out.status.code(), Some(0));
    let doc = stdout_json(&out);
    let t1 = doc["results"]["critical_time"].as_f64().unwrap();
    assert!((t1 - 1.345_016_6).abs() < 1.0e-5, "critical time {t1}");
    let csv = fs::read_to_string(dir.join("poisson_curve.csv")).unwrap();
    let mut lines = csv.lines();
    assert_eq!(lines.next(), Some("t,u,threshold"));
    let first: Vec<f64> = lines
        .next()
        .unwrap()
        .split(',')
        .map(|c| c.parse().unwrap())
        .collect();
    assert_eq!(first[0], 0.0);
    assert_eq!(first[1], 0.0);
    assert_eq!(first[2], 1.0);
    assert_eq!(
        csv.lines().count() - 1,
        doc["diagnostics"]["nodes"].as_u64().unwrap() as usize
    );
}

#[test]
fn simulate_is_byte_identical_across_reruns() {
    let dir = out_dir("simulate-repeat");
    let args = [
        "simulate",
        "--model",
        "poisson",
        "--policy",
        "self-similar",
        "--alpha",
        "1.4142135",
        "--t",
        "100",
        "--reps",
        "500",
        "--seed",
        "42",
    ];
    let first = run_in(&dir, &args);
    let second = run_in(&dir, &args);
    assert_eq!(first.status.code(), Some(0));
    assert_eq!(second.status.code(), Some(0));
    assert!(!first.stdout.is_empty());
    assert_eq!(first.stdout, second.stdout);
    let doc = stdout_json(&first);
    assert_eq!(doc["seed"], 42);
    assert_eq!(doc["results"]["stats"]["model"], "poisson");
    assert_eq!(doc["results"]["stats"]["replicates"], 500);
}

#[test]
fn simulate_sweep_writes_rate_table() {
    let dir = out_dir("simulate-sweep");
    let out = run_in(
        &dir,
        &[
            "simulate",
            "--model",
            "poisson",
            "--policy",
            "self-similar",
            "--alphas",
            "1.0,1.5",
            "--t",
            "50",
            "--reps",
            "200",
            "--seed",
            "7",
        ],
    );
    assert_eq!(out.status.code(), Some(0));
    let doc = stdout_json(&out);
    let sweep = doc["results"]["sweep"].as_array().unwrap();
    assert_eq!(sweep.len(), 2);
    assert_eq!(sweep[0]["alpha"], 1.0);
    let csv = fs::read_to_string(dir.join("rate_sweep.csv")).unwrap();
    assert_eq!(
        csv.lines().next(),
        Some("alpha,rate,mean,variance,std_error")
    );
    assert_eq!(csv.lines().count(), 3);
}

#[test]
fn table_policies_run_at_small_sizes() {
    let dir = out_dir("simulate-tables");
    let out = run_in(
        &dir,
        &[
            "simulate",
            "--model",
            "fixed-n",
            "--policy",
            "table-optimal-discrete",
            "--n",
            "20",
            "--grid",
            "257",
            "--reps",
            "200",
            "--seed",
            "3",
        ],
    );
    assert_eq!(out.status.code(), Some(0));
    let doc = stdout_json(&out);
    assert!(doc["results"]["stats"]["mean"].as_f64().unwrap() > 3.0);

    let out = run_in(
        &dir,
        &[
            "simulate",
            "--model",
            "poisson",
            "--policy",
            "table-optimal-poisson",
            "--t",
            "5",
            "--reps",
            "200",
            "--seed",
            "3",
        ],
    );
    assert_eq!(out.status.code(), Some(0));
}

#[test]
fn oversized_value_table_is_a_config_error() {
    let dir = out_dir("simulate-table-cap");
    let out = run_in(
        &dir,
        &[
            "simulate",
            "--model",
            "fixed-n",
            "--policy",
            "table-optimal-discrete",
            "--n",
            "5000",
            "--reps",
            "10",
            "--seed",
            "1",
        ],
    );
    assert_eq!(out.status.code(), Some(3));
    let doc = stdout_json(&out);
    assert_eq!(doc["status"], "error");
    assert_eq!(doc["error"]["kind"], "config");
}

#[test]
fn usage_errors_use_a_distinct_exit_code() {
    let dir = out_dir("usage");
    // Missing a required flag.
    let out = run_in(
        &dir,
        &[
            "simulate",
            "--model",
            "poisson",
            "--policy",
            "greedy-records",
        ],
    );
    assert_eq!(out.status.code(), Some(2));
    // Unknown flag.
    let out = run_in(&dir, &["poisson-solve", "--t-max", "1", "--no-such-flag"]);
    assert_eq!(out.status.code(), Some(2));
    // Sweep flags outside the one supported mode.
    let out = run_in(
        &dir,
        &[
            "simulate",
            "--model",
            "fixed-n",
            "--policy",
            "self-similar",
            "--alphas",
            "1.0",
            "--n",
            "10",
            "--reps",
            "10",
            "--seed",
            "1",
        ],
    );
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn solver_rejection_reports_json_error() {
    let dir = out_dir("solver-error");
    let out = run_in(&dir, &["discrete-solve", "--n-max", "0"]);
    assert_eq!(out.status.code(), Some(3));
    let doc = stdout_json(&out);
    assert_eq!(doc["schema_version"], 1);
    assert_eq!(doc["command"], "discrete-solve");
    assert_eq!(doc["status"], "error");
    assert_eq!(doc["error"]["kind"], "invalid-input");
    assert!(doc["error"]["message"].as_str().unwrap().contains("n_max"));
}

#[test]
fn fit_band_gate_drives_exit_status() {
    let dir = out_dir("fit-csv");
    // Series with no logarithmic correction: the log estimate sits near
    // zero, outside the acceptance band, so the verdict fails.
    let mut flat = String::from("a,value\n");
    // Matching the expected shape, with and without the log term.
    let mut shaped = String::from("a,value\n");
    let mut a = 100.0f64;
    while a <= 1.0e5 {
        flat.push_str(&format!("{a},{}\n", (2.0 * a).sqrt()));
        shaped.push_str(&format!("{a},{}\n", (2.0 * a).sqrt() - a.ln() / 12.0 - 0.6));
        a *= 1.2;
    }
    let flat_path = dir.join("flat.csv");
    let shaped_path = dir.join("shaped.csv");
    fs::write(&flat_path, flat).unwrap();
    fs::write(&shaped_path, shaped).unwrap();

    let out = run_in(
        &dir,
        &[
            "fit",
            "--source",
            "csv",
            "--input",
            flat_path.to_str().unwrap(),
            "--window-lo",
            "100",
            "--window-hi",
            "100000",
        ],
    );
    assert_eq!(out.status.code(), Some(1));
    let doc = stdout_json(&out);
    assert_eq!(doc["status"], "fail");
    assert_eq!(doc["verdicts"]["log_coefficient_in_band"], false);

    let out = run_in(
        &dir,
        &[
            "fit",
            "--source",
            "csv",
            "--input",
            shaped_path.to_str().unwrap(),
            "--window-lo",
            "100",
            "--window-hi",
            "100000",
        ],
    );
    assert_eq!(out.status.code(), Some(0));
    let doc = stdout_json(&out);
    let log = doc["results"]["log_coefficient"].as_f64().unwrap();
    assert!((log + 1.0 / 12.0).abs() < 1.0e-6, "log estimate {log}");
}

#[test]
fn expansion_check_passes_for_matched_family() {
    let dir = out_dir("expansion");
    let out = run_in(
        &dir,
        &[
            "expansion-check",
            "--family",
            "discrete-order-1",
            "--sweep-hi",
            "10000",
            "--emit-points",
        ],
    );
    assert_eq!(out.status.code(), Some(0));
    let doc = stdout_json(&out);
    assert_eq!(doc["verdicts"]["expansion_bounded"], true);
    assert!(doc["verdicts"]["threshold_exact"].is_null());
    let csv = fs::read_to_string(dir.join("expansion_points.csv")).unwrap();
    assert_eq!(csv.lines().next(), Some("arg,z,raw,scaled,defect"));
    assert!(csv.lines().count() > 10);
}

#[test]
fn compare_and_bounds_pass_on_short_horizons() {
    let dir = out_dir("compare-bounds");
    let out = run_in(&dir, &["compare", "--n-max", "50", "--emit-gaps"]);
    assert_eq!(out.status.code(), Some(0));
    let doc = stdout_json(&out);
    assert_eq!(doc["verdicts"]["gap_nonnegative"], true);
    let csv = fs::read_to_string(dir.join("model_gaps.csv")).unwrap();
    assert_eq!(csv.lines().count(), 51);

    let out = run_in(
        &dir,
        &[
            "bounds-check",
            "--n-max",
            "50",
            "--grid",
            "1025",
            "--emit-bounds",
        ],
    );
    assert_eq!(out.status.code(), Some(0));
    let doc = stdout_json(&out);
    assert_eq!(doc["verdicts"]["all_hold"], true);
    let csv = fs::read_to_string(dir.join("bounds.csv")).unwrap();
    // Rows start at n = 2, where the lower bound first applies.
    assert_eq!(csv.lines().count(), 50);
}

#[test]
fn env_var_sets_default_output_directory() {
    let dir = out_dir("env-override");
    let out = Command::new(env!("CARGO_BIN_EXE_incseq"))
        .args(["discrete-solve", "--n-max", "5", "--grid", "129"])
        .env("INCSEQ_OUT_DIR", &dir)
        .output()
        .expect("binary launches");
    assert_eq!(out.status.code(), Some(0));
    assert!(dir.join("discrete-solve.json").is_file());
}
