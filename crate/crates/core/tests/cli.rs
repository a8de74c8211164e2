use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use serde_json::Value;

fn bin(args: &[&str], dir: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_carnot-ou"))
        .args(args)
        .current_dir(dir)
        .output()
        .expect("binary runs")
}

fn json(out: &Output) -> Value {
    serde_json::from_slice(&out.stdout).expect("stdout is JSON")
}

fn error_code(out: &Output) -> String {
    let v: Value = serde_json::from_slice(&out.stderr).expect("stderr is JSON");
    v["error"].as_str().unwrap().to_string()
}

fn repo() -> &'static Path {
    Path::new(concat!(env!("CARGO_MANIFEST_DIR"), "/../.."))
}

#[test]
fn constants_for_heisenberg_spec_file() {
    let out = bin(&["--spec", "specs/heisenberg.json", "constants", "--eps", "2"], repo());
    assert_eq!(out.status.code(), Some(0));
    let v = json(&out);
    assert_eq!(v["kappa"], 1.0);
    assert_eq!(v["rho2"], 0.5);
    assert_eq!(v["lambda"], 0.5);
    assert!((v["C_over_e"].as_f64().unwrap() - 25.0).abs() < 1e-12);
}

#[test]
fn constants_optimizer_plan() {
    let out = bin(&["constants", "--opt-time", "10"], repo());
    let plan = &json(&out)["plan"];
    let lambda = plan["lambda"].as_f64().unwrap();
    assert!(lambda > 0.5 && lambda < 1.0);
    assert!(plan["prefactor"].as_f64().unwrap() > std::f64::consts::E);
}

#[test]
fn missing_spec_is_exit_2_with_code() {
    let dir = tempfile::tempdir().unwrap();
    let out = bin(&["--spec", "nope.json", "constants"], dir.path());
    assert_eq!(out.status.code(), Some(2));
    assert_eq!(error_code(&out), "SpecNotFound");
}

#[test]
fn invalid_spec_reports_validation_code() {
    let dir = tempfile::tempdir().unwrap();
    fs::write(
        dir.path().join("bad.json"),
        r#"{"name": "bad", "n": 2, "m": 1, "B": [[[0, 1], [1, 0]]]}"#,
    )
    .unwrap();
    let out = bin(&["--spec", "bad.json", "constants"], dir.path());
    assert_eq!(out.status.code(), Some(2));
    assert_eq!(error_code(&out), "SkewSymmetryViolation");
}

#[test]
fn bad_flags_are_exit_2() {
    let out = bin(&["constants", "--no-such-flag"], repo());
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn decay_writes_four_rows_and_is_reproducible() {
    let dir = tempfile::tempdir().unwrap();
    let args = ["--seed", "11", "decay", "--f", "x1", "--times", "0,0.5,1,2", "--paths", "2000", "--inner", "100"];
    let a = bin(&args, dir.path());
    let b = bin(&args, dir.path());
    assert_eq!(a.status.code(), Some(0));
    assert_eq!(a.stdout, b.stdout);
    let mut reader = csv::Reader::from_reader(a.stdout.as_slice());
    assert_eq!(reader.headers().unwrap(), vec!["t", "value", "ci", "bound", "slack"]);
    let rows: Vec<Vec<f64>> = reader
        .records()
        .map(|r| r.unwrap().iter().map(|v| v.parse().unwrap()).collect())
        .collect();
    assert_eq!(rows.len(), 4);
    for w in rows.windows(2) {
        assert!(w[1][1] - w[0][1] <= w[0][2].hypot(w[1][2]));
    }
}

#[test]
fn decay_rejects_unsorted_times() {
    let out = bin(&["decay", "--f", "x1", "--times", "1,0.5"], repo());
    assert_eq!(out.status.code(), Some(2));
    assert_eq!(error_code(&out), "UnsortedTimes");
}

#[test]
fn distance_exact_and_bracketed() {
    let out = bin(&["distance", "--from", "0,0,0", "--to", "3,4,0"], repo());
    let v = json(&out);
    assert_eq!(v["value"], 5.0);
    assert_eq!(v["method"], "heisenberg-exact");
    let out = bin(
        &["--spec", "specs/heisenberg2.json", "distance", "--from", "0,0,0,0,0,0", "--to", "1,0,0,0,0.5,0"],
        repo(),
    );
    let v = json(&out);
    assert!(v["lower"].as_f64().unwrap() <= v["upper"].as_f64().unwrap());
    assert_eq!(v["method"], "homogeneous-bounds");
}

#[test]
fn distance_rejects_wrong_shape() {
    let out = bin(&["distance", "--from", "0,0", "--to", "1,2,3"], repo());
    assert_eq!(out.status.code(), Some(2));
    assert_eq!(error_code(&out), "PointShape");
}

#[test]
fn check_exit_codes() {
    let dir = tempfile::tempdir().unwrap();
    fs::write(dir.path().join("empty.json"), r#"{"seed": 1, "checks": []}"#).unwrap();
    let out = bin(&["check", "empty.json"], dir.path());
    assert_eq!(out.status.code(), Some(0));
    assert_eq!(json(&out), Value::Array(vec![]));

    fs::write(dir.path().join("noseed.json"), r#"{"checks": []}"#).unwrap();
    let out = bin(&["check", "noseed.json"], dir.path());
    assert_eq!(out.status.code(), Some(2));
    assert_eq!(error_code(&out), "InvalidScenario");

    let out = bin(&["check", "scenarios/mutated-rho1.json"], repo());
    assert_eq!(out.status.code(), Some(1));
    assert_eq!(json(&out)[0]["verdict"], "violated");
}

#[test]
fn check_writes_csv_and_slack_rows() {
    let dir = tempfile::tempdir().unwrap();
    fs::write(
        dir.path().join("s.json"),
        r#"{
            "seed": 9,
            "sim": {"paths": 500, "inner_paths": 20},
            "checks": [
                {"name": "poincare", "f": "x1 + x2*z1", "t": 0.5, "x": [0.1, 0.2, 0.3], "epsilon": 2.0},
                {"name": "cd-slack", "corpus": {"samples": 50}}
            ],
            "outputs": {"csv": "summary.csv", "slack_csv": "slack.csv", "report": "report.json"}
        }"#,
    )
    .unwrap();
    let out = bin(&["check", "s.json"], dir.path());
    assert_eq!(out.status.code(), Some(0));
    let summary = fs::read_to_string(dir.path().join("summary.csv")).unwrap();
    let lines: Vec<&str> = summary.lines().collect();
    assert_eq!(lines[0], "name,t,lhs,rhs,slack,ci,verdict");
    assert!(lines[1].starts_with("cd-slack,"));
    assert!(lines[2].starts_with("poincare,"));
    let slack = fs::read_to_string(dir.path().join("slack.csv")).unwrap();
    assert_eq!(slack.lines().count(), 51);
    let report: Value = serde_json::from_str(&fs::read_to_string(dir.path().join("report.json")).unwrap()).unwrap();
    assert_eq!(report, json(&out));
}

#[test]
fn simulate_outputs() {
    let dir = tempfile::tempdir().unwrap();
    let out = bin(&["simulate", "--kind", "heat", "--t", "0.5", "--paths", "5"], dir.path());
    let text = String::from_utf8(out.stdout).unwrap();
    assert_eq!(text.lines().count(), 6);
    assert!(text.starts_with("x1,x2,z1"));

    let out = bin(&["simulate", "--kind", "mehler", "--f", "x1", "--x", "1,0,0", "--t", "1", "--paths", "2000"], dir.path());
    let v = json(&out);
    let mean = v["mean"].as_f64().unwrap();
    assert!((mean - (-1.0f64).exp()).abs() <= v["half_width"].as_f64().unwrap().max(1e-12));

    let out = bin(&["simulate", "--kind", "sde", "--x", "1,0,0"], dir.path());
    assert_eq!(out.status.code(), Some(2));
    assert_eq!(error_code(&out), "MissingArgument");
}

#[test]
fn out_flag_writes_file() {
    let dir = tempfile::tempdir().unwrap();
    let out = bin(&["--out", "c.json", "constants"], dir.path());
    assert_eq!(out.status.code(), Some(0));
    assert!(out.stdout.is_empty());
    let v: Value = serde_json::from_str(&fs::read_to_string(dir.path().join("c.json")).unwrap()).unwrap();
    assert_eq!(v["kappa"], 1.0);
}
