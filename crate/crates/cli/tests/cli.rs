use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use tempfile::TempDir;
use wassopt::dro::{DroInstance, DroSolution};
use wassopt::gaussian::{self, KlBallInstance, KlBallSolution};
use wassopt::ot;

fn bin() -> Command {
    let mut cmd = Command::new(env!("CARGO_BIN_EXE_wassopt"));
    cmd.env_remove("WASSOPT_THREADS");
    cmd
}

fn write(dir: &TempDir, name: &str, body: &str) -> PathBuf {
    let path = dir.path().join(name);
    std::fs::write(&path, body).unwrap();
    path
}

fn run(args: &[&str], input: Option<&Path>) -> Output {
    let mut cmd = bin();
    cmd.args(args);
    if let Some(p) = input {
        cmd.arg("--in").arg(p);
    }
    cmd.output().unwrap()
}

fn stdout(out: &Output) -> String {
    String::from_utf8(out.stdout.clone()).unwrap()
}

fn stderr(out: &Output) -> String {
    String::from_utf8(out.stderr.clone()).unwrap()
}

const PAIR: &str = r#"{
  "mu": {"type": "discrete", "atoms": [[0.0, 1.0], [2.0, 0.5]], "weights": [0.5, 0.5]},
  "nu": {"type": "discrete", "atoms": [[0.0, 1.0], [2.0, 0.5]], "weights": [0.5, 0.5]}
}"#;

const LINEAR_DRO: &str = r#"{
  "kind": "linear", "w": [3.0, 4.0], "eps": 1.0,
  "center": {"type": "discrete", "atoms": [[0.0, 0.0]], "weights": [1.0]}
}"#;

const MEAN_VARIANCE_DRO: &str = r#"{
  "kind": "mean_variance", "w": [1.0, -0.5], "rho": 0.8, "eps": 0.4,
  "center": {"type": "discrete", "atoms": [[0.0, 0.0], [1.0, 2.0], [-1.0, 0.5], [0.3, -0.7]], "weights": [0.25, 0.25, 0.25, 0.25]}
}"#;

const KL_BALL: &str = r#"{
  "prior": {"type": "gaussian", "mean": [0.0, 0.0], "cov": [[1.0, 0.2], [0.2, 0.5]]},
  "reference": {"type": "gaussian", "mean": [2.0, -1.0], "cov": [[2.0, 0.0], [0.0, 1.0]]},
  "eps": 1.0
}"#;

#[test]
fn distance_between_identical_measures_is_zero() {
    let dir = TempDir::new().unwrap();
    let out = run(&["ot", "distance"], Some(&write(&dir, "pair.json", PAIR)));
    assert_eq!(out.status.code(), Some(0), "{}", stderr(&out));
    let d: f64 = stdout(&out).trim().parse().unwrap();
    assert_eq!(d, 0.0);
}

#[test]
fn plan_as_csv() {
    let dir = TempDir::new().unwrap();
    let out = run(&["ot", "plan", "--format", "csv"], Some(&write(&dir, "pair.json", PAIR)));
    assert_eq!(out.status.code(), Some(0));
    let text = stdout(&out);
    let mut lines = text.lines();
    assert_eq!(lines.next(), Some("i,j,mass"));
    let rows: Vec<&str> = lines.collect();
    assert_eq!(rows.len(), 2);
    assert!(rows[0].starts_with("0,0,5.0000000000000000e-1"));
}

#[test]
fn linear_dro_round_trip() {
    let dir = TempDir::new().unwrap();
    let path = write(&dir, "dro.json", LINEAR_DRO);
    let out = run(&["dro", "solve"], Some(&path));
    assert_eq!(out.status.code(), Some(0), "{}", stderr(&out));
    let json: serde_json::Value = serde_json::from_str(&stdout(&out)).unwrap();
    assert_eq!(json["worst_value"].as_f64(), Some(5.0));
    assert_eq!(json["certificate"]["verdict"], "strict_min");

    let sol: DroSolution = serde_json::from_str(&stdout(&out)).unwrap();
    let inst: DroInstance = serde_json::from_str(LINEAR_DRO).unwrap();
    let d = ot::w2_discrete(&sol.worst_measure, &inst.center).unwrap();
    assert!((d - inst.eps).abs() <= 1e-8);
    assert_eq!(d, sol.boundary_distance);

    let out = run(&["dro", "dual"], Some(&path));
    let json: serde_json::Value = serde_json::from_str(&stdout(&out)).unwrap();
    assert_eq!(json["lambda"].as_f64(), Some(2.5));
    assert_eq!(json["dual_value"].as_f64(), Some(5.0));
}

#[test]
fn mean_variance_round_trip_and_csv() {
    let dir = TempDir::new().unwrap();
    let path = write(&dir, "mv.json", MEAN_VARIANCE_DRO);
    let out = run(&["dro", "solve"], Some(&path));
    assert_eq!(out.status.code(), Some(0), "{}", stderr(&out));
    let sol: DroSolution = serde_json::from_str(&stdout(&out)).unwrap();
    let inst: DroInstance = serde_json::from_str(MEAN_VARIANCE_DRO).unwrap();
    assert_eq!(sol, inst.solve().unwrap());
    let d = ot::w2_discrete(&sol.worst_measure, &inst.center).unwrap();
    assert!((d - inst.eps).abs() <= 1e-8);

    let csv_path = dir.path().join("worst.csv");
    let out = run(&["dro", "solve", "--format", "csv", "--out", csv_path.to_str().unwrap()], Some(&path));
    assert_eq!(out.status.code(), Some(0));
    assert!(stdout(&out).is_empty());
    let csv = std::fs::read_to_string(csv_path).unwrap();
    assert_eq!(csv.lines().next(), Some("weight,x0,x1"));
    assert_eq!(csv.lines().count(), 5);
}

#[test]
fn klmin_round_trip() {
    let dir = TempDir::new().unwrap();
    let out = run(&["klmin", "solve"], Some(&write(&dir, "kl.json", KL_BALL)));
    assert_eq!(out.status.code(), Some(0), "{}", stderr(&out));
    let sol: KlBallSolution = serde_json::from_str(&stdout(&out)).unwrap();
    let inst: KlBallInstance = serde_json::from_str(KL_BALL).unwrap();
    assert!(!sol.interior);
    assert!(gaussian::kkt_residual(&inst, &sol.optimum, sol.lambda) <= 1e-8);
    let d = gaussian::gaussian_w2(&sol.optimum, &inst.reference).unwrap();
    assert!((d - inst.eps).abs() <= 1e-8);
    assert!(gaussian::matrix_residual(&sol.a, &inst, sol.lambda) <= 1e-8);
}

#[test]
fn gradient_and_stationarity() {
    let dir = TempDir::new().unwrap();
    let body = r#"{
      "functional": {"kind": "expected_value", "potential": {"form": "quadratic", "q": [[1.0]], "b": [0.0], "c": 0.0}},
      "measure": {"type": "discrete", "atoms": [[1.0], [-2.0]], "weights": [0.5, 0.5]}
    }"#;
    let path = write(&dir, "grad.json", body);
    let out = run(&["grad", "eval"], Some(&path));
    assert_eq!(out.status.code(), Some(0), "{}", stderr(&out));
    let json: serde_json::Value = serde_json::from_str(&stdout(&out)).unwrap();
    assert_eq!(json["value"].as_f64(), Some(1.25));
    assert_eq!(json["gradient"][1][0].as_f64(), Some(-2.0));

    let out = run(&["stationarity", "--tol", "1e-6"], Some(&path));
    let json: serde_json::Value = serde_json::from_str(&stdout(&out)).unwrap();
    assert_eq!(json["satisfied"], false);
    assert_eq!(json["tolerance"].as_f64(), Some(1e-6));
}

#[test]
fn lagrange_on_the_worked_example() {
    let dir = TempDir::new().unwrap();
    let body = r#"{
      "functional": {"kind": "expected_value", "potential": {"form": "quadratic", "q": [[1.0]], "b": [0.0], "c": 0.0}},
      "constraint": {"type": "equality", "k": {"kind": "expected_value", "potential": {"form": "linear", "a": [1.0], "c": -1.0}}},
      "measure": {"type": "discrete", "atoms": [[1.0]], "weights": [1.0]}
    }"#;
    let out = run(&["lagrange"], Some(&write(&dir, "lagrange.json", body)));
    assert_eq!(out.status.code(), Some(0), "{}", stderr(&out));
    let json: serde_json::Value = serde_json::from_str(&stdout(&out)).unwrap();
    assert_eq!(json["multiplier"]["lambda_hat"].as_f64(), Some(1.0));
    assert_eq!(json["certificate"]["verdict"], "strict_min");
}

#[test]
fn flow_trace_as_csv() {
    let dir = TempDir::new().unwrap();
    let body = r#"{
      "functional": {"kind": "expected_value", "potential": {"form": "quadratic", "q": [[1.0]], "b": [0.0], "c": 0.0}},
      "initial": {"type": "discrete", "atoms": [[1.0]], "weights": [1.0]}
    }"#;
    let path = write(&dir, "flow.json", body);
    let out = run(&["flow", "run", "--format", "csv", "--step-size", "0.5", "--steps", "10", "--tol", "0"], Some(&path));
    assert_eq!(out.status.code(), Some(0), "{}", stderr(&out));
    let text = stdout(&out);
    assert_eq!(text.lines().next(), Some("iter,value,residual,distance"));
    assert_eq!(text.lines().count(), 12);

    let out = run(&["flow", "run"], Some(&path));
    assert_eq!(out.status.code(), Some(2));
    assert!(stderr(&out).starts_with("error: UsageError"));
}

#[test]
fn malformed_json_exits_with_two() {
    let dir = TempDir::new().unwrap();
    let out = run(&["flow", "run", "--step-size", "0.1"], Some(&write(&dir, "bad.json", "{\"functional\": [")));
    assert_eq!(out.status.code(), Some(2));
    assert!(stderr(&out).starts_with("error: ParseError"));
}

#[test]
fn missing_file_and_unknown_flag_exit_with_two() {
    let out = run(&["ot", "distance"], Some(Path::new("/nonexistent/wassopt.json")));
    assert_eq!(out.status.code(), Some(2));
    assert!(stderr(&out).starts_with("error: IoError"));
    let out = run(&["ot", "distance", "--verbose"], None);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn domain_errors_exit_with_one() {
    let dir = TempDir::new().unwrap();
    let body = r#"{
      "kind": "mean_std", "w": [1.0, 0.0], "rho": 1.0, "eps": 1.0,
      "center": {"type": "discrete", "atoms": [[1.0, 0.0], [1.0, 2.0]], "weights": [0.5, 0.5]}
    }"#;
    let out = run(&["dro", "solve"], Some(&write(&dir, "zero_std.json", body)));
    assert_eq!(out.status.code(), Some(1));
    assert!(stderr(&out).starts_with("error: ZeroStd:"));

    let bad_weights = r#"{
      "mu": {"type": "discrete", "atoms": [[0.0]], "weights": [0.5]},
      "nu": {"type": "discrete", "atoms": [[0.0]], "weights": [1.0]}
    }"#;
    let out = run(&["ot", "distance"], Some(&write(&dir, "weights.json", bad_weights)));
    assert_eq!(out.status.code(), Some(1));
    assert!(stderr(&out).starts_with("error: InvalidMeasure:"));
}

#[test]
fn seeded_oracle_is_reproducible() {
    let a = run(&["oracle", "ot-check", "--seed", "7"], None);
    let b = run(&["oracle", "ot-check", "--seed", "7"], None);
    assert_eq!(a.status.code(), Some(0));
    assert_eq!(a.stdout, b.stdout);
    let json: serde_json::Value = serde_json::from_str(&stdout(&a)).unwrap();
    assert_eq!(json["pairs"], 200);
    assert_eq!(json["agree"], true);

    let out = run(&["oracle", "ot-check"], None);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn thread_cap_is_honoured() {
    let dir = TempDir::new().unwrap();
    let path = write(&dir, "pair.json", PAIR);
    let out = bin().env("WASSOPT_THREADS", "2").args(["ot", "distance", "--in"]).arg(&path).output().unwrap();
    assert_eq!(out.status.code(), Some(0));
    let out = bin().env("WASSOPT_THREADS", "many").args(["ot", "distance", "--in"]).arg(&path).output().unwrap();
    assert_eq!(out.status.code(), Some(2));
}
