//! End-to-end checks of the binary: worked examples, exit codes, and the
//! file round trip.

use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn bin() -> &'static str {
    env!("CARGO_BIN_EXE_riskcap")
}

fn write(dir: &Path, name: &str, contents: &str) -> PathBuf {
    let path = dir.join(name);
    std::fs::write(&path, contents).unwrap();
    path
}

fn run(args: &[&str]) -> Output {
    Command::new(bin()).args(args).output().unwrap()
}

fn stdout_of(output: &Output) -> String {
    String::from_utf8(output.stdout.clone()).unwrap()
}

const TWO_MEMBER: &str = r#"{
  "outcomes": ["a", "b"],
  "measures": [
    {"id": "Q1", "weights": {"a": 1.0}, "penalty": 0},
    {"id": "Q2", "weights": {"b": 1.0}, "penalty": 1}
  ]
}"#;

#[test]
fn risk_reports_rho_and_maximizer() {
    let dir = tempfile::tempdir().unwrap();
    let scenarios = write(dir.path(), "two.json", TWO_MEMBER);
    let payoff = write(dir.path(), "x.json", r#"{"values": {"a": 2.0, "b": -2.0}}"#);
    let output = run(&[
        "risk",
        "--scenarios",
        scenarios.to_str().unwrap(),
        "--payoff",
        payoff.to_str().unwrap(),
    ]);
    assert!(output.status.success());
    let json: serde_json::Value = serde_json::from_str(&stdout_of(&output)).unwrap();
    assert_eq!(json["rho"], 1.0);
    assert_eq!(json["maximizer_index"], 2);
    assert_eq!(json["maximizer_member"], "Q2");
}

#[test]
fn counterexample_reports_split() {
    let output = run(&["counterexample", "--eta", "0.1"]);
    assert!(output.status.success());
    let json: serde_json::Value = serde_json::from_str(&stdout_of(&output)).unwrap();
    assert_eq!(json["sup_measure_of_A"], 0.0);
    assert!(json["capacity_lower_bound"].as_f64().unwrap() >= 0.9);
}

#[test]
fn gexp_matches_worked_example() {
    let dir = tempfile::tempdir().unwrap();
    let payoff = write(dir.path(), "bsq.json", r#"{"expr": "b1 * b1"}"#);
    let output = run(&[
        "gexp",
        "--lattice",
        "1,1,1,0.1,0.3",
        "--payoff",
        payoff.to_str().unwrap(),
    ]);
    assert!(output.status.success());
    let json: serde_json::Value = serde_json::from_str(&stdout_of(&output)).unwrap();
    assert!((json["value"].as_f64().unwrap() - 0.09).abs() <= 1e-12);
    assert_eq!(json["root_sigma"][0], 0.3);
    assert_eq!(json["scenario_checks"]["qv_within_bounds"], true);
}

#[test]
fn penalty_interpolates() {
    let dir = tempfile::tempdir().unwrap();
    let scenarios = write(dir.path(), "two.json", TWO_MEMBER);
    let target = write(dir.path(), "q.json", r#"{"values": {"a": 0.5, "b": 0.5}}"#);
    let output = run(&[
        "penalty",
        "--scenarios",
        scenarios.to_str().unwrap(),
        "--payoff",
        target.to_str().unwrap(),
    ]);
    assert!(output.status.success());
    let json: serde_json::Value = serde_json::from_str(&stdout_of(&output)).unwrap();
    assert!((json["penalty"].as_f64().unwrap() - 0.5).abs() <= 1e-10);

    // A target outside the hull is infeasible: penalty serializes as null.
    let outside = write(dir.path(), "out.json", r#"{"values": {"a": 0.2, "b": 0.1}}"#);
    let output = run(&[
        "penalty",
        "--scenarios",
        scenarios.to_str().unwrap(),
        "--payoff",
        outside.to_str().unwrap(),
    ]);
    assert_eq!(output.status.code(), Some(2), "non-probability target rejected");
}

#[test]
fn riskless_witness_matches_example() {
    let dir = tempfile::tempdir().unwrap();
    let scenarios = write(dir.path(), "two.json", TWO_MEMBER);
    let payoff = write(dir.path(), "loss.json", r#"{"values": {"a": 0.0, "b": -1.0}}"#);
    let output = run(&[
        "riskless",
        "--scenarios",
        scenarios.to_str().unwrap(),
        "--payoff",
        payoff.to_str().unwrap(),
    ]);
    assert!(output.status.success());
    let json: serde_json::Value = serde_json::from_str(&stdout_of(&output)).unwrap();
    assert_eq!(json["riskless"], false);
    assert_eq!(json["witness"]["lambda"], 2.0);
    assert_eq!(json["witness"]["member_index"], 2);
}

#[test]
fn malformed_inputs_exit_2_with_diagnostics() {
    let dir = tempfile::tempdir().unwrap();
    let scenarios = write(dir.path(), "two.json", TWO_MEMBER);
    let broken = write(dir.path(), "broken.json", "{not json");
    let output = run(&[
        "risk",
        "--scenarios",
        broken.to_str().unwrap(),
        "--payoff",
        broken.to_str().unwrap(),
    ]);
    assert_eq!(output.status.code(), Some(2));
    let stderr = String::from_utf8(output.stderr).unwrap();
    assert!(stderr.contains("line 1"), "diagnostic names the location: {stderr}");

    let bad_mass = write(
        dir.path(),
        "badmass.json",
        r#"{"outcomes": ["a"], "measures": [{"id": "Q", "weights": {"a": 0.9}}]}"#,
    );
    let payoff = write(dir.path(), "x.json", r#"{"values": {"a": 1.0}}"#);
    let output = run(&[
        "risk",
        "--scenarios",
        bad_mass.to_str().unwrap(),
        "--payoff",
        payoff.to_str().unwrap(),
    ]);
    assert_eq!(output.status.code(), Some(2));
    let stderr = String::from_utf8(output.stderr).unwrap();
    assert!(stderr.contains("total mass"));

    let partial = write(dir.path(), "partial.json", r#"{"values": {"a": 1.0}}"#);
    let output = run(&[
        "risk",
        "--scenarios",
        scenarios.to_str().unwrap(),
        "--payoff",
        partial.to_str().unwrap(),
    ]);
    assert_eq!(output.status.code(), Some(2));
    let stderr = String::from_utf8(output.stderr).unwrap();
    assert!(stderr.contains('b'), "missing outcome named: {stderr}");

    let output = run(&["risk", "--scenarios", "x", "--payoff", "y", "--bogus"]);
    assert_eq!(output.status.code(), Some(2), "unknown flag is a usage error");
}

#[test]
fn verify_passes_on_valid_specs_and_flags_violations() {
    let dir = tempfile::tempdir().unwrap();
    let scenarios = write(dir.path(), "two.json", TWO_MEMBER);
    let output = run(&[
        "verify",
        "--scenarios",
        scenarios.to_str().unwrap(),
        "--seed",
        "7",
    ]);
    assert!(output.status.success());
    let json: serde_json::Value = serde_json::from_str(&stdout_of(&output)).unwrap();
    assert_eq!(json["all_pass"], true);

    // Zero tolerance flags last-ulp arithmetic as a violation and exits 3
    // with the witness payload on stdout.
    let output = run(&[
        "verify",
        "--scenarios",
        scenarios.to_str().unwrap(),
        "--seed",
        "7",
        "--tol",
        "0",
    ]);
    assert_eq!(output.status.code(), Some(3));
    let json: serde_json::Value = serde_json::from_str(&stdout_of(&output)).unwrap();
    assert_eq!(json["all_pass"], false);
    let axioms = json["axioms"].as_object().unwrap();
    assert!(axioms
        .values()
        .any(|v| v["pass"] == false && v["witness"]["violation"].is_number()));
}

#[test]
fn reduce_emits_a_reloadable_file() {
    let dir = tempfile::tempdir().unwrap();
    let scenarios = write(dir.path(), "two.json", TWO_MEMBER);
    let output = run(&[
        "reduce",
        "--scenarios",
        scenarios.to_str().unwrap(),
        "--eps",
        "3.0",
    ]);
    assert!(output.status.success());
    let json: serde_json::Value = serde_json::from_str(&stdout_of(&output)).unwrap();
    assert_eq!(json["kept"], 1);
    let reduced = serde_json::to_string(&json["reduced"]).unwrap();
    let reloaded = write(dir.path(), "reduced.json", &reduced);
    let payoff = write(dir.path(), "x.json", r#"{"values": {"a": 2.0, "b": -2.0}}"#);
    let output = run(&[
        "risk",
        "--scenarios",
        reloaded.to_str().unwrap(),
        "--payoff",
        payoff.to_str().unwrap(),
    ]);
    assert!(output.status.success(), "reduced file reloads");
}

#[test]
fn capacity_on_embedded_space_with_expr() {
    let dir = tempfile::tempdir().unwrap();
    let scenarios = write(
        dir.path(),
        "embedded.json",
        r#"{
            "outcomes": [{"id": "lo", "point": 0.1}, {"id": "hi", "point": 0.5}],
            "measures": [
                {"id": "D_lo", "weights": {"lo": 1.0}},
                {"id": "D_hi", "weights": {"hi": 1.0}}
            ]
        }"#,
    );
    let payoff = write(dir.path(), "expr.json", r#"{"expr": "x * 4"}"#);
    let output = run(&[
        "capacity",
        "--scenarios",
        scenarios.to_str().unwrap(),
        "--payoff",
        payoff.to_str().unwrap(),
        "--p",
        "1",
    ]);
    assert!(output.status.success());
    let json: serde_json::Value = serde_json::from_str(&stdout_of(&output)).unwrap();
    assert!((json["value"].as_f64().unwrap() - 2.0).abs() <= 1e-12);
    assert_eq!(json["attaining_member"], "D_hi");
}
