//! End-to-end tests of the binary: exit codes, report shape, and the
//! worked-example pipelines.

use std::path::Path;
use std::process::{Command, Output};

fn bin() -> &'static str {
    env!("CARGO_BIN_EXE_stocycle")
}

fn run(config: &Path, out: &Path, extra: &[&str]) -> Output {
    Command::new(bin())
        .arg("--config")
        .arg(config)
        .arg("--out")
        .arg(out)
        .args(extra)
        .output()
        .expect("binary runs")
}

fn write(dir: &Path, name: &str, contents: &str) -> std::path::PathBuf {
    let path = dir.join(name);
    std::fs::write(&path, contents).unwrap();
    path
}

fn stderr(out: &Output) -> String {
    String::from_utf8_lossy(&out.stderr).into_owned()
}

const WORKED_SPEC: &str = r#"{
  "base": {"type": "cycle", "q": 1},
  "generator": {"type": "constant", "matrix": [[0.75, 0.25], [0.25, 0.75]]}
}"#;

#[test]
fn empty_config_is_a_missing_command() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write(dir.path(), "empty.json", "");
    let out = run(&cfg, &dir.path().join("r"), &[]);
    assert_eq!(out.status.code(), Some(2));
    assert!(stderr(&out).contains("missing command"));

    let cfg = write(dir.path(), "braces.json", "{}");
    let out = run(&cfg, &dir.path().join("r2"), &[]);
    assert_eq!(out.status.code(), Some(2));
    assert!(stderr(&out).contains("missing command"));
}

#[test]
fn unknown_command_and_fields_are_validation_errors() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write(dir.path(), "c.json", r#"{"command": "frobnicate"}"#);
    let out = run(&cfg, &dir.path().join("r"), &[]);
    assert_eq!(out.status.code(), Some(2));
    assert!(stderr(&out).contains("unknown command"));

    let cfg = write(
        dir.path(),
        "c2.json",
        r#"{"command": "classify", "count": 3, "n": 2, "bogus": 1}"#,
    );
    let out = run(&cfg, &dir.path().join("r2"), &[]);
    assert_eq!(out.status.code(), Some(2));
    assert!(stderr(&out).contains("bogus"));

    let out = run(Path::new("/nonexistent/config.json"), &dir.path().join("r3"), &[]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn numerical_failures_exit_three_with_a_reason() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write(
        dir.path(),
        "identity.json",
        r#"{
          "command": "dominate",
          "spec": {
            "base": {"type": "cycle", "q": 1},
            "generator": {"type": "constant", "matrix": [[1.0, 0.0], [0.0, 1.0]]}
          }
        }"#,
    );
    let out = run(&cfg, &dir.path().join("r"), &[]);
    assert_eq!(out.status.code(), Some(3));
    let err = stderr(&out);
    assert!(err.contains("\"kind\":\"numerical\""), "stderr: {err}");
}

#[test]
fn perturb_lambda_hat_column_tracks_the_shift_formula() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write(
        dir.path(),
        "perturb.json",
        &format!(r#"{{"command": "perturb", "spec": {WORKED_SPEC}}}"#),
    );
    let out_dir = dir.path().join("r");
    let out = run(&cfg, &out_dir, &["--format", "csv"]);
    assert_eq!(out.status.code(), Some(0), "stderr: {}", stderr(&out));

    let csv = std::fs::read_to_string(out_dir.join("perturb.csv")).unwrap();
    let mut lines = csv.lines();
    assert_eq!(lines.next().unwrap(), "rho,lambda_hat,phi_defect,shift_defect");
    let mut seen = 0;
    for line in lines {
        let cols: Vec<&str> = line.split(',').collect();
        let rho: f64 = cols[0].parse().unwrap();
        let lambda_hat: f64 = cols[1].parse().unwrap();
        let expected = 0.5f64.ln() + rho.ln();
        assert!(
            (lambda_hat - expected).abs() <= 1e-8,
            "rho = {rho}: lambda_hat = {lambda_hat}, expected {expected}"
        );
        seen += 1;
    }
    assert_eq!(seen, 9);
}

#[test]
fn classify_report_has_the_histogram_and_is_deterministic() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write(
        dir.path(),
        "classify.json",
        r#"{"command": "classify", "seed": 42, "count": 25, "n": 3}"#,
    );
    let first = dir.path().join("a");
    let second = dir.path().join("b");
    let out = run(&cfg, &first, &["--format", "csv"]);
    assert_eq!(out.status.code(), Some(0), "stderr: {}", stderr(&out));
    let out = run(&cfg, &second, &["--format", "csv", "--threads", "3"]);
    assert_eq!(out.status.code(), Some(0));

    let report_a = std::fs::read(first.join("report.json")).unwrap();
    let report_b = std::fs::read(second.join("report.json")).unwrap();
    assert_eq!(report_a, report_b, "reruns must be byte-identical");
    assert_eq!(
        std::fs::read(first.join("classify.csv")).unwrap(),
        std::fs::read(second.join("classify.csv")).unwrap()
    );

    let report: serde_json::Value = serde_json::from_slice(&report_a).unwrap();
    assert_eq!(report["result"]["empirical"], serde_json::Value::Bool(true));
    assert_eq!(report["command"], "classify");
    assert_eq!(report["seed"], 42);
    assert!(report["config_sha256"].as_str().unwrap().len() == 64);
    assert!(report["tolerances"]["domination_bound"].as_f64().unwrap() == 0.5);
    let hist = &report["result"]["histogram"];
    let total: u64 = ["trivial", "two_point", "multi_point_dominated", "multi_point_uncertified"]
        .iter()
        .map(|k| hist[*k].as_u64().unwrap())
        .sum();
    assert_eq!(total, 25);
    assert!(report["result"]["spectrum_point_counts"].as_array().unwrap().len() >= 1);
}

#[test]
fn seed_flag_overrides_the_config_seed() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write(
        dir.path(),
        "classify.json",
        r#"{"command": "classify", "seed": 1, "count": 10, "n": 3}"#,
    );
    let a = dir.path().join("a");
    let b = dir.path().join("b");
    let c = dir.path().join("c");
    assert_eq!(run(&cfg, &a, &[]).status.code(), Some(0));
    assert_eq!(run(&cfg, &b, &["--seed", "9"]).status.code(), Some(0));
    assert_eq!(run(&cfg, &c, &["--seed", "9"]).status.code(), Some(0));
    let ra = std::fs::read(a.join("report.json")).unwrap();
    let rb = std::fs::read(b.join("report.json")).unwrap();
    let rc = std::fs::read(c.join("report.json")).unwrap();
    assert_ne!(ra, rb, "different seeds should change the draw");
    assert_eq!(rb, rc, "same override must reproduce");
    let report: serde_json::Value = serde_json::from_slice(&rb).unwrap();
    assert_eq!(report["seed"], 9);
}

#[test]
fn gen_feeds_lyap_through_spec_path() {
    let dir = tempfile::tempdir().unwrap();
    let gen_cfg = write(
        dir.path(),
        "gen.json",
        r#"{"command": "gen", "seed": 7, "count": 2, "n": 3, "base": {"type": "cycle", "q": 2}}"#,
    );
    let gen_out = dir.path().join("gen");
    let out = run(&gen_cfg, &gen_out, &[]);
    assert_eq!(out.status.code(), Some(0), "stderr: {}", stderr(&out));
    assert!(gen_out.join("spec_000.json").exists());
    assert!(gen_out.join("spec_001.json").exists());

    let spec_path = gen_out.join("spec_000.json");
    let lyap_cfg = write(
        dir.path(),
        "lyap.json",
        &format!(r#"{{"command": "lyap", "spec_path": {:?}}}"#, spec_path),
    );
    let lyap_out = dir.path().join("lyap");
    let out = run(&lyap_cfg, &lyap_out, &["--format", "csv"]);
    assert_eq!(out.status.code(), Some(0), "stderr: {}", stderr(&out));
    let report: serde_json::Value =
        serde_json::from_slice(&std::fs::read(lyap_out.join("report.json")).unwrap()).unwrap();
    // Stochastic cocycles always carry the zero rate on the fixed line.
    let top = &report["result"]["exponents"][0]["value"];
    assert!(top.as_f64().unwrap().abs() <= 1e-10);
}

#[test]
fn ruelle_quarter_family_reports_the_two_point_spectrum() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write(
        dir.path(),
        "ruelle.json",
        r#"{
          "command": "ruelle",
          "family": {
            "base": {"type": "rotation", "alpha": 0.6180339887498949},
            "ell": {"type": "constant", "matrix": [[0.25, 0.25], [0.25, 0.25]]}
          }
        }"#,
    );
    let out_dir = dir.path().join("r");
    let out = run(&cfg, &out_dir, &[]);
    assert_eq!(out.status.code(), Some(0), "stderr: {}", stderr(&out));
    let report: serde_json::Value =
        serde_json::from_slice(&std::fs::read(out_dir.join("report.json")).unwrap()).unwrap();
    let result = &report["result"];
    assert_eq!(result["two_point"], serde_json::Value::Bool(true));
    assert_eq!(result["exponents"][1]["value"], "-inf");
    assert_eq!(result["certificate"]["m"], 1);
    assert!(result["conformality_defect"].as_f64().unwrap() <= 1e-12);
}

#[test]
fn access_batch_respects_the_budget() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write(
        dir.path(),
        "access.json",
        r#"{"command": "access", "seed": 11, "count": 6, "n": 4}"#,
    );
    let out_dir = dir.path().join("r");
    let out = run(&cfg, &out_dir, &[]);
    assert_eq!(out.status.code(), Some(0), "stderr: {}", stderr(&out));
    let report: serde_json::Value =
        serde_json::from_slice(&std::fs::read(out_dir.join("report.json")).unwrap()).unwrap();
    let result = &report["result"];
    let eps = result["epsilon"].as_f64().unwrap();
    assert!(result["max_norm_gap"].as_f64().unwrap() <= eps);
    assert!(result["max_residual"].as_f64().unwrap() <= 1e-11);
    assert_eq!(result["instances"].as_array().unwrap().len(), 6);
}
