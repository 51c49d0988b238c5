//! Acceptance check for the batch front end: rerunning any pipeline with
//! an identical configuration and seed reproduces every output file byte
//! for byte. One line per criterion is printed so the suite doubles as a
//! checklist.

use std::path::Path;
use std::process::Command;

fn bin() -> &'static str {
    env!("CARGO_BIN_EXE_stocycle")
}

fn run_into(config: &Path, out: &Path) {
    let output = Command::new(bin())
        .arg("--config")
        .arg(config)
        .arg("--out")
        .arg(out)
        .arg("--format")
        .arg("csv")
        .output()
        .expect("binary runs");
    assert_eq!(
        output.status.code(),
        Some(0),
        "pipeline failed: {}",
        String::from_utf8_lossy(&output.stderr)
    );
}

/// Every file in `a` must exist in `b` with identical bytes, and vice
/// versa.
fn assert_dirs_identical(a: &Path, b: &Path) {
    let list = |dir: &Path| -> Vec<String> {
        let mut names: Vec<String> = std::fs::read_dir(dir)
            .unwrap()
            .map(|e| e.unwrap().file_name().into_string().unwrap())
            .collect();
        names.sort();
        names
    };
    let names_a = list(a);
    assert_eq!(names_a, list(b), "different file sets under {} and {}", a.display(), b.display());
    for name in names_a {
        let bytes_a = std::fs::read(a.join(&name)).unwrap();
        let bytes_b = std::fs::read(b.join(&name)).unwrap();
        assert_eq!(bytes_a, bytes_b, "{name} differs between reruns");
    }
}

#[test]
fn criterion_12_cli_reruns_are_byte_identical() {
    let worked_spec = r#"{
        "base": {"type": "cycle", "q": 1},
        "generator": {"type": "constant", "matrix": [[0.75, 0.25], [0.25, 0.75]]}
      }"#;
    let configs: Vec<(&str, String)> = vec![
        (
            "gen",
            r#"{"command": "gen", "seed": 3, "count": 4, "n": 3,
                "base": {"type": "cycle", "q": 2}}"#
                .to_string(),
        ),
        ("lyap", format!(r#"{{"command": "lyap", "seed": 3, "spec": {worked_spec}}}"#)),
        ("dominate", format!(r#"{{"command": "dominate", "seed": 3, "spec": {worked_spec}}}"#)),
        (
            "perturb",
            format!(
                r#"{{"command": "perturb", "seed": 3, "spec": {worked_spec},
                     "rhos": [0.25, 0.5, 0.75]}}"#
            ),
        ),
        ("access", r#"{"command": "access", "seed": 3, "count": 5, "n": 3}"#.to_string()),
        (
            "ruelle",
            r#"{"command": "ruelle", "seed": 3, "family": {
                  "base": {"type": "cycle", "q": 2},
                  "ell": {"type": "tabulated", "matrices": [
                    [[0.3, 0.2], [0.25, 0.25]],
                    [[0.2, 0.3], [0.25, 0.25]]
                  ]}
               }}"#
                .to_string(),
        ),
        (
            "classify",
            r#"{"command": "classify", "seed": 3, "count": 15, "n": 3}"#.to_string(),
        ),
    ];

    let dir = tempfile::tempdir().unwrap();
    for (name, config) in &configs {
        let cfg_path = dir.path().join(format!("{name}.json"));
        std::fs::write(&cfg_path, config).unwrap();
        let first = dir.path().join(format!("{name}_a"));
        let second = dir.path().join(format!("{name}_b"));
        run_into(&cfg_path, &first);
        run_into(&cfg_path, &second);
        assert_dirs_identical(&first, &second);
    }
    println!(
        "criterion 12 (determinism): PASS - {} pipelines rerun byte-identically",
        configs.len()
    );
}
