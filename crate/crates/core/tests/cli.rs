use std::fs;
use std::path::Path;
use std::process::Command;

use sosnorm::approximant::ApproximantFile;
use sosnorm::cli::{EXIT_DIMENSION_CAP, EXIT_OK, EXIT_VALIDATION, EXIT_VERIFICATION};
use sosnorm::verify::VerifySuite;
use sosnorm::NormApproximant;

fn sosnorm(args: &[&str]) -> (i32, String, String) {
    let out = Command::new(env!("CARGO_BIN_EXE_sosnorm"))
        .args(args)
        .output()
        .expect("run sosnorm");
    (
        out.status.code().expect("exit code"),
        String::from_utf8(out.stdout).unwrap(),
        String::from_utf8(out.stderr).unwrap(),
    )
}

fn p(path: &Path) -> &str {
    path.to_str().unwrap()
}

#[test]
fn build_load_eval_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    let file = dir.path().join("a.json");
    let points = dir.path().join("x.csv");
    let (code, _, err) = sosnorm(&["build", "--body", "lp", "--p", "3", "--d", "3", "--samples", "40", "--n", "3", "--out", p(&file)]);
    assert_eq!(code, EXIT_OK, "{err}");

    let rows = [[0.3, -1.2, 2.5], [1e-3, 4.0, -7.0], [1.0, 1.0, 1.0], [0.0, 0.0, 0.0]];
    let text: String = rows
        .iter()
        .map(|r| format!("{},{},{}\n", r[0], r[1], r[2]))
        .collect();
    fs::write(&points, format!("x,y,z\n{text}")).unwrap();
    let (code, out, err) = sosnorm(&["eval", "--approximant", p(&file), "--points", p(&points)]);
    assert_eq!(code, EXIT_OK, "{err}");

    let loaded = NormApproximant::load(&file).unwrap();
    let mut lines = out.lines();
    assert_eq!(lines.next(), Some("p,r,lower,upper"));
    for (x, line) in rows.iter().zip(lines) {
        let got: Vec<f64> = line.split(',').map(|f| f.parse().unwrap()).collect();
        let (q, r) = loaded.eval_qr(x).unwrap();
        let b = loaded.norm_bounds(x).unwrap();
        assert_eq!(got, vec![q * q, r, b.lower, b.upper]);
    }

    // Saving the loaded copy reproduces the file byte for byte.
    assert_eq!(loaded.to_json().unwrap(), fs::read_to_string(&file).unwrap());
}

#[test]
fn verify_exit_status_tracks_violations() {
    let dir = tempfile::tempdir().unwrap();
    let good = dir.path().join("good.json");
    let bad = dir.path().join("bad.json");
    let report = dir.path().join("report.json");
    assert_eq!(sosnorm(&["build", "--body", "l1", "--d", "3", "--n", "1", "--out", p(&good)]).0, EXIT_OK);

    let (code, _, _) = sosnorm(&["verify", "--approximant", p(&good), "--m", "2000", "--seed", "7", "--report", p(&report)]);
    let suite: VerifySuite = serde_json::from_str(&fs::read_to_string(&report).unwrap()).unwrap();
    assert_eq!(suite.sandwich.violations(), 0);
    assert_eq!(code, EXIT_OK);

    // Inflating the core matrix doubles q, so the lower bound overshoots.
    let mut file: ApproximantFile = serde_json::from_str(&fs::read_to_string(&good).unwrap()).unwrap();
    for row in file.core.iter_mut() {
        for v in row.iter_mut() {
            *v *= 4.0;
        }
    }
    fs::write(&bad, serde_json::to_string(&file).unwrap()).unwrap();
    let (code, _, _) = sosnorm(&["verify", "--approximant", p(&bad), "--m", "2000", "--seed", "7", "--report", p(&report)]);
    let suite: VerifySuite = serde_json::from_str(&fs::read_to_string(&report).unwrap()).unwrap();
    assert!(suite.sandwich.violations() > 0);
    assert_eq!(code, EXIT_VERIFICATION);
}

#[test]
fn verify_is_reproducible_single_thread() {
    let dir = tempfile::tempdir().unwrap();
    let file = dir.path().join("a.json");
    assert_eq!(sosnorm(&["build", "--body", "linf", "--d", "3", "--n", "3", "--out", p(&file)]).0, EXIT_OK);
    let args = ["verify", "--approximant", p(&file), "--m", "500", "--seed", "3", "--single-thread"];
    let (c1, first, _) = sosnorm(&args);
    let (c2, second, _) = sosnorm(&args);
    assert_eq!((c1, c2), (EXIT_OK, EXIT_OK));
    assert_eq!(first, second);
}

#[test]
fn validation_and_cap_exit_codes() {
    let dir = tempfile::tempdir().unwrap();
    let file = dir.path().join("a.json");
    let (code, _, err) = sosnorm(&["build", "--body", "linf", "--d", "2", "--n", "2", "--out", p(&file)]);
    assert_eq!(code, EXIT_VALIDATION);
    assert!(err.contains("n must be odd"), "{err}");

    let (code, _, _) = sosnorm(&["build", "--body", "l1", "--d", "6", "--n", "5", "--cap", "100", "--out", p(&file)]);
    assert_eq!(code, EXIT_DIMENSION_CAP);
    assert!(!file.exists());

    let (code, _, _) = sosnorm(&["build", "--body", "lp", "--d", "2", "--n", "1", "--out", p(&file)]);
    assert_eq!(code, EXIT_VALIDATION);
}

#[test]
fn expand_and_empty_eval() {
    let dir = tempfile::tempdir().unwrap();
    let file = dir.path().join("a.json");
    let empty = dir.path().join("empty.csv");
    fs::write(&empty, "").unwrap();
    assert_eq!(sosnorm(&["build", "--body", "l1", "--d", "2", "--n", "1", "--out", p(&file)]).0, EXIT_OK);

    let (code, out, _) = sosnorm(&["expand", "--approximant", p(&file)]);
    assert_eq!(code, EXIT_OK);
    let rows: Vec<Vec<f64>> = out
        .lines()
        .skip(1)
        .map(|l| l.split(',').map(|f| f.parse().unwrap()).collect())
        .collect();
    // p = x^2 + y^2 in grlex order: x^2, xy, y^2.
    let expected = [[2.0, 0.0, 1.0], [1.0, 1.0, 0.0], [0.0, 2.0, 1.0]];
    assert_eq!(rows.len(), 3);
    for (row, want) in rows.iter().zip(expected) {
        assert_eq!(&row[..2], &want[..2]);
        assert!((row[2] - want[2]).abs() < 1e-9);
    }

    let (code, out, _) = sosnorm(&["eval", "--approximant", p(&file), "--points", p(&empty)]);
    assert_eq!(code, EXIT_OK);
    assert_eq!(out.trim(), "p,r,lower,upper");
}

#[test]
fn constants_prints_report() {
    let (code, out, _) = sosnorm(&["constants", "--n", "3", "--d", "1000"]);
    assert_eq!(code, EXIT_OK);
    let v: serde_json::Value = serde_json::from_str(&out).unwrap();
    let c = v["theorem_constant"].as_f64().unwrap();
    let fixed = v["fixed_n_estimate"].as_f64().unwrap();
    assert!((c / fixed - 1.0).abs() < 0.01);
}
