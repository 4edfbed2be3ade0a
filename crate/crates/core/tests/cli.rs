use std::path::Path;
use std::process::{Command, Output};

use bicoh::arrayfile::ArrayFile;

fn bicoh(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_bicoh")).args(args).output().expect("binary runs")
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

const NESTED: &str = r#"{"duration": 30, "fs": 250, "seed": 3,
    "components": [{"kind": "nested_noise", "delay": 0.0}],
    "noise": {"kind": "one_over_f", "level_db": 0}}"#;

#[test]
fn simulate_bispec_features_pipeline() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    std::fs::write(d.join("r.json"), NESTED).unwrap();
    let out = bicoh(&["simulate", s(&d.join("r.json")), "-o", s(&d.join("sig"))]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let sig = ArrayFile::read(&d.join("sig")).unwrap();
    assert_eq!(sig.header.shape, vec![7500]);

    let out = bicoh(&["bispec", s(&d.join("sig")), "-o", s(&d.join("bic")), "--range", "0,90", "--bias-correct"]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let bic = ArrayFile::read(&d.join("bic")).unwrap();
    assert!(bic.header.complex);
    assert_eq!(bic.header.shape.len(), 2);
    assert!(bic.mask().unwrap().is_some());
    assert_eq!(bic.header.provenance.as_ref().map(String::len), Some(64));
    assert!(ArrayFile::read(&d.join("bic_mag")).is_ok());

    let out = bicoh(&[
        "features",
        s(&d.join("bic")),
        "--so-range",
        "6,10",
        "--fo-range",
        "30,80",
        "-o",
        s(&d.join("feat")),
    ]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let printed: serde_json::Value = serde_json::from_slice(&out.stdout).unwrap();
    assert!(printed["outside_score"].as_f64().unwrap() > 0.2);
    assert_eq!(printed["verdicts"]["pac_like"], true);
    let saved: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(d.join("feat_report.json")).unwrap()).unwrap();
    assert_eq!(saved["report"], printed);
}

#[test]
fn pac_writes_theta_by_gamma_plane() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    std::fs::write(d.join("r.json"), NESTED).unwrap();
    assert!(bicoh(&["simulate", s(&d.join("r.json")), "-o", s(&d.join("sig"))]).status.success());
    let out = bicoh(&["pac", s(&d.join("sig")), "-o", s(&d.join("pac")), "--gamma-range", "40,80", "--gamma-step", "10"]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let f = ArrayFile::read(&d.join("pac")).unwrap();
    assert_eq!(f.header.shape, vec![25, 5]);
    assert_eq!(f.header.axes[0].name, "theta");
}

#[test]
fn malformed_recipe_exits_two_with_field_path() {
    let dir = tempfile::tempdir().unwrap();
    let p = dir.path().join("bad.json");
    std::fs::write(&p, r#"{"duration": 10, "fs": 250, "seed": 1, "components": [{"kind": "sine_am_pac", "theta": "six", "gamma": 60}]}"#).unwrap();
    let out = bicoh(&["simulate", s(&p), "-o", s(&dir.path().join("x"))]);
    assert_eq!(out.status.code(), Some(2));
    let err = String::from_utf8_lossy(&out.stderr);
    assert!(err.contains("components[0]"), "{err}");
    assert!(!dir.path().join("x.bin").exists());
}

#[test]
fn missing_input_exits_one() {
    let out = bicoh(&["bispec", "/nonexistent/sig", "-o", "/tmp/never"]);
    assert_eq!(out.status.code(), Some(1));
}

#[test]
fn usage_errors_exit_two() {
    assert_eq!(bicoh(&["bispec"]).status.code(), Some(2));
    assert_eq!(bicoh(&["frobnicate"]).status.code(), Some(2));
    let out = bicoh(&["pac", "x", "-o", "y", "--gamma-bw", "20", "--proportional", "3"]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn broad_phase_band_is_rejected() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    std::fs::write(d.join("r.json"), NESTED).unwrap();
    assert!(bicoh(&["simulate", s(&d.join("r.json")), "-o", s(&d.join("sig"))]).status.success());
    let out = bicoh(&["pac", s(&d.join("sig")), "-o", s(&d.join("pac")), "--theta-bw", "50", "--gamma-bw", "40"]);
    assert_eq!(out.status.code(), Some(2));
    assert!(!d.join("pac.bin").exists());
}

#[test]
fn csv_input_is_accepted() {
    let dir = tempfile::tempdir().unwrap();
    let p = dir.path().join("x.csv");
    let rows: String = (0..2000)
        .map(|i| {
            let t = i as f64 / 200.0;
            format!("{t},{}\n", (2.0 * std::f64::consts::PI * 7.0 * t).cos())
        })
        .collect();
    std::fs::write(&p, rows).unwrap();
    let out = bicoh(&["bispec", s(&p), "-o", s(&dir.path().join("b")), "--range", "0,20"]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
}

#[test]
fn schemas_are_json() {
    for name in ["recipe", "run-config", "feature-report", "array-header"] {
        let out = bicoh(&["schema", name]);
        assert!(out.status.success(), "{name}");
        let v: serde_json::Value = serde_json::from_slice(&out.stdout).unwrap();
        assert!(v.get("$schema").is_some() || v.get("title").is_some(), "{name}");
    }
}
