use std::fs;
use std::path::Path;
use std::process::{Command, Output};

fn cli(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_linf-accel")).args(args).output().expect("binary runs")
}

fn last_row(csv: &str) -> Vec<f64> {
    csv.lines().last().unwrap().split(',').map(|v| v.parse().unwrap()).collect()
}

#[test]
fn sphere_preset_writes_artifacts_and_hits_endpoint() {
    let dir = tempfile::tempdir().unwrap();
    let out = cli(&["ivp", "--preset", "sphere-example", "--out", dir.path().to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stdout));
    let csv = fs::read_to_string(dir.path().join("trajectory.csv")).unwrap();
    let r = last_row(&csv);
    assert!((r[0] - 8.0).abs() < 1e-12);
    let want = [-0.433206, 0.898727, 0.0679900];
    for (got, want) in r[1..4].iter().zip(want) {
        assert!((got - want).abs() < 5e-6, "{got} vs {want}");
    }
    let report: serde_json::Value = serde_json::from_str(&fs::read_to_string(dir.path().join("report.json")).unwrap()).unwrap();
    assert!(report.is_object());
    assert!(dir.path().join("config.json").exists());
}

#[test]
fn repeated_runs_are_byte_identical() {
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    for d in [&a, &b] {
        let out = cli(&["ivp", "--preset", "so3-example-short", "--out", d.path().to_str().unwrap()]);
        assert_eq!(out.status.code(), Some(0));
    }
    for f in ["trajectory.csv", "report.json", "config.json"] {
        assert_eq!(fs::read(a.path().join(f)).unwrap(), fs::read(b.path().join(f)).unwrap(), "{f} differs");
    }
}

fn write_config(dir: &Path, body: &serde_json::Value) -> String {
    let p = dir.join("in.json");
    fs::write(&p, body.to_string()).unwrap();
    p.to_str().unwrap().to_string()
}

#[test]
fn invalid_config_exits_2_and_writes_nothing() {
    let dir = tempfile::tempdir().unwrap();
    let out_dir = dir.path().join("out");
    let cfg = serde_json::json!({
        "mode": "ivp",
        "system": "sphere_extremal",
        "manifold": {"kind": "sphere", "dim": 2},
        "initial": {"x": [1.0, 1.0, 0.0], "xdot": [0.0, 0.0, 1.0], "field": [0.0, 1.0, 0.0], "field_rate": [0.0, 0.0, 0.0]},
        "span": [1.0, 0.0]
    });
    let path = write_config(dir.path(), &cfg);
    let out = cli(&["ivp", "--config", &path, "--out", out_dir.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(2));
    let msg: serde_json::Value = serde_json::from_slice(&out.stdout).unwrap();
    assert!(msg.to_string().contains("span"), "{msg}");
    assert!(msg.to_string().contains("not on sphere"), "{msg}");
    assert!(!out_dir.exists());
}

#[test]
fn missing_config_file_is_an_io_error() {
    let out = cli(&["ivp", "--config", "/nonexistent/cfg.json"]);
    assert_eq!(out.status.code(), Some(1));
}

#[test]
fn mode_mismatch_is_rejected() {
    let dir = tempfile::tempdir().unwrap();
    let out = cli(&["bvp", "--preset", "sphere-example", "--out", dir.path().to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(2));
    assert!(fs::read_dir(dir.path()).unwrap().next().is_none());
}

#[test]
fn presets_can_be_listed_and_shown() {
    let out = cli(&["presets", "list"]);
    assert_eq!(out.status.code(), Some(0));
    let text = String::from_utf8(out.stdout).unwrap();
    for name in ["sphere-example", "so3-example-long", "euclid-bvp", "euclid-baseline"] {
        assert!(text.contains(name), "{text}");
    }
    let shown = cli(&["presets", "show", "euclid-bvp"]);
    let cfg: serde_json::Value = serde_json::from_slice(&shown.stdout).unwrap();
    assert_eq!(cfg["mode"], "bvp");
}

#[test]
fn baseline_preset_reports_j_infinity() {
    let dir = tempfile::tempdir().unwrap();
    let out = cli(&["baseline", "--preset", "euclid-baseline", "--out", dir.path().to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(0));
    let report = fs::read_to_string(dir.path().join("report.json")).unwrap();
    assert!(report.contains("j_inf"), "{report}");
}
