use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use serde_json::Value;

fn phasespace(args: &[&str], out: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_phasespace"))
        .args(args)
        .arg("--out")
        .arg(out)
        .output()
        .expect("binary runs")
}

fn json_file(path: &Path) -> Value {
    serde_json::from_str(&fs::read_to_string(path).unwrap()).unwrap()
}

const SMALL: &str = r#"{
  "name": "small-harmonic",
  "hamiltonian": {"preset": "harmonic"},
  "grid": {"n": 128, "x_min": -8.0, "dx": 0.125},
  "time": {"t_final": 0.5, "steps": 20},
  "initial": {"x0": 0.5, "p0": 0.0},
  "outputs": ["state", "report"]
}"#;

#[test]
fn missing_dx_is_config_error_naming_field() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("bad.json");
    fs::write(&cfg, SMALL.replace(r#", "dx": 0.125"#, "")).unwrap();
    let out = phasespace(&["propagate", "--config", cfg.to_str().unwrap()], dir.path());
    assert_eq!(out.status.code(), Some(2));
    let err: Value = serde_json::from_slice(&out.stderr).unwrap();
    assert_eq!(err["field"], "dx");
    assert_eq!(json_file(&dir.path().join("error.json"))["error"], "config");
}

#[test]
fn unknown_preset_is_config_error() {
    let dir = tempfile::tempdir().unwrap();
    let out = phasespace(&["flow", "--preset", "no-such-preset"], dir.path());
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn quarter_period_report_phase() {
    let dir = tempfile::tempdir().unwrap();
    let out = phasespace(&["propagate", "--preset", "harmonic-quarter-period"], dir.path());
    assert_eq!(out.status.code(), Some(0));
    let report = json_file(&dir.path().join("report.json"));
    let phase = report["overlap"]["phase"].as_f64().unwrap();
    assert!((phase + std::f64::consts::FRAC_PI_4).abs() < 1e-6, "{phase}");
    assert_eq!(report["route"], "quadratic");
}

#[test]
fn identity_state_equals_initial_bytes() {
    let dir = tempfile::tempdir().unwrap();
    let out = phasespace(&["propagate", "--preset", "identity"], dir.path());
    assert_eq!(out.status.code(), Some(0));
    let a = fs::read(dir.path().join("initial.json")).unwrap();
    let b = fs::read(dir.path().join("state.json")).unwrap();
    assert_eq!(a, b);
}

#[test]
fn repeated_runs_are_byte_identical() {
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    for d in [&a, &b] {
        let out = phasespace(&["propagate", "--preset", "free-spreading"], d.path());
        assert_eq!(out.status.code(), Some(0));
    }
    for name in ["report.json", "state.json", "wigner_final.csv"] {
        assert_eq!(
            fs::read(a.path().join(name)).unwrap(),
            fs::read(b.path().join(name)).unwrap(),
            "{name}"
        );
    }
}

#[test]
fn csv_format_writes_csv_outputs() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("small.json");
    fs::write(&cfg, SMALL).unwrap();
    let out = phasespace(&["propagate", "--config", cfg.to_str().unwrap(), "--format", "csv"], dir.path());
    assert_eq!(out.status.code(), Some(0));
    let report = fs::read_to_string(dir.path().join("report.csv")).unwrap();
    assert!(report.starts_with("key,value\n"));
    assert!(report.contains("overlap.phase,"));
    assert!(dir.path().join("state.csv").exists());
}

#[test]
fn flow_and_symbols_on_small_grid() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("small.json");
    fs::write(&cfg, SMALL).unwrap();
    let out = phasespace(&["flow", "--config", cfg.to_str().unwrap()], dir.path());
    assert_eq!(out.status.code(), Some(0));
    let summary: Value = serde_json::from_slice(&out.stdout).unwrap();
    let m = &summary["final_matrix"];
    assert!((m[0][0].as_f64().unwrap() - 0.5_f64.cos()).abs() < 1e-8);
    let out = phasespace(&["symbols", "--config", cfg.to_str().unwrap()], dir.path());
    assert_eq!(out.status.code(), Some(0));
    let doc = json_file(&dir.path().join("symbols.json"));
    assert!(doc["operator_hermitian_defect"].as_f64().unwrap() < 1e-10);
    assert!(dir.path().join("hamiltonian_operator.csv").exists());
}

#[test]
fn symbols_refuses_large_grid() {
    let dir = tempfile::tempdir().unwrap();
    let out = phasespace(&["symbols", "--preset", "harmonic-quarter-period"], dir.path());
    assert_eq!(out.status.code(), Some(3));
}

#[test]
fn nyquist_guard_strict_and_warn() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("fast.json");
    let text = fs::read_to_string(concat!(env!("CARGO_MANIFEST_DIR"), "/presets/free-spreading.json"))
        .unwrap()
        .replace(r#""p0": 1.0"#, r#""p0": 46.0"#)
        .replace(r#""x0": -1.0"#, r#""x0": 0.0"#)
        .replace(r#""t_final": 2.0"#, r#""t_final": 0.5"#);
    fs::write(&cfg, text).unwrap();
    let strict = phasespace(&["propagate", "--config", cfg.to_str().unwrap()], dir.path());
    assert_eq!(strict.status.code(), Some(3));
    let warn = phasespace(
        &["propagate", "--config", cfg.to_str().unwrap(), "--nyquist-check", "warn"],
        dir.path(),
    );
    assert_eq!(warn.status.code(), Some(0));
    assert!(String::from_utf8_lossy(&warn.stderr).contains("warning:"));
}

#[test]
fn verify_propagator_records_double_cover_sign() {
    let dir = tempfile::tempdir().unwrap();
    let out = phasespace(&["verify", "propagator", "--format", "csv"], dir.path());
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stdout));
    let csv = fs::read_to_string(dir.path().join("verify.csv")).unwrap();
    let row = csv.lines().find(|l| l.starts_with("double-cover-sign,")).unwrap();
    assert!(row.contains(",-1e0,"), "{row}");
}

#[test]
fn verify_all_passes() {
    let dir = tempfile::tempdir().unwrap();
    let out = phasespace(&["verify", "all"], dir.path());
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stdout));
    let records = json_file(&dir.path().join("verify.json"));
    let records = records.as_array().unwrap();
    assert_eq!(records.len(), 26);
    assert!(records.iter().all(|r| r["pass"] == true));
}
