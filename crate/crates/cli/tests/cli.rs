//! Runs the `imc` binary on small configs and checks exit codes and outputs.

use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use serde_json::{json, Value};

fn imc(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_imc")).args(args).output().unwrap()
}

fn write_config(dir: &Path, name: &str, cfg: &Value) -> PathBuf {
    let path = dir.join(name);
    std::fs::write(&path, serde_json::to_string_pretty(cfg).unwrap()).unwrap();
    path
}

fn minimal_config(out: &Path) -> Value {
    json!({
        "plant": { "numerator": [1.0], "denominator": [1.0, 0.1], "tau_s": 0.05 },
        "design": { "base_rad_s": 2.0 * std::f64::consts::PI, "harmonics": 1, "relative_degree": 1, "q_scale": 1.0 },
        "analysis": { "sweep_band_hz": [0.1, 10.0], "sweep_points": 200, "hinf_band_hz": [0.01, 50.0] },
        "simulation": {
            "h_s": 0.001,
            "t_end_s": 50.0,
            "t_on_s": 1.0,
            "disturbance": { "kind": "sine", "omega_rad_s": 2.0 * std::f64::consts::PI, "amplitude": 1.0, "phase_rad": 0.0 },
            "pre_window_s": [0.0, 1.0],
            "post_window_s": [40.0, 50.0]
        },
        "output_dir": out,
    })
}

fn run(cmd: &str, cfg: &Path) -> Output {
    imc(&[cmd, "--config", cfg.to_str().unwrap()])
}

fn stdout_json(o: &Output) -> Value {
    serde_json::from_slice(&o.stdout).unwrap()
}

fn stderr_json(o: &Output) -> Value {
    serde_json::from_slice(&o.stderr).unwrap()
}

#[test]
fn minimal_design_writes_three_state_filter() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("out");
    let cfg = write_config(dir.path(), "cfg.json", &minimal_config(&out));
    let o = run("design", &cfg);
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
    let report = stdout_json(&o);
    assert_eq!(report["filter_order"], 3);
    assert_eq!(report["controller_order"], 3);
    assert_eq!(report["verification"]["pass"], true);
    for f in ["controller.json", "design_report.json", "config.resolved.json"] {
        assert!(out.join(f).exists(), "{f}");
    }
}

#[test]
fn causality_violation_exits_with_validation_code() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("out");
    let mut c = minimal_config(&out);
    c["plant"]["denominator"] = json!([1.0, 0.3, 0.02]);
    let cfg = write_config(dir.path(), "cfg.json", &c);
    let o = run("design", &cfg);
    assert_eq!(o.status.code(), Some(2));
    let err = stderr_json(&o);
    assert_eq!(err["error"], "CausalityViolation");
    assert_eq!(err["exit_code"], 2);
    assert!(err["hint"].is_string());
}

#[test]
fn unknown_config_field_is_rejected() {
    let dir = tempfile::tempdir().unwrap();
    let mut c = minimal_config(&dir.path().join("out"));
    c["design"]["harmonic_count"] = json!(3);
    let cfg = write_config(dir.path(), "cfg.json", &c);
    assert_eq!(run("design", &cfg).status.code(), Some(2));
}

#[test]
fn missing_controller_exits_with_validation_code() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("out");
    let cfg = write_config(dir.path(), "cfg.json", &minimal_config(&out));
    let o = run("analyze", &cfg);
    assert_eq!(o.status.code(), Some(2));
    assert!(out.join("error.json").exists());
}

#[test]
fn analyze_without_mismatch_has_only_ideal_columns() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("out");
    let cfg = write_config(dir.path(), "cfg.json", &minimal_config(&out));
    assert_eq!(run("design", &cfg).status.code(), Some(0));
    let o = run("analyze", &cfg);
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
    let report = stdout_json(&o);
    assert!(report.get("perturbed").is_none());
    assert!(report["ideal"]["notch_magnitudes"][0].as_f64().unwrap() <= 1e-6);
    let csv = std::fs::read_to_string(out.join("sensitivity.csv")).unwrap();
    let mut lines = csv.lines();
    assert_eq!(lines.next().unwrap(), "omega_rad_s,f_hz,mag_ideal,phase_ideal_rad");
    assert_eq!(lines.count(), 200);
}

#[test]
fn analyze_with_mismatch_adds_perturbed_columns() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("out");
    let mut c = minimal_config(&out);
    c["analysis"]["mismatch"] = json!({ "numerator": [0.9], "denominator": [1.0, 0.05] });
    let cfg = write_config(dir.path(), "cfg.json", &c);
    assert_eq!(run("design", &cfg).status.code(), Some(0));
    let o = run("analyze", &cfg);
    assert_eq!(o.status.code(), Some(0));
    assert!(stdout_json(&o)["perturbed"]["small_gain_margin"].is_number());
    let csv = std::fs::read_to_string(out.join("sensitivity.csv")).unwrap();
    assert!(csv.lines().next().unwrap().ends_with("mag_perturbed,phase_perturbed_rad"));
}

#[test]
fn simulate_rejects_sine_and_zero_disturbance_is_flat() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("out");
    let cfg = write_config(dir.path(), "cfg.json", &minimal_config(&out));
    assert_eq!(run("design", &cfg).status.code(), Some(0));
    let o = run("simulate", &cfg);
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
    let db = stdout_json(&o)["residuals"]["attenuation_db"][0].as_f64().unwrap();
    assert!(db <= -40.0, "{db}");

    let mut c = minimal_config(&out);
    c["simulation"]["disturbance"] = json!({ "kind": "zero" });
    c["simulation"]["t_end_s"] = json!(5.0);
    c["simulation"]["post_window_s"] = json!([4.0, 5.0]);
    let cfg = write_config(dir.path(), "zero.json", &c);
    let o = run("simulate", &cfg);
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
    assert_eq!(stdout_json(&o)["max_abs_y"], 0.0);
    let trace = std::fs::read_to_string(out.join("trace.csv")).unwrap();
    let mut lines = trace.lines();
    assert_eq!(lines.next().unwrap(), "t,r,d,u,y,y_m");
    assert_eq!(lines.count(), 5001);
}

#[test]
fn mismatched_reference_loop_diverges_with_partial_trace() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("out");
    let mut c: Value = serde_json::from_str(include_str!("../../../configs/reference.json")).unwrap();
    c["output_dir"] = json!(out);
    c["simulation"]["use_mismatch"] = json!(true);
    c["simulation"]["t_end_s"] = json!(120.0);
    c["simulation"]["post_window_s"] = json!([100.0, 120.0]);
    let cfg = write_config(dir.path(), "cfg.json", &c);
    assert_eq!(run("design", &cfg).status.code(), Some(0));
    let o = run("simulate", &cfg);
    assert_eq!(o.status.code(), Some(3));
    let err = stderr_json(&o);
    assert_eq!(err["error"], "UnstableSimulation");
    let partial = PathBuf::from(err["details"]["partial_trace"].as_str().unwrap());
    assert!(partial.exists());
    assert!(out.join("error.json").exists());
}

#[test]
fn resolved_config_round_trips() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("out");
    let cfg = write_config(dir.path(), "cfg.json", &minimal_config(&out));
    assert_eq!(run("design", &cfg).status.code(), Some(0));
    let resolved = out.join("config.resolved.json");
    let first = std::fs::read_to_string(&resolved).unwrap();
    let again = dir.path().join("again");
    let o = imc(&["design", "--config", resolved.to_str().unwrap(), "--out", again.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(0));
    let second: Value = serde_json::from_str(&std::fs::read_to_string(again.join("config.resolved.json")).unwrap()).unwrap();
    assert_eq!(serde_json::from_str::<Value>(&first).unwrap(), second);
    let a: Value = serde_json::from_str(&std::fs::read_to_string(out.join("controller.json")).unwrap()).unwrap();
    let b: Value = serde_json::from_str(&std::fs::read_to_string(again.join("controller.json")).unwrap()).unwrap();
    assert_eq!(a, b);
}
