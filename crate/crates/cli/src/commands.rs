//! Subcommand implementations. Each writes its artifacts under the output
//! directory and returns the JSON report it wrote.

use std::f64::consts::PI;
use std::path::{Path, PathBuf};
use std::time::Instant;

use imc_core::analysis::{
    hinf_grid, ideal_numerator, perturbed_char_roots, perturbed_sensitivity, qp_roots, sensitivity_sweep,
    small_gain_check, write_roots_csv, write_sweep_csv,
};
use imc_core::filtersynth::build_filter;
use imc_core::imcassembly::{assemble_controller_seeded, controller_delay, controller_poles, ImcController};
use imc_core::plantmodel::DelayedRationalPlant;
use imc_core::sigmodel::HarmonicSet;
use imc_core::sim::{
    attenuation_db, harmonic_profile, harmonic_residuals, inverse_harmonic_profile, run_imc, sample_count,
    sawtooth, synth_disturbance, SimOptions,
};
use imc_core::{Error, Result};
use num_complex::Complex64;
use serde_json::{json, Value};

use crate::config::{SignalConfig, ToolkitConfig};

/// Outcome of a command: its report and whether every check passed.
pub struct Outcome {
    pub report: Value,
    pub pass: bool,
}

fn pairs(v: &[Complex64]) -> Vec<[f64; 2]> {
    v.iter().map(|z| [z.re, z.im]).collect()
}

fn write_json(path: &Path, v: &Value) -> Result<()> {
    std::fs::write(path, serde_json::to_string_pretty(v)?)?;
    Ok(())
}

pub fn load_controller(path: &Path) -> Result<ImcController> {
    if !path.exists() {
        return Err(Error::Io(format!(
            "controller file {} not found (run the design command first)",
            path.display()
        )));
    }
    ImcController::load(path)
}

pub fn design(cfg: &ToolkitConfig, out: &Path, seed: u64) -> Result<Outcome> {
    let start = Instant::now();
    let plant = cfg.plant()?;
    let spec = cfg.filter_spec()?;
    let f = build_filter(&spec)?;
    let (theta_min, _) = controller_delay(plant.tau_s, spec.harmonics.base_rad_s())?;
    let theta = cfg.design.theta_s.unwrap_or(theta_min);
    let c = assemble_controller_seeded(&f, &plant, theta, seed)?;
    c.save(&out.join("controller.json"))?;
    let v = &f.verification;
    let report = json!({
        "filter_order": f.order(),
        "controller_order": c.order(),
        "relative_degree": f.relative_degree,
        "theta_s": c.theta_s,
        "l_b": c.l_b,
        "verification": {
            "dc_error": v.dc_error,
            "max_harmonic_error": v.max_harmonic_error,
            "markov_abs": v.markov,
            "markov_rounding_floor": v.markov_rounding_floor,
            "max_markov_relative": v.max_markov_relative,
            "stability_margin": v.stability_margin,
            "pass": v.pass,
        },
        "input_solve": {
            "condition_estimate": f.solve_report.condition_estimate,
            "residual_norm": f.solve_report.residual_norm,
            "b_norm_inf": f.b.norm_inf(),
        },
        "assembly_error": c.assembly_error,
        "filter_poles": pairs(&c.filter_poles),
        "filter_zeros": pairs(&c.filter_zeros),
        "controller_poles": pairs(&controller_poles(&c)?),
        "provenance": c.provenance,
        "runtime_ms": start.elapsed().as_secs_f64() * 1e3,
    });
    write_json(&out.join("design_report.json"), &report)?;
    Ok(Outcome { report, pass: v.pass })
}

fn hz(band: [f64; 2]) -> (f64, f64) {
    (2.0 * PI * band[0], 2.0 * PI * band[1])
}

pub fn analyze(cfg: &ToolkitConfig, c: &ImcController, out: &Path) -> Result<Outcome> {
    let a = cfg.analysis();
    let mismatch = cfg.mismatch(&c.model)?;
    let sweep = sensitivity_sweep(c, mismatch.as_ref(), hz(a.sweep_band_hz), a.sweep_points.max(2))?;
    write_sweep_csv(&out.join("sensitivity.csv"), &sweep)?;
    let tau = c.model.tau_s + c.theta_s;
    let ideal_mag = |w: f64| -> Result<f64> {
        let s = Complex64::new(0.0, w);
        Ok((1.0 - c.filter_response(s) * (-s * tau).exp()).norm())
    };
    let hinf = hinf_grid(|w| ideal_mag(w).unwrap_or(f64::NAN), hz(a.hinf_band_hz), a.hinf_rel_tol)?;
    let notches: Vec<f64> = c
        .harmonics
        .frequencies()
        .iter()
        .map(|&w| ideal_mag(w))
        .collect::<Result<_>>()?;
    let mut report = json!({
        "ideal": {
            "hinf_norm": hinf.norm,
            "hinf_f_hz": hinf.omega / (2.0 * PI),
            "notch_magnitudes": notches,
        },
        "harmonics_hz": c.harmonics.frequencies().iter().map(|w| w / (2.0 * PI)).collect::<Vec<_>>(),
    });
    if let Some(m) = &mismatch {
        let sg = small_gain_check(c, m, hz(a.hinf_band_hz), a.hinf_rel_tol)?;
        let pert_notches: Vec<f64> = c
            .harmonics
            .frequencies()
            .iter()
            .map(|&w| perturbed_sensitivity(c, m, w).map(|p| p.value.norm()))
            .collect::<Result<_>>()?;
        let pert_hinf = hinf_grid(
            |w| perturbed_sensitivity(c, m, w).map(|p| p.value.norm()).unwrap_or(f64::NAN),
            hz(a.hinf_band_hz),
            a.hinf_rel_tol,
        )?;
        report["perturbed"] = json!({
            "hinf_norm": pert_hinf.norm,
            "hinf_f_hz": pert_hinf.omega / (2.0 * PI),
            "notch_magnitudes": pert_notches,
            "small_gain_margin": sg.margin,
            "small_gain_f_hz": sg.omega / (2.0 * PI),
            "small_gain_pass": sg.pass,
        });
    }
    write_json(&out.join("analysis_report.json"), &report)?;
    Ok(Outcome { report, pass: true })
}

pub fn spectrum(cfg: &ToolkitConfig, c: &ImcController, out: &Path) -> Result<Outcome> {
    let region = cfg.region(&c.harmonics)?;
    let zeros = qp_roots(&ideal_numerator(c)?, &region)?;
    let mut rows: Vec<(Complex64, &str)> = zeros.roots.iter().map(|z| (*z, "ideal_zero")).collect();
    let poles_in: Vec<Complex64> = c
        .filter_poles
        .iter()
        .copied()
        .filter(|p| region.contains(*p, 0.0))
        .collect();
    rows.extend(poles_in.iter().map(|p| (*p, "ideal_pole")));
    let mut report = json!({
        "region": region,
        "ideal_zeros": zeros.roots.len(),
        "ideal_zero_argument_count": zeros.argument_count,
        "ideal_poles": poles_in.len(),
    });
    if let Some(m) = cfg.mismatch(&c.model)? {
        let r = perturbed_char_roots(c, &m, &region)?;
        rows.extend(r.scan.roots.iter().map(|p| (*p, "perturbed_pole")));
        rows.extend(r.fixed_modes.iter().map(|p| (*p, "fixed_mode")));
        let unstable: Vec<Complex64> = r.scan.roots.iter().copied().filter(|p| p.re >= 0.0).collect();
        let fixed_unstable = r.fixed_modes.iter().any(|p| p.re >= 0.0);
        let stable = unstable.is_empty() && !fixed_unstable;
        report["perturbed"] = json!({
            "poles": r.scan.roots.len(),
            "argument_count": r.scan.argument_count,
            "max_real_part": r.scan.roots.iter().map(|p| p.re).fold(f64::NEG_INFINITY, f64::max),
            "unstable_poles": pairs(&unstable),
            "fixed_modes": pairs(&r.fixed_modes),
            "stable": stable,
        });
    }
    write_roots_csv(&out.join("roots.csv"), &rows)?;
    write_json(&out.join("spectrum_report.json"), &report)?;
    Ok(Outcome { report, pass: true })
}

fn signal(sig: &SignalConfig, h_set: &HarmonicSet, h: f64, t_end: f64) -> Result<Vec<f64>> {
    let n = sample_count(h, t_end)?;
    match sig {
        SignalConfig::Zero => Ok(vec![0.0; n]),
        SignalConfig::Constant { value } => Ok(vec![*value; n]),
        SignalConfig::Sine {
            omega_rad_s,
            amplitude,
            phase_rad,
        } => Ok((0..n)
            .map(|k| amplitude * (omega_rad_s * k as f64 * h + phase_rad).sin())
            .collect()),
        SignalConfig::Sawtooth { period_s, amplitude } => sawtooth(*period_s, *amplitude, h, t_end),
        SignalConfig::Harmonics { amplitudes } => {
            let f = match amplitudes {
                Some(a) => harmonic_profile(h_set, a)?,
                None => inverse_harmonic_profile(h_set)?,
            };
            synth_disturbance(&f, h, t_end)
        }
    }
}

/// Whole base periods ending at `end`, at most `max` of them, starting no
/// earlier than `start`.
fn window(start: f64, end: f64, period: f64, max: usize) -> Option<[f64; 2]> {
    let count = (((end - start) / period + 1e-9).floor() as usize).min(max);
    (count >= 1).then_some([end - count as f64 * period, end])
}

pub fn simulate(cfg: &ToolkitConfig, c: &ImcController, out: &Path) -> Result<(Outcome, Option<Error>)> {
    let s = cfg
        .simulation
        .as_ref()
        .ok_or_else(|| Error::InvalidSpec("config has no simulation section".into()))?;
    let h_set = &c.harmonics;
    let d = signal(&s.disturbance, h_set, s.h_s, s.t_end_s)?;
    let r = signal(&s.reference, h_set, s.h_s, s.t_end_s)?;
    let model: &DelayedRationalPlant = &c.model;
    let plant_true = match (s.use_mismatch, cfg.mismatch(model)?) {
        (true, Some(m)) => m.system,
        _ => model.clone(),
    };
    let opts = SimOptions {
        hold_compensation: s.hold_compensation,
        controller_hold: s.controller_hold,
    };
    let run = run_imc(&plant_true, model, c, &r, &d, s.h_s, s.t_end_s, s.t_on_s, opts)?;
    let trace_path: PathBuf = out.join("trace.csv");
    run.trace.write_csv(&trace_path)?;
    if let Some(e) = run.failure {
        let report = json!({ "partial_trace": trace_path, "samples": run.trace.len() });
        write_json(&out.join("simulation_report.json"), &report)?;
        return Ok((Outcome { report, pass: false }, Some(e)));
    }
    let period = 2.0 * PI / h_set.base_rad_s();
    let top = h_set.multiples().last().copied().unwrap_or(0) as usize;
    let pre = s.pre_window_s.or_else(|| window(0.0, s.t_on_s, period, 10));
    let post = s
        .post_window_s
        .or_else(|| window(s.t_on_s + (s.t_end_s - s.t_on_s) / 2.0, s.t_end_s, period, 20));
    let mut report = json!({
        "samples": run.trace.len(),
        "delays": run.trace.delays,
        "controller_hold": s.controller_hold,
        "max_abs_y": run.trace.y.iter().fold(0.0f64, |m, v| m.max(v.abs())),
    });
    if let (Some(pre), Some(post)) = (pre, post) {
        let a = harmonic_residuals(&run.trace, period, top, (pre[0], pre[1]))?;
        let b = harmonic_residuals(&run.trace, period, top, (post[0], post[1]))?;
        let idx: Vec<usize> = h_set.multiples().iter().map(|m| *m as usize - 1).collect();
        let pre_t: Vec<f64> = idx.iter().map(|&i| a[i]).collect();
        let post_t: Vec<f64> = idx.iter().map(|&i| b[i]).collect();
        let db = attenuation_db(&pre_t, &post_t);
        report["residuals"] = json!({
            "pre_window_s": pre,
            "post_window_s": post,
            "multiples": h_set.multiples(),
            "pre": pre_t,
            "post": post_t,
            "attenuation_db": db.iter().map(|x| if x.is_finite() { json!(x) } else { Value::Null }).collect::<Vec<_>>(),
        });
    }
    write_json(&out.join("simulation_report.json"), &report)?;
    Ok((Outcome { report, pass: true }, None))
}
