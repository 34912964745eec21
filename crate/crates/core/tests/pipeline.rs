//! End-to-end checks across synthesis, assembly, analysis and simulation.

use std::f64::consts::PI;

use imc_core::analysis::{
    ideal_numerator, ideal_sensitivity, perturbed_char_roots, perturbed_sensitivity, qp_roots, MismatchSpec,
    QpTerm, QuasiPolynomial, SpectrumRegion,
};
use imc_core::filtersynth::{build_filter, FilterDesignSpec, FilterRealization};
use imc_core::imcassembly::{assemble_controller, controller_delay, ImcController};
use imc_core::plantmodel::DelayedRationalPlant;
use imc_core::reference::{reference_plant, reference_spec, MISMATCH_DEN, MISMATCH_NUM, TAU_S};
use imc_core::sigmodel::{fourier_analyze, harmonic_set};
use imc_core::sim::{
    harmonic_profile, harmonic_residuals, run_imc, sawtooth, simulate_imc, synth_disturbance, SimOptions,
};
use num_complex::Complex64;

const BASE: f64 = 2.0 * PI;

fn first_order_plant() -> DelayedRationalPlant {
    DelayedRationalPlant::new(vec![1.0], vec![1.0, 0.1], 0.05).unwrap()
}

fn small_design(k: usize) -> (FilterRealization, ImcController) {
    let spec = FilterDesignSpec::with_defaults(harmonic_set(BASE, k).unwrap(), 1, 1.0, 1.0).unwrap();
    let f = build_filter(&spec).unwrap();
    let p = first_order_plant();
    let (theta, _) = controller_delay(p.tau_s, BASE).unwrap();
    let c = assemble_controller(&f, &p, theta).unwrap();
    (f, c)
}

fn sine_rejection_residual(c: &ImcController, h: f64) -> (f64, f64) {
    let p = first_order_plant();
    let t_end = 50.0;
    let d = synth_disturbance(&harmonic_profile(&c.harmonics, &[1.0]).unwrap(), h, t_end).unwrap();
    let r = vec![0.0; d.len()];
    let tr = simulate_imc(&p, &p, c, &r, &d, h, t_end, 1.0).unwrap();
    let pre = harmonic_residuals(&tr, 1.0, 1, (0.0, 1.0)).unwrap()[0];
    let post = harmonic_residuals(&tr, 1.0, 1, (40.0, 50.0)).unwrap()[0];
    (pre, post)
}

#[test]
fn reference_design_has_expected_orders_and_delay() {
    let f = build_filter(&reference_spec().unwrap()).unwrap();
    assert_eq!(f.order(), 21);
    let (theta, l_b) = controller_delay(TAU_S, 4.0 * PI).unwrap();
    assert_eq!((theta, l_b), (0.3, 1));
    let c = assemble_controller(&f, &reference_plant(), theta).unwrap();
    assert_eq!(c.order(), 23);
    for w in c.harmonics.frequencies() {
        assert!(ideal_sensitivity(&f, TAU_S, theta, w).unwrap().norm() <= 1e-6);
    }
}

#[test]
fn small_design_is_three_states_and_proper() {
    let (f, c) = small_design(1);
    assert_eq!(f.order(), 3);
    assert_eq!(c.order(), 3);
    assert!(f.verification.pass);
    assert!(c.assembly_error <= 1e-7);
    assert!((c.theta_s - 0.95).abs() < 1e-12);
}

#[test]
fn ideal_char_roots_are_filter_poles() {
    let (f, c) = small_design(2);
    let poles = f.poles().unwrap();
    let re_min = poles.iter().map(|z| z.re).fold(f64::INFINITY, f64::min) - 1.0;
    let im_max = poles.iter().map(|z| z.im.abs()).fold(0.0, f64::max) + 1.0;
    let region = SpectrumRegion::new((re_min, 1.0), (-im_max, im_max), 0.01).unwrap();
    let roots = perturbed_char_roots(&c, &MismatchSpec::ideal(first_order_plant()).unwrap(), &region).unwrap();
    assert_eq!(roots.scan.roots.len(), poles.len());
    for z in &poles {
        let nearest = roots.scan.roots.iter().map(|s| (s - z).norm()).fold(f64::INFINITY, f64::min);
        assert!(nearest <= 1e-6 * z.norm().max(1.0), "pole {z} missed by {nearest:e}");
    }
}

#[test]
fn perturbed_sensitivity_reduces_to_ideal_without_mismatch() {
    let (f, c) = small_design(3);
    let m = MismatchSpec::ideal(first_order_plant()).unwrap();
    for w in [0.05, 0.7, 3.0, 9.5, 40.0, 300.0] {
        let ideal = ideal_sensitivity(&f, c.model.tau_s, c.theta_s, w).unwrap();
        let pert = perturbed_sensitivity(&c, &m, w).unwrap().value;
        assert!((ideal - pert).norm() <= 1e-10 * ideal.norm().max(1.0), "ω = {w}");
    }
}

#[test]
fn notches_survive_plant_mismatch() {
    let (_, c) = small_design(3);
    let m = MismatchSpec::multiplicative(first_order_plant(), &MISMATCH_NUM, &MISMATCH_DEN).unwrap();
    for w in c.harmonics.frequencies() {
        assert!(perturbed_sensitivity(&c, &m, w).unwrap().value.norm() <= 1e-6);
    }
}

#[test]
fn ideal_numerator_vanishes_at_targeted_harmonics() {
    let (_, c) = small_design(2);
    let q = ideal_numerator(&c).unwrap();
    let region = SpectrumRegion::new((-20.0, 2.0), (0.0, 15.0), 0.02).unwrap();
    let scan = qp_roots(&q, &region).unwrap();
    for w in c.harmonics.frequencies() {
        let nearest = scan
            .roots
            .iter()
            .map(|s| (s - Complex64::new(0.0, w)).norm())
            .fold(f64::INFINITY, f64::min);
        assert!(nearest <= 1e-6, "jω = {w}: {nearest:e}");
    }
}

#[test]
fn unit_delay_scan_finds_integer_frequencies() {
    let q = QuasiPolynomial::new(vec![
        QpTerm { coeffs: vec![-1.0], delay: 0.0 },
        QpTerm { coeffs: vec![1.0], delay: 1.0 },
    ])
    .unwrap();
    let scan = qp_roots(&q, &SpectrumRegion::new((-1.0, 1.0), (-7.0, 7.0), 0.05).unwrap()).unwrap();
    let expected = [Complex64::new(0.0, -2.0 * PI), Complex64::new(0.0, 0.0), Complex64::new(0.0, 2.0 * PI)];
    assert_eq!(scan.roots.len(), 3);
    for (s, z) in scan.roots.iter().zip(expected) {
        assert!((s - z).norm() <= 1e-8);
    }
}

#[test]
fn single_harmonic_is_rejected() {
    let (_, c) = small_design(1);
    let (pre, post) = sine_rejection_residual(&c, 1e-3);
    assert!((pre - 1.0).abs() < 1e-9);
    assert!(post <= 0.01 * pre, "residual {post:e}");
}

#[test]
fn halving_the_step_at_least_halves_the_residual() {
    let (_, c) = small_design(1);
    let (_, coarse) = sine_rejection_residual(&c, 2e-3);
    let (_, fine) = sine_rejection_residual(&c, 1e-3);
    assert!(fine <= 0.5 * coarse, "h: {coarse:e}, h/2: {fine:e}");
}

#[test]
fn zero_inputs_give_zero_trace_and_runs_repeat() {
    let (_, c) = small_design(2);
    let p = first_order_plant();
    let n = 5001;
    let zeros = vec![0.0; n];
    let tr = simulate_imc(&p, &p, &c, &zeros, &zeros, 1e-3, 5.0, 0.5).unwrap();
    assert!(tr.y.iter().chain(&tr.u).chain(&tr.y_m).all(|v| *v == 0.0));

    let d = sawtooth(1.0, 1.0, 1e-3, 5.0).unwrap();
    let a = run_imc(&p, &p, &c, &zeros, &d, 1e-3, 5.0, 0.5, SimOptions::default()).unwrap();
    let b = run_imc(&p, &p, &c, &zeros, &d, 1e-3, 5.0, 0.5, SimOptions::default()).unwrap();
    assert_eq!(a.trace, b.trace);
}

#[test]
fn sawtooth_harmonics_decay_as_inverse_index() {
    let h = 1e-4;
    let x = sawtooth(0.5, 1.0, h, 0.5 - h).unwrap();
    let f = fourier_analyze(&x, h, 0.5, 8).unwrap();
    assert!(f.amplitudes[0].abs() < 1e-12);
    for l in 2..=8 {
        let ratio = f.amplitudes[l] / f.amplitudes[1];
        assert!((ratio - 1.0 / l as f64).abs() < 1e-3, "c_{l}/c_1 = {ratio}");
    }
}

#[test]
fn controller_round_trips_through_json() {
    let (_, c) = small_design(2);
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("controller.json");
    c.save(&path).unwrap();
    let back = ImcController::load(&path).unwrap();
    assert_eq!(back, c);
    let s = Complex64::new(0.3, 7.0);
    assert_eq!(back.transfer(s).unwrap(), c.transfer(s).unwrap());
}
