//! Stable, minimum-phase rational plants with an input delay,
//! `G(s)e^{−sτ} = a(s)/b(s)·e^{−sτ}`.

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numkernel::{balance, Matrix};
use crate::poly;
use crate::statespace::StateSpaceModel;

/// A root with real part above this value fails the Hurwitz test.
pub const HURWITZ_MARGIN: f64 = -1e-9;
/// Denominator magnitude below which [`eval_plant`] reports a pole hit.
pub const POLE_HIT: f64 = 1e-300;

/// Coefficients are stored in ascending powers: `numerator[i]` multiplies `sⁱ`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DelayedRationalPlant {
    pub numerator: Vec<f64>,
    pub denominator: Vec<f64>,
    pub tau_s: f64,
}

impl DelayedRationalPlant {
    /// Checks shape-level invariants (nonempty, finite, nonzero leading
    /// coefficients, nonnegative delay). Root-based checks live in
    /// [`validate_plant`].
    pub fn new(numerator: Vec<f64>, denominator: Vec<f64>, tau_s: f64) -> Result<Self> {
        let p = Self {
            numerator,
            denominator,
            tau_s,
        };
        p.check_shape()?;
        Ok(p)
    }

    pub fn check_shape(&self) -> Result<()> {
        if self.numerator.is_empty() || self.denominator.is_empty() {
            return Err(Error::InvalidPlant("coefficient arrays must be nonempty".into()));
        }
        if !self.numerator.iter().chain(&self.denominator).all(|c| c.is_finite()) {
            return Err(Error::InvalidPlant("coefficients must be finite".into()));
        }
        if *self.numerator.last().unwrap() == 0.0 || *self.denominator.last().unwrap() == 0.0 {
            return Err(Error::InvalidPlant("leading coefficients must be nonzero".into()));
        }
        if !(self.tau_s >= 0.0) || !self.tau_s.is_finite() {
            return Err(Error::InvalidPlant(format!("delay must be finite and >= 0, got {}", self.tau_s)));
        }
        Ok(())
    }

    /// Numerator degree α.
    pub fn alpha(&self) -> usize {
        self.numerator.len() - 1
    }

    /// Denominator degree β.
    pub fn beta(&self) -> usize {
        self.denominator.len() - 1
    }

    /// Rational part `a(s)/b(s)` without the delay.
    pub fn eval_rational(&self, s: Complex64) -> Result<Complex64> {
        let den = poly::eval(&self.denominator, s);
        if den.norm() < POLE_HIT {
            return Err(Error::PoleHit);
        }
        Ok(poly::eval(&self.numerator, s) / den)
    }

    /// The same plant multiplied by `num(s)/den(s)`, with the delay unchanged.
    pub fn cascade(&self, num: &[f64], den: &[f64]) -> Result<Self> {
        Self::new(
            poly::mul(&self.numerator, num),
            poly::mul(&self.denominator, den),
            self.tau_s,
        )
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PlantValidationReport {
    pub is_proper: bool,
    pub numerator_hurwitz: bool,
    pub denominator_hurwitz: bool,
    pub delay_nonnegative: bool,
    pub relative_degree: usize,
    /// Largest real part over numerator and denominator roots.
    pub worst_real_part: f64,
}

impl PlantValidationReport {
    pub fn is_valid(&self) -> bool {
        self.is_proper && self.numerator_hurwitz && self.denominator_hurwitz && self.delay_nonnegative
    }

    /// Converts a failing report into [`Error::InvalidPlant`].
    pub fn require_valid(&self) -> Result<()> {
        if self.is_valid() {
            return Ok(());
        }
        let mut why = Vec::new();
        if !self.is_proper {
            why.push("improper");
        }
        if !self.numerator_hurwitz {
            why.push("numerator not Hurwitz (non-minimum phase)");
        }
        if !self.denominator_hurwitz {
            why.push("denominator not Hurwitz (unstable)");
        }
        if !self.delay_nonnegative {
            why.push("negative delay");
        }
        Err(Error::InvalidPlant(why.join(", ")))
    }
}

fn max_root_real(coeffs: &[f64]) -> f64 {
    match poly::roots(coeffs) {
        Ok(r) => r.iter().map(|z| z.re).fold(f64::NEG_INFINITY, f64::max),
        Err(_) => f64::INFINITY,
    }
}

pub fn validate_plant(p: &DelayedRationalPlant) -> PlantValidationReport {
    let shape_ok = p.check_shape().is_ok();
    let (num_max, den_max) = if shape_ok {
        (max_root_real(&p.numerator), max_root_real(&p.denominator))
    } else {
        (f64::INFINITY, f64::INFINITY)
    };
    let is_proper = shape_ok && p.beta() >= p.alpha();
    PlantValidationReport {
        is_proper,
        numerator_hurwitz: num_max <= HURWITZ_MARGIN,
        denominator_hurwitz: den_max <= HURWITZ_MARGIN,
        delay_nonnegative: p.tau_s >= 0.0,
        relative_degree: if is_proper { p.beta() - p.alpha() } else { 0 },
        worst_real_part: num_max.max(den_max),
    }
}

/// `a(s)/b(s)·e^{−sτ}`.
pub fn eval_plant(p: &DelayedRationalPlant, s: Complex64) -> Result<Complex64> {
    Ok(p.eval_rational(s)? * (-s * p.tau_s).exp())
}

/// Controllable canonical realization of a strictly proper `num(s)/den(s)`
/// plus feedthrough for the biproper case.
fn controllable_canonical(num: &[f64], den: &[f64]) -> Result<StateSpaceModel> {
    let n = den.len() - 1;
    let lead = den[n];
    if n == 0 {
        return Ok(StateSpaceModel::gain(num[0] / lead));
    }
    let d = if num.len() > n { num[n] / lead } else { 0.0 };
    let mut a = Matrix::zeros(n, n);
    for i in 0..n - 1 {
        a[(i, i + 1)] = 1.0;
    }
    for j in 0..n {
        a[(n - 1, j)] = -den[j] / lead;
    }
    let mut b = Matrix::zeros(n, 1);
    b[(n - 1, 0)] = 1.0;
    // strictly proper remainder numerator: num/lead − d·den/lead
    let c = Matrix::from_fn(1, n, |_, j| num.get(j).copied().unwrap_or(0.0) / lead - d * den[j] / lead);
    StateSpaceModel::new(a, b, c, d)
}

/// Realization of `1/a(s)`: for α ≥ 1 the controllable canonical form
/// `A_α` (companion of `a`), `B_α = e_α`, `C_α = (1/a_α, 0, …, 0)`,
/// `D_α = 0`; for α = 0 a pure gain `1/a₀` with no states.
pub fn inverse_numerator_realization(p: &DelayedRationalPlant) -> Result<StateSpaceModel> {
    p.check_shape()?;
    if max_root_real(&p.numerator) > HURWITZ_MARGIN {
        return Err(Error::InvalidPlant("numerator not Hurwitz: plant inverse would be unstable".into()));
    }
    controllable_canonical(&[1.0], &p.numerator)
}

/// Denominator coefficients in descending powers `b_β, …, b₀`.
pub fn denominator_coefficients(p: &DelayedRationalPlant) -> Vec<f64> {
    p.denominator.iter().rev().copied().collect()
}

/// The same plant with every denominator root in the closed right half-plane
/// mirrored across the imaginary axis (`λ → −conj(λ)`). Mirroring a
/// conjugate pair multiplies the plant by an all-pass factor, so `|G(jω)|` is
/// unchanged and only the phase moves. The DC gain keeps its value because
/// the leading and constant coefficients keep their magnitudes.
pub fn reflect_unstable_poles(p: &DelayedRationalPlant) -> Result<DelayedRationalPlant> {
    p.check_shape()?;
    let roots = poly::roots(&p.denominator)?;
    if roots.iter().all(|r| r.re < 0.0) {
        return Ok(p.clone());
    }
    let mirrored: Vec<Complex64> = roots
        .iter()
        .map(|r| if r.re >= 0.0 { -r.conj() } else { *r })
        .collect();
    let lead = *p.denominator.last().unwrap();
    let mut den = poly::scale(&poly::from_roots(&mirrored), lead);
    // keep b₀ exact in magnitude; rounding in the root product only perturbs it
    let b0 = p.denominator[0];
    if den[0] != 0.0 && b0 != 0.0 {
        den[0] = b0.abs() * den[0].signum();
    }
    DelayedRationalPlant::new(p.numerator.clone(), den, p.tau_s)
}

/// Realization of the rational part `a(s)/b(s)` for simulation:
/// controllable canonical form followed by diagonal balancing of `A`
/// and an equal split of the input/output scaling.
pub fn plant_realization(p: &DelayedRationalPlant) -> Result<StateSpaceModel> {
    p.check_shape()?;
    if p.alpha() > p.beta() {
        return Err(Error::InvalidPlant("improper plant has no state-space realization".into()));
    }
    let cc = controllable_canonical(&p.numerator, &p.denominator)?;
    if cc.order() == 0 {
        return Ok(cc);
    }
    let (a, scale) = balance(&cc.a);
    let n = cc.order();
    let mut b = Matrix::from_fn(n, 1, |i, _| cc.b[(i, 0)] / scale[i]);
    let mut c = Matrix::from_fn(1, n, |_, j| cc.c[(0, j)] * scale[j]);
    let nb = b.norm_fro();
    let nc = c.norm_fro();
    if nb > 0.0 && nc > 0.0 {
        let k = (nc / nb).sqrt();
        b = b.scale(k);
        c = c.scale(1.0 / k);
    }
    StateSpaceModel::new(a, b, c, cc.d)
}

#[cfg(test)]
mod tests {
    use super::*;

    pub(crate) fn rig_plant() -> DelayedRationalPlant {
        DelayedRationalPlant::new(
            vec![1.031e6, 4991.0, 1258.0],
            vec![3e9, 3.3e7, 8.4e6, 5.2e4, 5764.0, 4.2, 1.0],
            0.2,
        )
        .unwrap()
    }

    #[test]
    fn raw_identified_denominator_has_unstable_pair() {
        let r = validate_plant(&rig_plant());
        assert!(r.is_proper && r.numerator_hurwitz && r.delay_nonnegative);
        assert!(!r.denominator_hurwitz, "{r:?}");
        assert!((r.worst_real_part - 5.926).abs() < 1e-3);
        assert_eq!(r.relative_degree, 4);
    }

    #[test]
    fn reflected_plant_is_valid_with_same_magnitude() {
        let raw = rig_plant();
        let p = reflect_unstable_poles(&raw).unwrap();
        let r = validate_plant(&p);
        assert!(r.is_valid(), "{r:?}");
        assert_eq!(r.relative_degree, 4);
        assert_eq!((p.alpha(), p.beta()), (2, 6));
        assert_eq!(p.denominator[0], 3e9);
        for w in [0.0, 5.0, 23.4, 63.1, 200.0] {
            let s = Complex64::new(0.0, w);
            let a = raw.eval_rational(s).unwrap().norm();
            let b = p.eval_rational(s).unwrap().norm();
            assert!((a - b).abs() <= 1e-9 * a, "w={w}: {a} vs {b}");
        }
        assert_eq!(reflect_unstable_poles(&p).unwrap(), p);
    }

    #[test]
    fn unstable_denominator_rejected() {
        let p = DelayedRationalPlant::new(vec![1.0], vec![-1.0, 1.0], 0.0).unwrap();
        let r = validate_plant(&p);
        assert!(!r.denominator_hurwitz);
        assert!(r.require_valid().is_err());
    }

    #[test]
    fn non_minimum_phase_rejected() {
        let p = DelayedRationalPlant::new(vec![-1.0, 0.0, 1.0], vec![1.0, 2.0, 1.0], 0.0).unwrap();
        let r = validate_plant(&p);
        assert!(!r.numerator_hurwitz);
        assert!(r.denominator_hurwitz);
        assert!(inverse_numerator_realization(&p).is_err());
    }

    #[test]
    fn dc_gain_and_delay_modulus() {
        let p = rig_plant();
        let g0 = eval_plant(&p, Complex64::new(0.0, 0.0)).unwrap();
        assert!((g0.re - 1.031e6 / 3e9).abs() < 1e-18 && g0.im == 0.0);
        let mut q = p.clone();
        q.tau_s = 0.0;
        for w in [0.3, 7.0, 55.0] {
            let s = Complex64::new(0.0, w);
            let with = eval_plant(&p, s).unwrap();
            let without = eval_plant(&q, s).unwrap();
            assert!((with.norm() - without.norm()).abs() <= 1e-14 * without.norm());
            assert_eq!(without, p.eval_rational(s).unwrap());
        }
    }

    #[test]
    fn pole_hit_reported() {
        let p = DelayedRationalPlant::new(vec![1.0], vec![0.0, 1.0], 0.0).unwrap();
        assert_eq!(eval_plant(&p, Complex64::new(0.0, 0.0)), Err(Error::PoleHit));
    }

    #[test]
    fn inverse_numerator_small_cases() {
        let p = DelayedRationalPlant::new(vec![1.0, 1.0], vec![1.0, 1.0], 0.0).unwrap();
        let r = inverse_numerator_realization(&p).unwrap();
        assert_eq!(r.order(), 1);
        assert_eq!(r.a[(0, 0)], -1.0);
        assert!((r.transfer(Complex64::new(0.0, 0.0)).unwrap().re - 1.0).abs() < 1e-15);

        let g = DelayedRationalPlant::new(vec![2.0], vec![1.0, 1.0], 0.0).unwrap();
        let r = inverse_numerator_realization(&g).unwrap();
        assert_eq!(r.order(), 0);
        assert_eq!(r.d, 0.5);
    }

    #[test]
    fn inverse_numerator_of_identified_plant() {
        let p = rig_plant();
        let r = inverse_numerator_realization(&p).unwrap();
        assert_eq!(r.order(), 2);
        let disc: f64 = 4991.0f64.powi(2) - 4.0 * 1258.0 * 1.031e6;
        let re = -4991.0 / (2.0 * 1258.0);
        let im = (-disc).sqrt() / (2.0 * 1258.0);
        let mut poles = r.poles().unwrap();
        poles.sort_by(|a, b| a.im.partial_cmp(&b.im).unwrap());
        assert!((poles[1] - Complex64::new(re, im)).norm() < 1e-10 * im);
        for s in [Complex64::new(-1.0, 3.0), Complex64::new(-20.0, -40.0)] {
            let prod = r.transfer(s).unwrap() * poly::eval(&p.numerator, s);
            assert!((prod - 1.0).norm() < 1e-12);
        }
    }

    #[test]
    fn descending_order_round_trip() {
        let p = rig_plant();
        assert_eq!(
            denominator_coefficients(&p),
            vec![1.0, 4.2, 5764.0, 5.2e4, 8.4e6, 3.3e7, 3e9]
        );
        let integ = DelayedRationalPlant::new(vec![1.0], vec![0.0, 1.0], 0.0).unwrap();
        assert_eq!(denominator_coefficients(&integ), vec![1.0, 0.0]);
        let mut back = denominator_coefficients(&p);
        back.reverse();
        assert_eq!(back, p.denominator);
    }

    #[test]
    fn simulation_realization_matches_transfer() {
        let p = rig_plant();
        let ss = plant_realization(&p).unwrap();
        for s in [
            Complex64::new(0.0, 0.0),
            Complex64::new(0.0, 12.566),
            Complex64::new(-3.0, 90.0),
        ] {
            let want = p.eval_rational(s).unwrap();
            let got = ss.transfer(s).unwrap();
            assert!((got - want).norm() <= 1e-10 * want.norm(), "{s}: {got} vs {want}");
        }
    }
}
