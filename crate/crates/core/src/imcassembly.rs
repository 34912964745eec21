//! The IMC controller `Q(s)e^{−sθ}` with `Q = F·b/a`, assembled in state
//! space from the filter and the plant inverse, together with the delay `θ`
//! that aligns `τ + θ` with a whole number of base periods.

use std::f64::consts::PI;
use std::path::Path;

use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::filtersynth::FilterRealization;
use crate::numkernel::{eigenvalues, Matrix};
use crate::plantmodel::{denominator_coefficients, inverse_numerator_realization, validate_plant, DelayedRationalPlant};
use crate::poly;
use crate::sigmodel::HarmonicSet;
use crate::statespace::StateSpaceModel;

/// Relative tolerance of the assembly cross-check against `F·b/a`.
pub const ASSEMBLY_TOL: f64 = 1e-7;
pub const ASSEMBLY_CHECK_SEED: u64 = 0x1_3c0;
const ASSEMBLY_CHECK_POINTS: usize = 5;

/// `θ = 2π·l_b/ω_b − τ` with `l_b = ⌊τω_b/2π⌋ + 1`.
pub fn controller_delay(tau_s: f64, base_rad_s: f64) -> Result<(f64, u32)> {
    if !(tau_s >= 0.0) || !tau_s.is_finite() {
        return Err(Error::InvalidPlant(format!("delay must be finite and >= 0, got {tau_s}")));
    }
    if !(base_rad_s > 0.0) || !base_rad_s.is_finite() {
        return Err(Error::InvalidSpec(format!("base frequency must be positive, got {base_rad_s}")));
    }
    let l_b = (tau_s * base_rad_s / (2.0 * PI)).floor() + 1.0;
    let theta = 2.0 * PI * l_b / base_rad_s - tau_s;
    Ok((theta.max(0.0), l_b as u32))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Provenance {
    /// SHA-256 of the serialized filter realization.
    pub filter_sha256: String,
    /// SHA-256 of the serialized plant model.
    pub plant_sha256: String,
}

fn sha256_json<T: Serialize>(value: &T) -> Result<String> {
    let bytes = serde_json::to_vec(value)?;
    let digest = Sha256::digest(&bytes);
    Ok(digest.iter().map(|b| format!("{b:02x}")).collect())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ImcController {
    pub a_q: Matrix,
    pub b_q: Matrix,
    pub c_q: Matrix,
    pub d_q: f64,
    pub theta_s: f64,
    pub l_b: u32,
    pub harmonics: HarmonicSet,
    /// Plant model `G_m` the controller inverts.
    pub model: DelayedRationalPlant,
    pub filter_order: usize,
    pub relative_degree: usize,
    /// Roots of `p(s)`, the filter poles.
    pub filter_poles: Vec<Complex64>,
    /// Roots of `z(s)`, the zeros of `1 − F(s)`.
    pub filter_zeros: Vec<Complex64>,
    /// Largest relative error of the assembly cross-check.
    pub assembly_error: f64,
    pub provenance: Provenance,
}

impl ImcController {
    pub fn order(&self) -> usize {
        self.a_q.rows()
    }

    pub fn state_space(&self) -> StateSpaceModel {
        StateSpaceModel {
            a: self.a_q.clone(),
            b: self.b_q.clone(),
            c: self.c_q.clone(),
            d: self.d_q,
        }
    }

    /// `Q(s) = C_Q(sI − A_Q)⁻¹B_Q + D_Q`, without the delay.
    pub fn transfer(&self, s: Complex64) -> Result<Complex64> {
        self.state_space().transfer(s)
    }

    /// Filter `F(s) = (p(s) − z(s))/p(s)` from the stored root sets.
    pub fn filter_response(&self, s: Complex64) -> Complex64 {
        let ratio: Complex64 = self
            .filter_zeros
            .iter()
            .zip(&self.filter_poles)
            .map(|(z, p)| (s - z) / (s - p))
            .product();
        1.0 - ratio
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_json()?)?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        Ok(serde_json::from_str(&text)?)
    }
}

/// `(C_Q(jωI − A_Q)⁻¹B_Q + D_Q)·e^{−jωθ}`.
pub fn controller_response(c: &ImcController, omega: f64) -> Result<Complex64> {
    let s = Complex64::new(0.0, omega);
    Ok(c.transfer(s)? * (-s * c.theta_s).exp())
}

/// Builds `Ã = [[A, 0], [−B_α C, A_α]]`, `B̃ = [B; 0]`, `C̃ = [−D_α C, C_α]`
/// for `F·(1/a)`, then `C_Q = Σ_j b_j C̃ Ã^j` and `D_Q = b_β C̃ Ã^{β−1} B̃`,
/// and cross-checks the result against `F(s)·b(s)/a(s)`.
pub fn assemble_controller(f: &FilterRealization, p: &DelayedRationalPlant, theta_s: f64) -> Result<ImcController> {
    assemble_controller_seeded(f, p, theta_s, ASSEMBLY_CHECK_SEED)
}

/// [`assemble_controller`] with the cross-check points drawn from `seed`.
pub fn assemble_controller_seeded(
    f: &FilterRealization,
    p: &DelayedRationalPlant,
    theta_s: f64,
    seed: u64,
) -> Result<ImcController> {
    validate_plant(p).require_valid()?;
    let (alpha, beta) = (p.alpha(), p.beta());
    if f.relative_degree + alpha < beta {
        return Err(Error::CausalityViolation {
            filter: f.relative_degree,
            plant: beta - alpha,
        });
    }
    if !(theta_s >= 0.0) {
        return Err(Error::InvalidSpec(format!("controller delay must be >= 0, got {theta_s}")));
    }
    let base = f.harmonics.base_rad_s();
    let cycles = base * (p.tau_s + theta_s) / (2.0 * PI);
    let l_b = cycles.round();
    if l_b < 1.0 || (cycles - l_b).abs() > 1e-9 * cycles {
        return Err(Error::InvalidSpec(format!(
            "tau + theta = {} s is not a whole number of base periods",
            p.tau_s + theta_s
        )));
    }

    let inv = inverse_numerator_realization(p)?;
    let n = f.order();
    let m = n + alpha;
    let mut a_t = Matrix::zeros(m, m);
    a_t.set_block(0, 0, &f.a);
    a_t.set_block(n, 0, &inv.b.matmul(&f.c).scale(-1.0));
    a_t.set_block(n, n, &inv.a);
    let mut b_t = Matrix::zeros(m, 1);
    b_t.set_block(0, 0, &f.b);
    let mut c_t = Matrix::zeros(1, m);
    c_t.set_block(0, 0, &f.c.scale(-inv.d));
    c_t.set_block(0, n, &inv.c);

    // stack[j] = C̃·Ã^j for j = 0..β
    let mut stack = vec![c_t];
    for j in 0..beta {
        let next = stack[j].matmul(&a_t);
        stack.push(next);
    }
    let descending = denominator_coefficients(p);
    let mut c_q = Matrix::zeros(1, m);
    for (i, &coeff) in descending.iter().enumerate() {
        c_q = &c_q + &stack[beta - i].scale(coeff);
    }
    let d_q = if beta >= 1 && f.relative_degree + alpha <= beta {
        descending[0] * stack[beta - 1].matmul(&b_t)[(0, 0)]
    } else {
        0.0
    };

    let filter_poles = f.poles()?;
    let filter_zeros = f.zeros()?;
    let mut controller = ImcController {
        a_q: a_t,
        b_q: b_t,
        c_q,
        d_q,
        theta_s,
        l_b: l_b as u32,
        harmonics: f.harmonics.clone(),
        model: p.clone(),
        filter_order: n,
        relative_degree: f.relative_degree,
        filter_poles,
        filter_zeros,
        assembly_error: 0.0,
        provenance: Provenance {
            filter_sha256: sha256_json(f)?,
            plant_sha256: sha256_json(p)?,
        },
    };
    controller.assembly_error = assembly_check(&controller, f, p, seed)?;
    if controller.assembly_error > ASSEMBLY_TOL {
        return Err(Error::AssemblyCheck(controller.assembly_error));
    }
    Ok(controller)
}

/// Seeded points in the open left half-plane on the scale of the design.
fn check_points(scale: f64, seed: u64) -> Vec<Complex64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..ASSEMBLY_CHECK_POINTS)
        .map(|_| Complex64::new(-rng.gen_range(0.05..1.0) * scale, rng.gen_range(-1.5..1.5) * scale))
        .collect()
}

fn assembly_check(c: &ImcController, f: &FilterRealization, p: &DelayedRationalPlant, seed: u64) -> Result<f64> {
    let mut worst: f64 = 0.0;
    for s in check_points(f.harmonics.max_frequency(), seed) {
        let want = f.response(s)? * poly::eval(&p.denominator, s) / poly::eval(&p.numerator, s);
        let got = c.transfer(s)?;
        worst = worst.max((got - want).norm() / want.norm());
    }
    Ok(worst)
}

/// Controller poles, which should be the filter poles together with the
/// roots of the plant numerator.
pub fn controller_poles(c: &ImcController) -> Result<Vec<Complex64>> {
    eigenvalues(&c.a_q)
}
