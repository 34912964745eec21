//! Frequency-domain and spectral validation: ideal and perturbed
//! sensitivities, grid-based H∞ estimates, the small-gain robustness test,
//! and a quasi-polynomial root scan over rectangles of the complex plane.

use std::f64::consts::PI;
use std::io::Write;
use std::path::Path;

use num_complex::Complex64;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::filtersynth::FilterRealization;
use crate::imcassembly::ImcController;
use crate::plantmodel::{validate_plant, DelayedRationalPlant};
use crate::poly;

/// `|denominator|` below which a perturbed sensitivity value is flagged.
pub const DENOMINATOR_NEAR_ZERO: f64 = 1e-12;
/// Points in the coarse logarithmic sweep of [`hinf_grid`].
pub const HINF_SWEEP_POINTS: usize = 4000;
/// Local maxima refined by golden-section search in [`hinf_grid`].
pub const HINF_REFINED_PEAKS: usize = 5;
/// Acceptance threshold `|q(s)| < QP_ROOT_TOL·scale(s)`.
pub const QP_ROOT_TOL: f64 = 1e-8;
/// Relative tolerance when cancelling common roots of rational factors.
pub const CANCEL_TOL: f64 = 1e-6;

fn j(omega: f64) -> Complex64 {
    Complex64::new(0.0, omega)
}

/// `S(jω) = 1 − F(jω)e^{−jω(τ+θ)}`.
pub fn ideal_sensitivity(f: &FilterRealization, tau_s: f64, theta_s: f64, omega: f64) -> Result<Complex64> {
    let s = j(omega);
    Ok(1.0 - f.response(s)? * (-s * (tau_s + theta_s)).exp())
}

/// System `G_s e^{−sτ_s}` and model `G_m e^{−sτ_m}`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MismatchSpec {
    pub system: DelayedRationalPlant,
    pub model: DelayedRationalPlant,
}

impl MismatchSpec {
    pub fn new(system: DelayedRationalPlant, model: DelayedRationalPlant) -> Result<Self> {
        validate_plant(&system).require_valid()?;
        validate_plant(&model).require_valid()?;
        Ok(Self { system, model })
    }

    /// Ideal configuration `G_s = G_m`.
    pub fn ideal(model: DelayedRationalPlant) -> Result<Self> {
        Self::new(model.clone(), model)
    }

    /// `G_s = G_m·num/den` with the model's delay.
    pub fn multiplicative(model: DelayedRationalPlant, num: &[f64], den: &[f64]) -> Result<Self> {
        let system = model.cascade(num, den)?;
        Self::new(system, model)
    }

    /// `Δ(jω) = G_s(jω)e^{−jωτ_s} − G_m(jω)e^{−jωτ_m}`.
    pub fn delta(&self, omega: f64) -> Result<Complex64> {
        let s = j(omega);
        Ok(self.system.eval_rational(s)? * (-s * self.system.tau_s).exp()
            - self.model.eval_rational(s)? * (-s * self.model.tau_s).exp())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PerturbedSensitivity {
    pub value: Complex64,
    pub denominator: Complex64,
    /// `|denominator| < 1e−12`: the loop is close to a pole at this frequency.
    pub near_zero: bool,
}

/// `S = (1 − Q G_m e^{−s(τ_m+θ)}) / (1 + Q(G_s e^{−s(τ_s+θ)} − G_m e^{−s(τ_m+θ)}))`
/// evaluated pointwise at `s = jω`.
pub fn perturbed_sensitivity(c: &ImcController, m: &MismatchSpec, omega: f64) -> Result<PerturbedSensitivity> {
    let s = j(omega);
    let q = c.transfer(s)?;
    let gm = m.model.eval_rational(s)? * (-s * (m.model.tau_s + c.theta_s)).exp();
    let gs = m.system.eval_rational(s)? * (-s * (m.system.tau_s + c.theta_s)).exp();
    let denominator = 1.0 + q * (gs - gm);
    Ok(PerturbedSensitivity {
        value: (1.0 - q * gm) / denominator,
        denominator,
        near_zero: denominator.norm() < DENOMINATOR_NEAR_ZERO,
    })
}

/// Lower-bound estimate of `sup_ω |r(ω)|` over a band.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct HinfEstimate {
    pub norm: f64,
    pub omega: f64,
}

fn golden_max(g: &impl Fn(f64) -> f64, mut a: f64, mut b: f64, tol: f64) -> (f64, f64) {
    let ratio = (5f64.sqrt() - 1.0) / 2.0;
    let mut x1 = b - ratio * (b - a);
    let mut x2 = a + ratio * (b - a);
    let (mut g1, mut g2) = (g(x1), g(x2));
    for _ in 0..200 {
        if b - a <= tol {
            break;
        }
        if g1 >= g2 {
            b = x2;
            x2 = x1;
            g2 = g1;
            x1 = b - ratio * (b - a);
            g1 = g(x1);
        } else {
            a = x1;
            x1 = x2;
            g1 = g2;
            x2 = a + ratio * (b - a);
            g2 = g(x2);
        }
    }
    if g1 >= g2 {
        (x1, g1)
    } else {
        (x2, g2)
    }
}

/// Log-spaced sweep of [`HINF_SWEEP_POINTS`] frequencies followed by
/// golden-section refinement (in `log ω`) around the largest
/// [`HINF_REFINED_PEAKS`] local maxima until the bracket is below `rel_tol`.
/// The result never exceeds the true supremum.
pub fn hinf_grid<F>(responder: F, band: (f64, f64), rel_tol: f64) -> Result<HinfEstimate>
where
    F: Fn(f64) -> f64 + Sync,
{
    let (lo, hi) = band;
    if !(lo > 0.0) || !(hi > lo) || !hi.is_finite() {
        return Err(Error::InvalidSpec(format!("invalid band [{lo}, {hi}]")));
    }
    if !(rel_tol > 0.0) {
        return Err(Error::InvalidSpec("rel_tol must be positive".into()));
    }
    let (x_lo, x_hi) = (lo.ln(), hi.ln());
    let n = HINF_SWEEP_POINTS;
    let xs: Vec<f64> = (0..n)
        .map(|i| x_lo + (x_hi - x_lo) * i as f64 / (n - 1) as f64)
        .collect();
    let vals: Vec<f64> = xs.par_iter().map(|&x| responder(x.exp())).collect();
    if vals.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("frequency response"));
    }
    let mut peaks: Vec<usize> = (0..n)
        .filter(|&i| {
            let left = i == 0 || vals[i] >= vals[i - 1];
            let right = i == n - 1 || vals[i] >= vals[i + 1];
            left && right
        })
        .collect();
    peaks.sort_by(|&a, &b| vals[b].partial_cmp(&vals[a]).unwrap());
    peaks.truncate(HINF_REFINED_PEAKS);
    let g = |x: f64| responder(x.exp());
    let mut best = HinfEstimate {
        norm: vals[peaks[0]],
        omega: xs[peaks[0]].exp(),
    };
    for &i in &peaks {
        let a = xs[i.saturating_sub(1)];
        let b = xs[(i + 1).min(n - 1)];
        let (x, v) = golden_max(&g, a, b, rel_tol);
        if v > best.norm {
            best = HinfEstimate { norm: v, omega: x.exp() };
        }
    }
    Ok(best)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SmallGainReport {
    /// Estimate of `‖Δ·Q‖∞` over the band.
    pub margin: f64,
    pub omega: f64,
    /// `margin < 1`: sufficient for stability; a failure proves nothing.
    pub pass: bool,
}

/// Small-gain test `‖Δ(jω)Q(jω)‖∞ < 1` (the controller delay has unit
/// modulus and drops out).
pub fn small_gain_check(c: &ImcController, m: &MismatchSpec, band: (f64, f64), rel_tol: f64) -> Result<SmallGainReport> {
    let responder = |w: f64| match (m.delta(w), c.transfer(j(w))) {
        (Ok(d), Ok(q)) => (d * q).norm(),
        _ => f64::NAN,
    };
    let est = hinf_grid(responder, band, rel_tol)?;
    Ok(SmallGainReport {
        margin: est.norm,
        omega: est.omega,
        pass: est.norm < 1.0,
    })
}

/// One term `p(s)·e^{−s·d}` of a quasi-polynomial.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QpTerm {
    /// Ascending coefficients.
    pub coeffs: Vec<f64>,
    pub delay: f64,
}

/// Polynomial `gain·Π(s − r_i)` kept in product form for accurate evaluation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Product {
    pub gain: f64,
    pub roots: Vec<Complex64>,
}

impl Product {
    pub fn eval(&self, s: Complex64) -> Complex64 {
        self.roots.iter().fold(Complex64::new(self.gain, 0.0), |acc, r| acc * (s - r))
    }

    pub fn coeffs(&self) -> Vec<f64> {
        poly::scale(&poly::from_roots(&self.roots), self.gain)
    }
}

/// Term whose polynomial is a sum of products, `Σ_k P_k(s)·e^{−s·d}`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FactoredTerm {
    pub parts: Vec<Product>,
    pub delay: f64,
}

/// Ratio below which a summed coefficient counts as cancelled.
const CANCELLED: f64 = 1e-10;

/// Coefficients of `Σ_k P_k`, with leading coefficients that cancel down to
/// rounding removed.
fn summed_coeffs(parts: &[Product]) -> Vec<f64> {
    let all: Vec<Vec<f64>> = parts.iter().map(Product::coeffs).collect();
    let len = all.iter().map(Vec::len).max().unwrap_or(0);
    let mut sum = vec![0.0; len];
    let mut mag = vec![0.0; len];
    for c in &all {
        for (i, v) in c.iter().enumerate() {
            sum[i] += v;
            mag[i] += v.abs();
        }
    }
    while let Some(&top) = sum.last() {
        if top.abs() <= CANCELLED * mag[sum.len() - 1] {
            sum.pop();
        } else {
            break;
        }
    }
    sum
}

/// `q(s) = Σ_j p_j(s)e^{−s d_j}` of retarded type.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QuasiPolynomial {
    terms: Vec<QpTerm>,
    /// Product forms used by [`Self::eval`] when available.
    #[serde(skip)]
    products: Vec<Vec<Product>>,
}

impl QuasiPolynomial {
    pub fn new(terms: Vec<QpTerm>) -> Result<Self> {
        let terms: Vec<QpTerm> = terms
            .into_iter()
            .map(|t| QpTerm {
                coeffs: poly::trim(t.coeffs, 0.0),
                delay: t.delay,
            })
            .collect();
        if terms.is_empty() {
            return Err(Error::InvalidQuasiPolynomial("no terms".into()));
        }
        for t in &terms {
            if !(t.delay >= 0.0) || !t.delay.is_finite() {
                return Err(Error::InvalidQuasiPolynomial(format!("delay {} must be >= 0", t.delay)));
            }
            if t.coeffs.iter().any(|c| !c.is_finite()) {
                return Err(Error::InvalidQuasiPolynomial("non-finite coefficient".into()));
            }
        }
        for (i, a) in terms.iter().enumerate() {
            if terms[i + 1..].iter().any(|b| b.delay == a.delay) {
                return Err(Error::InvalidQuasiPolynomial(format!("delay {} appears twice", a.delay)));
            }
        }
        let Some(zero) = terms.iter().find(|t| t.delay == 0.0) else {
            return Err(Error::InvalidQuasiPolynomial("no delay-free term".into()));
        };
        let Some(top) = poly::degree(&zero.coeffs) else {
            return Err(Error::InvalidQuasiPolynomial("delay-free term is zero".into()));
        };
        for t in &terms {
            if t.delay > 0.0 && poly::degree(&t.coeffs).is_some_and(|d| d > top) {
                return Err(Error::InvalidQuasiPolynomial(
                    "a delayed term has higher degree than the delay-free term (not retarded)".into(),
                ));
            }
        }
        Ok(Self {
            terms,
            products: Vec::new(),
        })
    }

    /// Builds a quasi-polynomial from terms in product form. Terms with equal
    /// delays are merged and delayed terms that cancel completely are dropped.
    pub fn from_factored(terms: Vec<FactoredTerm>) -> Result<Self> {
        let mut merged: Vec<FactoredTerm> = Vec::new();
        for t in terms {
            match merged.iter_mut().find(|m| m.delay == t.delay) {
                Some(m) => m.parts.extend(t.parts),
                None => merged.push(t),
            }
        }
        let mut kept = Vec::new();
        let mut plain = Vec::new();
        for t in merged {
            let coeffs = summed_coeffs(&t.parts);
            if t.delay != 0.0 && coeffs.is_empty() {
                continue;
            }
            plain.push(QpTerm { coeffs, delay: t.delay });
            kept.push(t.parts);
        }
        let mut q = Self::new(plain)?;
        q.products = kept;
        Ok(q)
    }

    /// Pure polynomial.
    pub fn polynomial(coeffs: Vec<f64>) -> Result<Self> {
        Self::new(vec![QpTerm { coeffs, delay: 0.0 }])
    }

    pub fn terms(&self) -> &[QpTerm] {
        &self.terms
    }

    pub fn eval(&self, s: Complex64) -> Complex64 {
        self.terms
            .iter()
            .enumerate()
            .map(|(j, t)| {
                let p = match self.products.get(j) {
                    Some(parts) => parts.iter().map(|f| f.eval(s)).sum(),
                    None => poly::eval(&t.coeffs, s),
                };
                p * (-s * t.delay).exp()
            })
            .sum()
    }

    /// `q'(s) = Σ_j (p_j'(s) − d_j p_j(s))e^{−s d_j}`.
    pub fn derivative(&self, s: Complex64) -> Complex64 {
        self.terms
            .iter()
            .map(|t| {
                let dp = poly::eval(&poly::derivative(&t.coeffs), s);
                (dp - poly::eval(&t.coeffs, s) * t.delay) * (-s * t.delay).exp()
            })
            .sum()
    }

    /// `Σ_j Σ_i |c_ji||s|^i |e^{−s d_j}|`, the magnitude against which
    /// rounding in [`Self::eval`] is measured.
    pub fn scale(&self, s: Complex64) -> f64 {
        self.terms
            .iter()
            .map(|t| poly::eval_abs(&t.coeffs, s) * (-s.re * t.delay).exp())
            .sum()
    }
}

/// Closed rectangle `[re_min, re_max] × [im_min, im_max]` scanned with a
/// square grid of the given step.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SpectrumRegion {
    pub re_min: f64,
    pub re_max: f64,
    pub im_min: f64,
    pub im_max: f64,
    pub step: f64,
}

impl SpectrumRegion {
    pub fn new(re: (f64, f64), im: (f64, f64), step: f64) -> Result<Self> {
        let r = Self {
            re_min: re.0,
            re_max: re.1,
            im_min: im.0,
            im_max: im.1,
            step,
        };
        r.validate()?;
        Ok(r)
    }

    pub fn validate(&self) -> Result<()> {
        let vals = [self.re_min, self.re_max, self.im_min, self.im_max, self.step];
        if vals.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidRegion("non-finite bound".into()));
        }
        if !(self.re_max > self.re_min) || !(self.im_max > self.im_min) {
            return Err(Error::InvalidRegion("empty range".into()));
        }
        let min_width = (self.re_max - self.re_min).min(self.im_max - self.im_min);
        if !(self.step > 0.0) || self.step >= min_width / 10.0 {
            return Err(Error::InvalidRegion(format!(
                "grid step {} must be positive and below a tenth of the narrowest range {min_width}",
                self.step
            )));
        }
        Ok(())
    }

    fn expanded(&self, m: f64) -> Self {
        Self {
            re_min: self.re_min - m,
            re_max: self.re_max + m,
            im_min: self.im_min - m,
            im_max: self.im_max + m,
            step: self.step,
        }
    }

    pub fn contains(&self, s: Complex64, tol: f64) -> bool {
        s.re >= self.re_min - tol && s.re <= self.re_max + tol && s.im >= self.im_min - tol && s.im <= self.im_max + tol
    }
}

/// Roots found by [`qp_roots`] together with the argument-principle count.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RootScan {
    /// Roots inside the requested region, sorted by imaginary then real part.
    pub roots: Vec<Complex64>,
    /// Roots found inside the counting contour (the region grown by `margin`).
    pub found_in_contour: usize,
    /// Winding number of `q` along the counting contour.
    pub argument_count: i64,
    pub margin: f64,
}

fn newton_polish(q: &QuasiPolynomial, mut s: Complex64, step: f64) -> Option<Complex64> {
    let mut fs = q.eval(s);
    for _ in 0..100 {
        let d = q.derivative(s);
        if d.norm() == 0.0 || !d.re.is_finite() {
            return None;
        }
        let full = fs / d;
        // keep the update on the scale of a few grid cells
        let mut delta = if full.norm() > 4.0 * step { full * (4.0 * step / full.norm()) } else { full };
        let mut accepted = false;
        for _ in 0..40 {
            let cand = s - delta;
            let fc = q.eval(cand);
            if fc.norm() < fs.norm() || fc.norm() == 0.0 {
                s = cand;
                fs = fc;
                accepted = true;
                break;
            }
            delta *= 0.5;
        }
        if !accepted || delta.norm() <= 4.0 * f64::EPSILON * s.norm().max(1.0) {
            break;
        }
    }
    let scale = q.scale(s);
    if fs.norm() <= QP_ROOT_TOL * scale || (scale == 0.0 && fs.norm() == 0.0) {
        Some(s)
    } else {
        None
    }
}

/// Net change of `arg q` along the segment `a → b`, subdividing until each
/// piece turns by less than π/4.
fn arg_change(q: &QuasiPolynomial, a: Complex64, qa: Complex64, b: Complex64, qb: Complex64, depth: u32) -> Option<f64> {
    let d = (qb / qa).arg();
    if d.abs() < PI / 4.0 {
        return Some(d);
    }
    if depth == 0 {
        return None;
    }
    let m = (a + b) * 0.5;
    let qm = q.eval(m);
    if qm.norm() <= 1e-12 * q.scale(m) {
        return None;
    }
    Some(arg_change(q, a, qa, m, qm, depth - 1)? + arg_change(q, m, qm, b, qb, depth - 1)?)
}

/// Winding number of `q` around the boundary of `r`, or `None` if `q`
/// (nearly) vanishes on it.
fn argument_count(q: &QuasiPolynomial, r: &SpectrumRegion) -> Option<i64> {
    let corners = [
        Complex64::new(r.re_min, r.im_min),
        Complex64::new(r.re_max, r.im_min),
        Complex64::new(r.re_max, r.im_max),
        Complex64::new(r.re_min, r.im_max),
    ];
    let mut total = 0.0;
    for e in 0..4 {
        let (a, b) = (corners[e], corners[(e + 1) % 4]);
        let pieces = ((b - a).norm() / r.step).ceil().max(1.0) as usize;
        let pts: Vec<Complex64> = (0..=pieces).map(|i| a + (b - a) * (i as f64 / pieces as f64)).collect();
        let vals: Vec<Complex64> = pts.par_iter().map(|&s| q.eval(s)).collect();
        for (&s, &v) in pts.iter().zip(&vals) {
            if v.norm() <= 1e-12 * q.scale(s) {
                return None;
            }
        }
        let changes: Option<Vec<f64>> = (0..pieces)
            .into_par_iter()
            .map(|i| arg_change(q, pts[i], vals[i], pts[i + 1], vals[i + 1], 40))
            .collect();
        total += changes?.iter().sum::<f64>();
    }
    Some((total / (2.0 * PI)).round() as i64)
}

/// Grid evaluation of `q`, seeds from cells where both `Re q` and `Im q`
/// change sign, damped Newton polishing, de-duplication within half a grid
/// step, and an argument-principle cross-check on the region grown by a
/// small margin so that no root sits on the contour.
pub fn qp_roots(q: &QuasiPolynomial, region: &SpectrumRegion) -> Result<RootScan> {
    region.validate()?;
    let h = region.step;
    let mut margin = h;
    let mut attempt = 0;
    loop {
        let scan = region.expanded(margin);
        let found = scan_roots(q, &scan);
        let on_contour = found.iter().any(|s| {
            let d = (s.re - scan.re_min)
                .abs()
                .min((s.re - scan.re_max).abs())
                .min((s.im - scan.im_min).abs())
                .min((s.im - scan.im_max).abs());
            d < h / 4.0
        });
        let count = if on_contour { None } else { argument_count(q, &scan) };
        match count {
            Some(count) => {
                let inside: Vec<Complex64> = found
                    .iter()
                    .copied()
                    .filter(|s| scan.contains(*s, 0.0))
                    .collect();
                if count != inside.len() as i64 {
                    return Err(Error::GridTooCoarse {
                        expected: count,
                        found: inside.len(),
                    });
                }
                let mut roots: Vec<Complex64> = inside
                    .into_iter()
                    .filter(|s| region.contains(*s, 1e-9 * s.norm().max(1.0)))
                    .collect();
                roots.sort_by(|a, b| a.im.partial_cmp(&b.im).unwrap().then(a.re.partial_cmp(&b.re).unwrap()));
                return Ok(RootScan {
                    found_in_contour: count as usize,
                    roots,
                    argument_count: count,
                    margin,
                });
            }
            None if attempt < 6 => {
                attempt += 1;
                margin *= 1.37;
            }
            None => {
                return Err(Error::GridTooCoarse {
                    expected: -1,
                    found: found.len(),
                })
            }
        }
    }
}

fn scan_roots(q: &QuasiPolynomial, r: &SpectrumRegion) -> Vec<Complex64> {
    let h = r.step;
    let nx = ((r.re_max - r.re_min) / h).ceil() as usize + 1;
    let ny = ((r.im_max - r.im_min) / h).ceil() as usize + 1;
    let node = |ix: usize, iy: usize| Complex64::new(r.re_min + ix as f64 * h, r.im_min + iy as f64 * h);
    // grid rows evaluated in parallel; each row keeps only the signs needed
    let rows: Vec<Vec<(i8, i8)>> = (0..ny)
        .into_par_iter()
        .map(|iy| {
            (0..nx)
                .map(|ix| {
                    let v = q.eval(node(ix, iy));
                    (sign(v.re), sign(v.im))
                })
                .collect()
        })
        .collect();
    let seeds: Vec<Complex64> = (0..ny.saturating_sub(1))
        .into_par_iter()
        .flat_map_iter(|iy| {
            let rows = &rows;
            (0..nx.saturating_sub(1)).filter_map(move |ix| {
                let c = [rows[iy][ix], rows[iy][ix + 1], rows[iy + 1][ix], rows[iy + 1][ix + 1]];
                let re_change = c.iter().any(|v| v.0 != c[0].0) || c[0].0 == 0;
                let im_change = c.iter().any(|v| v.1 != c[0].1) || c[0].1 == 0;
                (re_change && im_change).then(|| node(ix, iy) + Complex64::new(h / 2.0, h / 2.0))
            })
        })
        .collect();
    let polished: Vec<Complex64> = seeds
        .par_iter()
        .filter_map(|&s| newton_polish(q, s, h))
        .filter(|s| r.contains(*s, 0.0))
        .collect();
    let mut roots: Vec<Complex64> = Vec::new();
    for s in polished {
        if roots.iter().all(|r| (r - s).norm() >= h / 2.0) {
            roots.push(s);
        }
    }
    roots
}

fn sign(x: f64) -> i8 {
    if x > 0.0 {
        1
    } else if x < 0.0 {
        -1
    } else {
        0
    }
}

/// `p(s) + (z(s) − p(s))e^{−s(τ+θ)}`, the numerator of the ideal
/// sensitivity `S = 1 − F e^{−s(τ+θ)}` with `F = (p − z)/p`.
pub fn ideal_numerator(c: &ImcController) -> Result<QuasiPolynomial> {
    let p = Product {
        gain: 1.0,
        roots: c.filter_poles.clone(),
    };
    let z = Product {
        gain: 1.0,
        roots: c.filter_zeros.clone(),
    };
    QuasiPolynomial::from_factored(vec![
        FactoredTerm {
            parts: vec![p.clone()],
            delay: 0.0,
        },
        FactoredTerm {
            parts: vec![z, Product { gain: -1.0, ..p }],
            delay: c.model.tau_s + c.theta_s,
        },
    ])
}

fn factor(coeffs: &[f64]) -> Result<Product> {
    let d = poly::degree(coeffs).ok_or_else(|| Error::InvalidPlant("zero polynomial".into()))?;
    Ok(Product {
        gain: coeffs[d],
        roots: poly::roots(coeffs)?,
    })
}

fn times(a: &Product, b: &Product) -> Product {
    let mut roots = a.roots.clone();
    roots.extend_from_slice(&b.roots);
    Product {
        gain: a.gain * b.gain,
        roots,
    }
}

fn close(a: Complex64, b: Complex64) -> bool {
    (a - b).norm() <= CANCEL_TOL * a.norm().max(b.norm()).max(1.0)
}

/// Cancels roots common to `num` and `den`, returning the cancelled roots.
fn cancel(num: &mut Product, den: &mut Product) -> Vec<Complex64> {
    let mut cancelled = Vec::new();
    let mut i = 0;
    while i < num.roots.len() {
        let r = num.roots[i];
        if let Some(k) = den.roots.iter().position(|d| close(*d, r)) {
            den.roots.remove(k);
            num.roots.remove(i);
            cancelled.push(r);
        } else {
            i += 1;
        }
    }
    cancelled
}

/// Roots of the least common multiple of two monic polynomials (by root
/// matching), with the roots of the cofactors `L/a` and `L/b`.
fn lcm(a: &[Complex64], b: &[Complex64]) -> (Vec<Complex64>, Vec<Complex64>, Vec<Complex64>) {
    let mut rest_b = b.to_vec();
    let mut cof_b = Vec::new();
    for r in a {
        if let Some(k) = rest_b.iter().position(|x| close(*x, *r)) {
            rest_b.remove(k);
        } else {
            cof_b.push(*r);
        }
    }
    let mut l = a.to_vec();
    l.extend_from_slice(&rest_b);
    (l, rest_b, cof_b)
}

/// Closed-loop characteristic function of the IMC loop with mismatch.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CharacteristicRoots {
    pub quasi_polynomial: QuasiPolynomial,
    pub scan: RootScan,
    /// Modes removed by exact pole/zero cancellation between the controller
    /// and the plant or model.
    pub fixed_modes: Vec<Complex64>,
}

/// Clears denominators of `1 + Q(G_s e^{−s(τ_s+θ)} − G_m e^{−s(τ_m+θ)})`
/// with `Q = (p − z)/p · b_m/a_m`. Common factors of `Q·G_s` and `Q·G_m` are
/// cancelled by root matching and returned as fixed modes.
pub fn characteristic_quasi_polynomial(c: &ImcController, m: &MismatchSpec) -> Result<(QuasiPolynomial, Vec<Complex64>)> {
    let p = Product {
        gain: 1.0,
        roots: c.filter_poles.clone(),
    };
    let z = Product {
        gain: 1.0,
        roots: c.filter_zeros.clone(),
    };
    let a_c = factor(&c.model.numerator)?;
    let b_c = factor(&c.model.denominator)?;
    let mut fixed: Vec<Complex64> = Vec::new();
    // Q·G = (p − z)/p · (b_c·N)/(a_c·D) for G = N/D
    let mut rational = |g: &DelayedRationalPlant| -> Result<(Product, Product)> {
        let mut num = times(&b_c, &factor(&g.numerator)?);
        let mut den = times(&a_c, &factor(&g.denominator)?);
        for r in cancel(&mut num, &mut den) {
            if !fixed.iter().any(|f| close(*f, r)) {
                fixed.push(r);
            }
        }
        Ok((num, den))
    };
    let (n1, d1) = rational(&m.system)?;
    let (n2, d2) = rational(&m.model)?;
    let (l, cof1, cof2) = lcm(&d1.roots, &d2.roots);
    // (p − z)·N·(L/D)/lead(D), split into its two products
    let delayed = |n: &Product, d: &Product, cof: &[Complex64], sign: f64| -> Vec<Product> {
        let mut extra = n.roots.clone();
        extra.extend_from_slice(cof);
        let k = sign * n.gain / d.gain;
        let with = |base: &Product, g: f64| {
            let mut roots = base.roots.clone();
            roots.extend_from_slice(&extra);
            Product { gain: g, roots }
        };
        vec![with(&p, k), with(&z, -k)]
    };
    let mut base = p.roots.clone();
    base.extend_from_slice(&l);
    let qp = QuasiPolynomial::from_factored(vec![
        FactoredTerm {
            parts: vec![Product { gain: 1.0, roots: base }],
            delay: 0.0,
        },
        FactoredTerm {
            parts: delayed(&n1, &d1, &cof1, 1.0),
            delay: m.system.tau_s + c.theta_s,
        },
        FactoredTerm {
            parts: delayed(&n2, &d2, &cof2, -1.0),
            delay: m.model.tau_s + c.theta_s,
        },
    ])?;
    Ok((qp, fixed))
}

pub fn perturbed_char_roots(c: &ImcController, m: &MismatchSpec, region: &SpectrumRegion) -> Result<CharacteristicRoots> {
    let (qp, fixed_modes) = characteristic_quasi_polynomial(c, m)?;
    let scan = qp_roots(&qp, region)?;
    Ok(CharacteristicRoots {
        quasi_polynomial: qp,
        scan,
        fixed_modes,
    })
}

/// One row of a sensitivity sweep.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SweepPoint {
    pub omega: f64,
    pub ideal: Complex64,
    pub perturbed: Option<Complex64>,
}

/// Ideal (and optionally perturbed) sensitivity at `points` log-spaced
/// frequencies between `band.0` and `band.1` rad/s.
pub fn sensitivity_sweep(
    c: &ImcController,
    mismatch: Option<&MismatchSpec>,
    band: (f64, f64),
    points: usize,
) -> Result<Vec<SweepPoint>> {
    let (lo, hi) = band;
    if !(lo > 0.0) || !(hi > lo) || points < 2 {
        return Err(Error::InvalidSpec("sweep needs 0 < lo < hi and at least 2 points".into()));
    }
    (0..points)
        .into_par_iter()
        .map(|i| {
            let omega = lo * (hi / lo).powf(i as f64 / (points - 1) as f64);
            let s = j(omega);
            let ideal = 1.0 - c.transfer(s)? * c.model.eval_rational(s)? * (-s * (c.model.tau_s + c.theta_s)).exp();
            let perturbed = match mismatch {
                Some(m) => Some(perturbed_sensitivity(c, m, omega)?.value),
                None => None,
            };
            Ok(SweepPoint { omega, ideal, perturbed })
        })
        .collect()
}

/// CSV with columns `omega_rad_s, f_hz, mag_ideal, phase_ideal_rad` and,
/// when present, `mag_perturbed, phase_perturbed_rad`.
pub fn write_sweep_csv(path: &Path, points: &[SweepPoint]) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    let with_perturbed = points.iter().any(|p| p.perturbed.is_some());
    let mut header = vec!["omega_rad_s", "f_hz", "mag_ideal", "phase_ideal_rad"];
    if with_perturbed {
        header.extend(["mag_perturbed", "phase_perturbed_rad"]);
    }
    w.write_record(&header)?;
    for p in points {
        let mut row = vec![
            p.omega.to_string(),
            (p.omega / (2.0 * PI)).to_string(),
            p.ideal.norm().to_string(),
            p.ideal.arg().to_string(),
        ];
        if let Some(v) = p.perturbed {
            row.push(v.norm().to_string());
            row.push(v.arg().to_string());
        }
        w.write_record(&row)?;
    }
    w.flush()?;
    Ok(())
}

/// CSV with columns `re, im, kind`.
pub fn write_roots_csv(path: &Path, roots: &[(Complex64, &str)]) -> Result<()> {
    let mut file = std::fs::File::create(path)?;
    writeln!(file, "re,im,kind")?;
    for (r, kind) in roots {
        writeln!(file, "{},{},{}", r.re, r.im, kind)?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn c(re: f64, im: f64) -> Complex64 {
        Complex64::new(re, im)
    }

    #[test]
    fn hinf_constant_and_lowpass() {
        let est = hinf_grid(|_| 0.5, (1e-3, 1e3), 1e-3).unwrap();
        assert_eq!(est.norm, 0.5);
        let est = hinf_grid(|w| 1.0 / (1.0 + w * w).sqrt(), (1e-3, 1e3), 1e-3).unwrap();
        assert!((est.norm - 1.0).abs() < 1e-3);
        assert!(est.omega < 2e-3);
    }

    #[test]
    fn hinf_finds_narrow_resonance() {
        // lightly damped second-order peak 1/(2ζ√(1−ζ²)) at ω = 10
        let zeta: f64 = 1e-3;
        let r = |w: f64| {
            let s = c(0.0, w);
            (100.0 / (s * s + 2.0 * zeta * 10.0 * s + 100.0)).norm()
        };
        let exact = 1.0 / (2.0 * zeta * (1.0 - zeta * zeta).sqrt());
        let est = hinf_grid(r, (0.1, 1000.0), 1e-6).unwrap();
        assert!(est.norm <= exact * (1.0 + 1e-12));
        assert!((est.norm - exact).abs() <= 1e-3 * exact, "{} vs {exact}", est.norm);
    }

    #[test]
    fn quasi_polynomial_validation() {
        let bad = QuasiPolynomial::new(vec![
            QpTerm { coeffs: vec![1.0], delay: 0.0 },
            QpTerm { coeffs: vec![0.0, 1.0], delay: 1.0 },
        ]);
        assert!(matches!(bad, Err(Error::InvalidQuasiPolynomial(_))));
        let dup = QuasiPolynomial::new(vec![
            QpTerm { coeffs: vec![1.0], delay: 0.0 },
            QpTerm { coeffs: vec![1.0], delay: 0.0 },
        ]);
        assert!(dup.is_err());
        assert!(QuasiPolynomial::new(vec![QpTerm { coeffs: vec![1.0], delay: -1.0 }]).is_err());
    }

    #[test]
    fn region_validation() {
        assert!(SpectrumRegion::new((-1.0, 1.0), (-7.0, 7.0), 0.05).is_ok());
        assert!(SpectrumRegion::new((-1.0, 1.0), (-7.0, 7.0), 0.5).is_err());
        assert!(SpectrumRegion::new((1.0, -1.0), (-7.0, 7.0), 0.01).is_err());
    }

    #[test]
    fn exponential_minus_one() {
        let q = QuasiPolynomial::new(vec![
            QpTerm { coeffs: vec![-1.0], delay: 0.0 },
            QpTerm { coeffs: vec![1.0], delay: 1.0 },
        ])
        .unwrap();
        let scan = qp_roots(&q, &SpectrumRegion::new((-1.0, 1.0), (-7.0, 7.0), 0.05).unwrap()).unwrap();
        assert_eq!(scan.roots.len(), 3, "{:?}", scan.roots);
        for (r, want) in scan.roots.iter().zip([c(0.0, -2.0 * PI), c(0.0, 0.0), c(0.0, 2.0 * PI)]) {
            assert!((r - want).norm() < 1e-8, "{r} vs {want}");
        }
        assert_eq!(scan.argument_count, 3);
    }

    #[test]
    fn lambert_root() {
        let q = QuasiPolynomial::new(vec![
            QpTerm { coeffs: vec![0.0, 1.0], delay: 0.0 },
            QpTerm { coeffs: vec![1.0], delay: 1.0 },
        ])
        .unwrap();
        let scan = qp_roots(&q, &SpectrumRegion::new((-2.0, 0.0), (0.0, 3.0), 0.02).unwrap()).unwrap();
        assert_eq!(scan.roots.len(), 1);
        let r = scan.roots[0];
        assert!((r - c(-0.3181, 1.3372)).norm() < 1e-4, "{r}");
        assert!(q.eval(r).norm() < 1e-10);
    }

    #[test]
    fn polynomial_roots_match_companion() {
        let coeffs = poly::from_roots(&[c(-1.0, 2.0), c(-1.0, -2.0), c(-0.5, 0.0), c(0.3, 0.7), c(0.3, -0.7)]);
        let q = QuasiPolynomial::polynomial(coeffs.clone()).unwrap();
        let scan = qp_roots(&q, &SpectrumRegion::new((-3.0, 3.0), (-3.0, 3.0), 0.02).unwrap()).unwrap();
        let eig = poly::roots(&coeffs).unwrap();
        assert_eq!(scan.roots.len(), eig.len());
        for e in eig {
            let d = scan.roots.iter().map(|r| (r - e).norm()).fold(f64::INFINITY, f64::min);
            assert!(d < 1e-7);
        }
    }

    #[test]
    fn merging_cancels_equal_delays() {
        let part = |gain: f64| Product {
            gain,
            roots: vec![c(-1.0, 2.0), c(-1.0, -2.0)],
        };
        let q = QuasiPolynomial::from_factored(vec![
            FactoredTerm {
                parts: vec![Product { gain: 1.0, roots: vec![c(-3.0, 0.0); 3] }],
                delay: 0.0,
            },
            FactoredTerm {
                parts: vec![part(2.0)],
                delay: 0.5,
            },
            FactoredTerm {
                parts: vec![part(-2.0)],
                delay: 0.5,
            },
        ])
        .unwrap();
        assert_eq!(q.terms().len(), 1);
        assert_eq!(q.eval(c(0.0, 0.0)), c(27.0, 0.0));
    }

    #[test]
    fn mismatch_zero_delta_for_ideal_configuration() {
        let p = DelayedRationalPlant::new(vec![1.0], vec![1.0, 1.0], 0.1).unwrap();
        let m = MismatchSpec::ideal(p).unwrap();
        assert_eq!(m.delta(3.0).unwrap(), c(0.0, 0.0));
    }
}
