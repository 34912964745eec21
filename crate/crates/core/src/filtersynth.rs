//! Synthesis of the filter `F(s) = (p(s) − z(s))/p(s)` in state-space form:
//! LQR pole placement on the signal model, expansion by auxiliary poles to
//! reach the required relative degree, and a linear solve for the input
//! matrix that enforces `F(0) = F(jω_i) = 1`.

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numkernel::{care_solve, eigenvalues, solve_linear, spectral_abscissa, ConditionReport, Lu, Matrix};
use crate::sigmodel::{realize_signal_model, HarmonicSet};
use crate::statespace::StateSpaceModel;

/// Required distance of the LQR closed loop from the imaginary axis.
pub const LQR_MARGIN: f64 = 1e-6;
/// Tolerance on `|F(0) − 1|` and `|F(jω_i) − 1|`.
pub const INTERPOLATION_TOL: f64 = 1e-8;
/// Tolerance on `|C A^r B|` relative to `‖C‖·‖B‖`.
pub const MARKOV_TOL: f64 = 1e-9;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FilterDesignSpec {
    pub harmonics: HarmonicSet,
    /// Filter relative degree `n_r ≥ 1`.
    pub relative_degree: usize,
    /// LQR state weight, `(2k+1)×(2k+1)` symmetric positive semidefinite.
    pub q: Matrix,
    /// LQR input weight.
    pub r: f64,
    /// The `n_r − 1` poles of the expansion block, closed under conjugation.
    pub aux_poles: Vec<Complex64>,
}

impl FilterDesignSpec {
    pub fn new(
        harmonics: HarmonicSet,
        relative_degree: usize,
        q: Matrix,
        r: f64,
        aux_poles: Vec<Complex64>,
    ) -> Result<Self> {
        let spec = Self {
            harmonics,
            relative_degree,
            q,
            r,
            aux_poles,
        };
        spec.validate()?;
        Ok(spec)
    }

    /// Spec with `Q = q_scale·I` and [`default_aux_poles`].
    pub fn with_defaults(harmonics: HarmonicSet, relative_degree: usize, q_scale: f64, r: f64) -> Result<Self> {
        let n_r = 2 * harmonics.len() + 1;
        let aux = default_aux_poles(&harmonics, relative_degree);
        Self::new(harmonics, relative_degree, Matrix::identity(n_r).scale(q_scale), r, aux)
    }

    pub fn validate(&self) -> Result<()> {
        if self.relative_degree == 0 {
            return Err(Error::InvalidSpec("relative degree must be at least 1".into()));
        }
        let nr = 2 * self.harmonics.len() + 1;
        if self.q.shape() != (nr, nr) {
            return Err(Error::InvalidSpec(format!(
                "Q must be {nr}x{nr} for {} harmonics, got {:?}",
                self.harmonics.len(),
                self.q.shape()
            )));
        }
        if !(self.r > 0.0) || !self.r.is_finite() {
            return Err(Error::InvalidSpec(format!("R must be positive, got {}", self.r)));
        }
        if self.aux_poles.len() != self.relative_degree - 1 {
            return Err(Error::InvalidSpec(format!(
                "relative degree {} needs {} auxiliary poles, got {}",
                self.relative_degree,
                self.relative_degree - 1,
                self.aux_poles.len()
            )));
        }
        check_aux_poles(&self.aux_poles)
    }

    /// Filter order `n = 2k + n_r`.
    pub fn order(&self) -> usize {
        2 * self.harmonics.len() + self.relative_degree
    }
}

/// `n_r − 1` distinct real poles `−(100 + 10i)·ω_k/(32π)`, `i = 0..n_r−2`.
pub fn default_aux_poles(h: &HarmonicSet, relative_degree: usize) -> Vec<Complex64> {
    let scale = h.max_frequency() / (32.0 * std::f64::consts::PI);
    (0..relative_degree.saturating_sub(1))
        .map(|i| Complex64::new(-(100.0 + 10.0 * i as f64) * scale, 0.0))
        .collect()
}

fn check_aux_poles(poles: &[Complex64]) -> Result<()> {
    for p in poles {
        if !(p.re < 0.0) || !p.im.is_finite() {
            return Err(Error::UnstableAuxiliaryPole { re: p.re, im: p.im });
        }
    }
    let mut unmatched: Vec<Complex64> = poles.iter().filter(|p| p.im != 0.0).copied().collect();
    while let Some(p) = unmatched.pop() {
        let tol = 1e-12 * p.norm();
        match unmatched.iter().position(|q| (*q - p.conj()).norm() <= tol) {
            Some(i) => {
                unmatched.swap_remove(i);
            }
            None => {
                return Err(Error::InvalidSpec(format!(
                    "auxiliary pole {p} has no conjugate partner"
                )))
            }
        }
    }
    Ok(())
}

/// LQR gain `K = R⁻¹B_RᵀP` with `P` the stabilizing CARE solution.
pub fn lqr_gain(a_r: &Matrix, b_r: &Matrix, q: &Matrix, r: f64) -> Result<Matrix> {
    if !(r > 0.0) {
        return Err(Error::InvalidSpec(format!("R must be positive, got {r}")));
    }
    let p = care_solve(a_r, b_r, q, &Matrix::diag(&[r]))?;
    let k = b_r.transpose().matmul(&p).scale(1.0 / r);
    let abscissa = spectral_abscissa(&(a_r - &b_r.matmul(&k)))?;
    if abscissa > -LQR_MARGIN {
        return Err(Error::InsufficientMargin {
            margin: -abscissa,
            required: LQR_MARGIN,
        });
    }
    Ok(k)
}

/// Gain in output-derivative coordinates and the polynomial `η(s)` with
/// `det(sI − A_R + B_R K) = z(s) + η(s)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EtaCoefficients {
    /// `K_η = K·O_R⁻¹`.
    pub k_eta: Vec<f64>,
    /// Coefficients of `η(s)`, ascending.
    pub eta: Vec<f64>,
    /// Degree of `η` after dropping negligible leading terms.
    pub degree: usize,
}

/// `K_η` from `O_Rᵀ K_ηᵀ = Kᵀ`, valid only for realizations with
/// `C_R A_R^r B_R = 0` for `r ≤ n_R − 2`.
pub fn eta_coefficients(k: &Matrix, a_r: &Matrix, b_r: &Matrix, c_r: &Matrix) -> Result<EtaCoefficients> {
    let sys = StateSpaceModel::new(a_r.clone(), b_r.clone(), c_r.clone(), 0.0)?;
    let n = sys.order();
    if k.shape() != (1, n) {
        return Err(Error::Dimension(format!("gain must be 1x{n}, got {:?}", k.shape())));
    }
    let an = a_r.norm_inf().max(1.0);
    let cb = c_r.norm_inf() * b_r.norm_inf();
    for r in 0..n.saturating_sub(1) {
        let m = sys.markov(r);
        if m.abs() > 1e-10 * cb * an.powi(r as i32) {
            return Err(Error::RealizationNotCanonical(format!(
                "C_R A_R^{r} B_R = {m:e} is not zero"
            )));
        }
    }
    let lead = sys.markov(n - 1);
    if lead == 0.0 {
        return Err(Error::RealizationNotCanonical("C_R A_R^(n-1) B_R vanishes".into()));
    }
    let o = sys.observability();
    let (x, _) = solve_linear(&o.transpose(), &k.transpose())?;
    let k_eta = x.col_vec(0);
    let eta: Vec<f64> = k_eta.iter().map(|v| v * lead).collect();
    let max = eta.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    let degree = eta.iter().rposition(|v| v.abs() > 1e-12 * max).unwrap_or(0);
    Ok(EtaCoefficients { k_eta, eta, degree })
}

/// Real block-Jordan matrix with the given conjugate-closed spectrum: real
/// poles as scalar blocks, pairs `σ ± jω` as `[[σ, ω], [−ω, σ]]`, and
/// repeated poles chained with unit (or identity) superdiagonal blocks.
pub fn real_jordan_block(poles: &[Complex64]) -> Result<Matrix> {
    check_aux_poles(poles)?;
    let mut reals: Vec<f64> = poles.iter().filter(|p| p.im == 0.0).map(|p| p.re).collect();
    let mut pairs: Vec<Complex64> = poles.iter().filter(|p| p.im > 0.0).copied().collect();
    reals.sort_by(|a, b| b.partial_cmp(a).unwrap());
    pairs.sort_by(|a, b| b.re.partial_cmp(&a.re).unwrap().then(a.im.partial_cmp(&b.im).unwrap()));
    let n = poles.len();
    let mut m = Matrix::zeros(n, n);
    let mut at = 0;
    for (i, &re) in reals.iter().enumerate() {
        m[(at, at)] = re;
        if i > 0 && reals[i - 1] == re {
            m[(at - 1, at)] = 1.0;
        }
        at += 1;
    }
    for (i, p) in pairs.iter().enumerate() {
        m[(at, at)] = p.re;
        m[(at + 1, at + 1)] = p.re;
        m[(at, at + 1)] = p.im;
        m[(at + 1, at)] = -p.im;
        if i > 0 && pairs[i - 1] == *p {
            m[(at - 2, at)] = 1.0;
            m[(at - 1, at + 1)] = 1.0;
        }
        at += 2;
    }
    Ok(m)
}

/// `A = blkdiag(A_R − B_R K, A_rel)`.
pub fn assemble_a(a_r: &Matrix, b_r: &Matrix, k: &Matrix, aux_poles: &[Complex64]) -> Result<Matrix> {
    let closed = a_r - &b_r.matmul(k);
    let rel = real_jordan_block(aux_poles)?;
    Ok(Matrix::blkdiag(&[&closed, &rel]))
}

/// Rows and right-hand side of the stacked interpolation system for `B`,
/// each row scaled to unit ∞-norm.
fn stacked_system(a: &Matrix, c: &Matrix, h: &HarmonicSet, relative_degree: usize) -> Result<(Matrix, Matrix)> {
    let n = a.rows();
    let expected = 2 * h.len() + relative_degree;
    if n != expected {
        return Err(Error::Dimension(format!(
            "filter order {n} differs from 2k + n_r = {expected}"
        )));
    }
    let mut rows: Vec<(Vec<f64>, f64)> = Vec::with_capacity(n);
    let ct: Vec<Complex64> = c.data().iter().map(|&v| Complex64::new(v, 0.0)).collect();
    let resolvent_row = |s: Complex64| -> Result<Vec<Complex64>> {
        // x = (sI − A)⁻ᵀCᵀ so that C(sI − A)⁻¹ = xᵀ
        let lu = Lu::factor(&a.shifted_resolvent_matrix(s).transpose())
            .map_err(|_| Error::StackedSystemSingular { condition: f64::INFINITY })?;
        Ok(lu.solve_vec(&ct))
    };
    let x0 = resolvent_row(Complex64::new(0.0, 0.0))?;
    rows.push((x0.iter().map(|v| v.re).collect(), -1.0));
    for w in h.frequencies() {
        let x = resolvent_row(Complex64::new(0.0, w))?;
        rows.push((x.iter().map(|v| v.re).collect(), -1.0));
        rows.push((x.iter().map(|v| v.im).collect(), 0.0));
    }
    let mut markov = c.clone();
    for _ in 0..relative_degree - 1 {
        rows.push((markov.data().to_vec(), 0.0));
        markov = markov.matmul(a);
    }
    let mut m = Matrix::zeros(n, n);
    let mut rhs = Matrix::zeros(n, 1);
    for (i, (row, b)) in rows.into_iter().enumerate() {
        let scale = row.iter().fold(0.0f64, |s, v| s.max(v.abs()));
        let scale = if scale > 0.0 { scale } else { 1.0 };
        for (j, v) in row.into_iter().enumerate() {
            m[(i, j)] = v / scale;
        }
        rhs[(i, 0)] = b / scale;
    }
    Ok((m, rhs))
}

/// Input matrix `B` such that `C(sI − A)⁻¹B = −1` at `s = 0` and every
/// `s = jω_i`, and `C A^r B = 0` for `r = 0..n_r−2`.
pub fn solve_b(a: &Matrix, c: &Matrix, h: &HarmonicSet, relative_degree: usize) -> Result<(Matrix, ConditionReport)> {
    if relative_degree == 0 {
        return Err(Error::InvalidSpec("relative degree must be at least 1".into()));
    }
    let (m, rhs) = stacked_system(a, c, h, relative_degree)?;
    let singular = |m: &Matrix| {
        let condition = Lu::factor(m).map(|lu| lu.condition_estimate()).unwrap_or(f64::INFINITY);
        Error::StackedSystemSingular { condition }
    };
    match solve_linear(&m, &rhs) {
        Ok((b, report)) if report.ill_conditioned => {
            if report.condition_estimate > 1.0 / f64::EPSILON {
                Err(Error::StackedSystemSingular {
                    condition: report.condition_estimate,
                })
            } else {
                Ok((b, report))
            }
        }
        Ok(ok) => Ok(ok),
        Err(Error::SingularMatrix { .. }) | Err(Error::ResidualTooLarge { .. }) => Err(singular(&m)),
        Err(e) => Err(e),
    }
}

/// Verification of the defining properties of a filter realization.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FilterVerification {
    /// `|F(0) − 1|`.
    pub dc_error: f64,
    /// `max_i |F(jω_i) − 1|`.
    pub max_harmonic_error: f64,
    /// `|C A^r B|` for `r = 0..n_r−2`.
    pub markov: Vec<f64>,
    /// Floating-point evaluation floor `ε·Σ_j |C||A^r||B|` of each Markov
    /// parameter; values at this level are rounding noise of the realization.
    pub markov_rounding_floor: Vec<f64>,
    /// `max_r |C A^r B| / (‖C‖∞‖B‖∞)`, zero when `n_r = 1`.
    pub max_markov_relative: f64,
    /// `−max Re λ(A)`.
    pub stability_margin: f64,
    pub pass: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FilterRealization {
    pub a: Matrix,
    pub b: Matrix,
    /// Row of ones; the filter output is `−C x`.
    pub c: Matrix,
    /// LQR gain on the signal model.
    pub k: Matrix,
    pub harmonics: HarmonicSet,
    pub relative_degree: usize,
    pub aux_poles: Vec<Complex64>,
    pub solve_report: ConditionReport,
    pub verification: FilterVerification,
}

impl FilterRealization {
    pub fn order(&self) -> usize {
        self.a.rows()
    }

    /// `Σ(A, B, −C, 0)`.
    pub fn state_space(&self) -> StateSpaceModel {
        StateSpaceModel {
            a: self.a.clone(),
            b: self.b.clone(),
            c: self.c.scale(-1.0),
            d: 0.0,
        }
    }

    /// `F(s) = −C(sI − A)⁻¹B`.
    pub fn response(&self, s: Complex64) -> Result<Complex64> {
        self.state_space().transfer(s)
    }

    /// Roots of `p(s) = det(sI − A)`.
    pub fn poles(&self) -> Result<Vec<Complex64>> {
        eigenvalues(&self.a)
    }

    /// Roots of `z(s) = det(sI − A + BC)`, the numerator of `1 − F(s)`. The
    /// `2k + 1` roots nearest `{0, ±jω_i}` are snapped onto those points.
    pub fn zeros(&self) -> Result<Vec<Complex64>> {
        let mut roots = eigenvalues(&(&self.a - &self.b.matmul(&self.c)))?;
        let mut targets = vec![Complex64::new(0.0, 0.0)];
        for w in self.harmonics.frequencies() {
            targets.push(Complex64::new(0.0, w));
            targets.push(Complex64::new(0.0, -w));
        }
        let mut taken = vec![false; roots.len()];
        for t in targets {
            let best = roots
                .iter()
                .enumerate()
                .filter(|(i, _)| !taken[*i])
                .min_by(|x, y| (*x.1 - t).norm().partial_cmp(&(*y.1 - t).norm()).unwrap())
                .map(|(i, _)| i);
            if let Some(i) = best {
                taken[i] = true;
                roots[i] = t;
            }
        }
        Ok(roots)
    }
}

/// Checks interpolation, relative degree and stability of a filter.
pub fn verify_filter(a: &Matrix, b: &Matrix, c: &Matrix, h: &HarmonicSet, relative_degree: usize) -> Result<FilterVerification> {
    let sys = StateSpaceModel::new(a.clone(), b.clone(), c.scale(-1.0), 0.0)?;
    let one = Complex64::new(1.0, 0.0);
    let dc_error = (sys.transfer(Complex64::new(0.0, 0.0))? - one).norm();
    let mut max_harmonic_error: f64 = 0.0;
    for w in h.frequencies() {
        max_harmonic_error = max_harmonic_error.max((sys.transfer(Complex64::new(0.0, w))? - one).norm());
    }
    let markov: Vec<f64> = (0..relative_degree.saturating_sub(1))
        .map(|r| sys.markov(r).abs())
        .collect();
    let abs_a = a.map(f64::abs);
    let mut abs_power_b = b.map(f64::abs);
    let abs_c = c.map(f64::abs);
    let mut markov_rounding_floor = Vec::with_capacity(markov.len());
    for _ in 0..markov.len() {
        markov_rounding_floor.push(f64::EPSILON * abs_c.matmul(&abs_power_b)[(0, 0)]);
        abs_power_b = abs_a.matmul(&abs_power_b);
    }
    let cb = c.norm_inf() * b.norm_inf();
    let max_markov_relative = if cb > 0.0 {
        markov.iter().fold(0.0f64, |m, v| m.max(*v)) / cb
    } else {
        0.0
    };
    let stability_margin = -spectral_abscissa(a)?;
    let pass = dc_error <= INTERPOLATION_TOL
        && max_harmonic_error <= INTERPOLATION_TOL
        && max_markov_relative <= MARKOV_TOL
        && stability_margin > 0.0;
    Ok(FilterVerification {
        dc_error,
        max_harmonic_error,
        markov,
        markov_rounding_floor,
        max_markov_relative,
        stability_margin,
        pass,
    })
}

/// LQR gain, block assembly of `A`, solve for `B` with `C` all ones, and
/// verification.
pub fn build_filter(spec: &FilterDesignSpec) -> Result<FilterRealization> {
    spec.validate()?;
    let sig = realize_signal_model(&spec.harmonics);
    let k = lqr_gain(&sig.a, &sig.b, &spec.q, spec.r)?;
    let a = assemble_a(&sig.a, &sig.b, &k, &spec.aux_poles)?;
    let c = Matrix::ones(1, a.rows());
    let (b, solve_report) = solve_b(&a, &c, &spec.harmonics, spec.relative_degree)?;
    let verification = verify_filter(&a, &b, &c, &spec.harmonics, spec.relative_degree)?;
    Ok(FilterRealization {
        a,
        b,
        c,
        k,
        harmonics: spec.harmonics.clone(),
        relative_degree: spec.relative_degree,
        aux_poles: spec.aux_poles.clone(),
        solve_report,
        verification,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::poly;
    use crate::sigmodel::{companion_signal_model, harmonic_set, signal_polynomial};
    use std::f64::consts::PI;

    fn c(re: f64, im: f64) -> Complex64 {
        Complex64::new(re, im)
    }

    #[test]
    fn scalar_lqr() {
        let k = lqr_gain(&Matrix::diag(&[0.0]), &Matrix::diag(&[1.0]), &Matrix::diag(&[1.0]), 1.0).unwrap();
        assert!((k[(0, 0)] - 1.0).abs() < 1e-12);
    }

    #[test]
    fn lqr_weight_homogeneity() {
        let h = harmonic_set(4.0 * PI, 3).unwrap();
        let sig = realize_signal_model(&h);
        let q = Matrix::identity(7).scale(10.0);
        let k1 = lqr_gain(&sig.a, &sig.b, &q, 1.0).unwrap();
        let k7 = lqr_gain(&sig.a, &sig.b, &q.scale(7.0), 7.0).unwrap();
        assert!((&k1 - &k7).max_abs() <= 1e-9 * k1.max_abs());
    }

    #[test]
    fn eta_scalar_and_companion() {
        let one = Matrix::diag(&[1.0]);
        let e = eta_coefficients(&one, &Matrix::diag(&[0.0]), &one, &one).unwrap();
        assert_eq!(e.k_eta, vec![1.0]);
        assert_eq!(e.eta, vec![1.0]);

        let h = harmonic_set(2.0 * PI, 1).unwrap();
        let sys = companion_signal_model(&h);
        let k = lqr_gain(&sys.a, &sys.b, &Matrix::identity(3), 1.0).unwrap();
        let e = eta_coefficients(&k, &sys.a, &sys.b, &sys.c).unwrap();
        let z = signal_polynomial(&h);
        let p_roots = eigenvalues(&(&sys.a - &sys.b.matmul(&k))).unwrap();
        let p = poly::from_roots(&p_roots);
        for i in 0..3 {
            let want = p[i] - z[i];
            assert!((e.eta[i] - want).abs() <= 1e-8 * p[i].abs().max(1.0), "coefficient {i}");
        }
        assert!(matches!(
            eta_coefficients(&k, &realize_signal_model(&h).a, &realize_signal_model(&h).b, &Matrix::ones(1, 3)),
            Err(Error::RealizationNotCanonical(_))
        ));
    }

    #[test]
    fn jordan_blocks() {
        let m = real_jordan_block(&[c(-100.0, 10.0), c(-100.0, -10.0)]).unwrap();
        let mut ev = eigenvalues(&m).unwrap();
        ev.sort_by(|a, b| a.im.partial_cmp(&b.im).unwrap());
        assert!((ev[0] - c(-100.0, -10.0)).norm() < 1e-12);
        let rep = real_jordan_block(&[c(-2.0, 0.0), c(-2.0, 0.0)]).unwrap();
        assert_eq!(rep[(0, 1)], 1.0);
        assert!(matches!(
            real_jordan_block(&[c(1.0, 0.0)]),
            Err(Error::UnstableAuxiliaryPole { .. })
        ));
        assert!(real_jordan_block(&[c(-1.0, 1.0)]).is_err());
    }

    #[test]
    fn smallest_filter() {
        let h = harmonic_set(2.0 * PI, 1).unwrap();
        let spec = FilterDesignSpec::with_defaults(h, 1, 1.0, 1.0).unwrap();
        let f = build_filter(&spec).unwrap();
        assert_eq!(f.order(), 3);
        assert!(f.verification.pass, "{:?}", f.verification);
        assert!(f.verification.dc_error < 1e-9 && f.verification.max_harmonic_error < 1e-9);
    }

    #[test]
    fn unstable_aux_pole_rejected() {
        let h = harmonic_set(2.0 * PI, 1).unwrap();
        let err = FilterDesignSpec::new(h, 2, Matrix::identity(3), 1.0, vec![c(1.0, 0.0)]).unwrap_err();
        assert!(matches!(err, Error::UnstableAuxiliaryPole { .. }));
    }

    #[test]
    fn perturbed_b_fails_verification() {
        let h = harmonic_set(4.0 * PI, 2).unwrap();
        let f = build_filter(&FilterDesignSpec::with_defaults(h.clone(), 3, 10.0, 1.0).unwrap()).unwrap();
        assert!(f.verification.pass);
        let bumped = f.b.map(|v| v * (1.0 + 1e-3));
        let v = verify_filter(&f.a, &bumped, &f.c, &h, 3).unwrap();
        assert!(!v.pass);
    }

    #[test]
    fn frequency_scaling() {
        let h1 = harmonic_set(2.0, 2).unwrap();
        let h2 = harmonic_set(4.0, 2).unwrap();
        let f1 = build_filter(&FilterDesignSpec::with_defaults(h1.clone(), 2, 5.0, 1.0).unwrap()).unwrap();
        let a2 = f1.a.scale(2.0);
        let (b2, _) = solve_b(&a2, &f1.c, &h2, 2).unwrap();
        let g = StateSpaceModel::new(a2, b2, f1.c.scale(-1.0), 0.0).unwrap();
        for s in [c(-1.0, 0.5), c(0.0, 3.0), c(-5.0, -7.0), c(2.0, 1.0), c(-0.1, 20.0)] {
            let want = f1.response(s / 2.0).unwrap();
            let got = g.transfer(s).unwrap();
            assert!((got - want).norm() <= 1e-9 * want.norm().max(1.0));
        }
    }
}
