//! Real polynomials stored with ascending-power coefficients.

use num_complex::Complex64;

use crate::error::{Error, Result};
use crate::numkernel::{eigenvalues, Matrix};

/// Horner evaluation at a complex point.
pub fn eval(coeffs: &[f64], s: Complex64) -> Complex64 {
    coeffs
        .iter()
        .rev()
        .fold(Complex64::new(0.0, 0.0), |acc, &c| acc * s + c)
}

/// Horner evaluation of a polynomial with complex coefficients.
pub fn eval_complex(coeffs: &[Complex64], s: Complex64) -> Complex64 {
    coeffs
        .iter()
        .rev()
        .fold(Complex64::new(0.0, 0.0), |acc, &c| acc * s + c)
}

/// `Σ |c_i|·|s|^i`, the natural scale for rounding errors of [`eval`].
pub fn eval_abs(coeffs: &[f64], s: Complex64) -> f64 {
    let r = s.norm();
    coeffs.iter().rev().fold(0.0, |acc, &c| acc * r + c.abs())
}

pub fn derivative(coeffs: &[f64]) -> Vec<f64> {
    coeffs
        .iter()
        .enumerate()
        .skip(1)
        .map(|(i, c)| c * i as f64)
        .collect()
}

pub fn mul(a: &[f64], b: &[f64]) -> Vec<f64> {
    if a.is_empty() || b.is_empty() {
        return Vec::new();
    }
    let mut out = vec![0.0; a.len() + b.len() - 1];
    for (i, x) in a.iter().enumerate() {
        for (j, y) in b.iter().enumerate() {
            out[i + j] += x * y;
        }
    }
    out
}

pub fn add(a: &[f64], b: &[f64]) -> Vec<f64> {
    let n = a.len().max(b.len());
    (0..n)
        .map(|i| a.get(i).copied().unwrap_or(0.0) + b.get(i).copied().unwrap_or(0.0))
        .collect()
}

pub fn sub(a: &[f64], b: &[f64]) -> Vec<f64> {
    let n = a.len().max(b.len());
    (0..n)
        .map(|i| a.get(i).copied().unwrap_or(0.0) - b.get(i).copied().unwrap_or(0.0))
        .collect()
}

pub fn scale(a: &[f64], k: f64) -> Vec<f64> {
    a.iter().map(|c| c * k).collect()
}

/// Drops leading (highest-power) coefficients whose magnitude is below
/// `rel_tol` times the largest coefficient.
pub fn trim(mut coeffs: Vec<f64>, rel_tol: f64) -> Vec<f64> {
    let max = coeffs.iter().fold(0.0f64, |m, c| m.max(c.abs()));
    while let Some(&last) = coeffs.last() {
        if last.abs() <= rel_tol * max || last == 0.0 {
            coeffs.pop();
        } else {
            break;
        }
    }
    coeffs
}

/// Degree of a polynomial with trailing zeros ignored; `None` for the zero
/// polynomial.
pub fn degree(coeffs: &[f64]) -> Option<usize> {
    coeffs.iter().rposition(|&c| c != 0.0)
}

/// Monic polynomial with the given roots. Non-real roots must come in
/// conjugate pairs; imaginary residue from rounding is discarded.
pub fn from_roots(roots: &[Complex64]) -> Vec<f64> {
    let mut acc = vec![Complex64::new(1.0, 0.0)];
    for r in roots {
        let mut next = vec![Complex64::new(0.0, 0.0); acc.len() + 1];
        for (i, c) in acc.iter().enumerate() {
            next[i + 1] += c;
            next[i] -= c * r;
        }
        acc = next;
    }
    acc.into_iter().map(|c| c.re).collect()
}

/// Companion matrix of a polynomial normalized by its leading coefficient.
pub fn companion(coeffs: &[f64]) -> Result<Matrix> {
    let d = degree(coeffs).ok_or_else(|| Error::InvalidSpec("zero polynomial".into()))?;
    let lead = coeffs[d];
    let mut m = Matrix::zeros(d, d);
    for i in 0..d.saturating_sub(1) {
        m[(i, i + 1)] = 1.0;
    }
    for j in 0..d {
        m[(d - 1, j)] = -coeffs[j] / lead;
    }
    Ok(m)
}

/// Roots through companion-matrix eigenvalues.
pub fn roots(coeffs: &[f64]) -> Result<Vec<Complex64>> {
    let d = degree(coeffs).ok_or_else(|| Error::InvalidSpec("zero polynomial".into()))?;
    if d == 0 {
        return Ok(Vec::new());
    }
    eigenvalues(&companion(coeffs)?)
}

/// Polynomial long division `a = q·b + r`.
pub fn div_rem(a: &[f64], b: &[f64]) -> Result<(Vec<f64>, Vec<f64>)> {
    let db = degree(b).ok_or_else(|| Error::InvalidSpec("division by zero polynomial".into()))?;
    let Some(da) = degree(a) else {
        return Ok((vec![0.0], vec![0.0]));
    };
    if da < db {
        return Ok((vec![0.0], a[..=da].to_vec()));
    }
    let mut r = a[..=da].to_vec();
    let mut q = vec![0.0; da - db + 1];
    for k in (0..=da - db).rev() {
        let f = r[k + db] / b[db];
        q[k] = f;
        for j in 0..=db {
            r[k + j] -= f * b[j];
        }
    }
    r.truncate(db.max(1));
    Ok((q, r))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn from_roots_and_back() {
        let roots_in = [
            Complex64::new(-1.0, 0.0),
            Complex64::new(-2.0, 3.0),
            Complex64::new(-2.0, -3.0),
        ];
        let p = from_roots(&roots_in);
        // (s + 1)(s² + 4s + 13) = s³ + 5s² + 17s + 13
        assert_eq!(p, vec![13.0, 17.0, 5.0, 1.0]);
        let mut r = roots(&p).unwrap();
        r.sort_by(|a, b| a.im.partial_cmp(&b.im).unwrap());
        assert!((r[0] - roots_in[2]).norm() < 1e-12);
        assert!((r[1] - roots_in[0]).norm() < 1e-12);
    }

    #[test]
    fn division_recovers_factor() {
        let a = mul(&[1.0, 2.0], &[3.0, 0.0, 1.0]);
        let (q, r) = div_rem(&a, &[1.0, 2.0]).unwrap();
        assert!(q.iter().zip([3.0, 0.0, 1.0]).all(|(x, y)| (x - y).abs() < 1e-14));
        assert!(r.iter().all(|x| x.abs() < 1e-14));
    }

    #[test]
    fn horner_matches_direct() {
        let s = Complex64::new(0.3, -1.2);
        let v = eval(&[1.0, -2.0, 0.5], s);
        let direct = 1.0 - 2.0 * s + 0.5 * s * s;
        assert!((v - direct).norm() < 1e-15);
        assert_eq!(derivative(&[1.0, -2.0, 0.5]), vec![-2.0, 1.0]);
    }
}
