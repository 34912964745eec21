//! LU factorization with partial pivoting, condition estimation and the
//! checked `solve_linear` entry point.

use serde::{Deserialize, Serialize};

use super::matrix::{Matrix, Scalar};
use crate::error::{Error, Result};

/// Pivots below this multiple of the largest entry are treated as zero.
pub const SINGULAR_PIVOT_RATIO: f64 = 1e-13;
/// Condition estimates above this raise the ill-conditioned flag.
pub const ILL_CONDITIONED: f64 = 1e12;
/// Normwise relative backward error every accepted solve must meet.
pub const SOLVE_RESIDUAL_TOL: f64 = 1e-10;

/// Numerical diagnostics attached to a linear solve.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ConditionReport {
    /// 1-norm condition number estimate (Hager–Higham).
    pub condition_estimate: f64,
    /// `‖A·x − b‖∞ / (‖A‖∞‖x‖∞ + ‖b‖∞)`.
    pub residual_norm: f64,
    pub ill_conditioned: bool,
}

#[derive(Debug, Clone)]
pub struct Lu<T: Scalar> {
    lu: Matrix<T>,
    perm: Vec<usize>,
    norm_one: f64,
}

impl<T: Scalar> Lu<T> {
    pub fn factor(a: &Matrix<T>) -> Result<Self> {
        if !a.is_square() {
            return Err(Error::Dimension(format!(
                "LU needs a square matrix, got {}x{}",
                a.rows(),
                a.cols()
            )));
        }
        if !a.is_finite() {
            return Err(Error::NonFinite("linear system matrix"));
        }
        let n = a.rows();
        let scale = a.max_abs();
        let threshold = SINGULAR_PIVOT_RATIO * scale;
        let mut lu = a.clone();
        let mut perm: Vec<usize> = (0..n).collect();
        for k in 0..n {
            let (p, pmax) = (k..n)
                .map(|i| (i, lu[(i, k)].modulus()))
                .fold((k, -1.0), |acc, x| if x.1 > acc.1 { x } else { acc });
            if pmax <= threshold || pmax == 0.0 {
                return Err(Error::SingularMatrix {
                    pivot: pmax,
                    threshold,
                });
            }
            if p != k {
                perm.swap(p, k);
                for j in 0..n {
                    let t = lu[(k, j)];
                    lu[(k, j)] = lu[(p, j)];
                    lu[(p, j)] = t;
                }
            }
            let pivot = lu[(k, k)];
            for i in k + 1..n {
                let f = lu[(i, k)] / pivot;
                lu[(i, k)] = f;
                if f == T::zero() {
                    continue;
                }
                for j in k + 1..n {
                    let u = lu[(k, j)];
                    lu[(i, j)] -= f * u;
                }
            }
        }
        Ok(Self {
            lu,
            perm,
            norm_one: a.norm_one(),
        })
    }

    pub fn dim(&self) -> usize {
        self.lu.rows()
    }

    /// Solves `A x = b` for a single right-hand side.
    pub fn solve_vec(&self, b: &[T]) -> Vec<T> {
        let n = self.dim();
        let mut x: Vec<T> = self.perm.iter().map(|&p| b[p]).collect();
        for i in 0..n {
            let mut s = x[i];
            for j in 0..i {
                s -= self.lu[(i, j)] * x[j];
            }
            x[i] = s;
        }
        for i in (0..n).rev() {
            let mut s = x[i];
            for j in i + 1..n {
                s -= self.lu[(i, j)] * x[j];
            }
            x[i] = s / self.lu[(i, i)];
        }
        x
    }

    /// Solves `Aᴴ x = b`.
    pub fn solve_adjoint_vec(&self, b: &[T]) -> Vec<T> {
        let n = self.dim();
        // Aᴴ = (PᵀLU)ᴴ = Uᴴ Lᴴ P
        let mut y = b.to_vec();
        for i in 0..n {
            let mut s = y[i];
            for j in 0..i {
                s -= self.lu[(j, i)].conj() * y[j];
            }
            y[i] = s / self.lu[(i, i)].conj();
        }
        for i in (0..n).rev() {
            let mut s = y[i];
            for j in i + 1..n {
                s -= self.lu[(j, i)].conj() * y[j];
            }
            y[i] = s;
        }
        let mut x = vec![T::zero(); n];
        for (i, &p) in self.perm.iter().enumerate() {
            x[p] = y[i];
        }
        x
    }

    pub fn solve(&self, b: &Matrix<T>) -> Matrix<T> {
        assert_eq!(b.rows(), self.dim(), "rhs row mismatch");
        let mut out = Matrix::zeros(b.rows(), b.cols());
        for j in 0..b.cols() {
            let x = self.solve_vec(&b.col_vec(j));
            for (i, v) in x.into_iter().enumerate() {
                out[(i, j)] = v;
            }
        }
        out
    }

    /// Hager–Higham estimate of `‖A⁻¹‖₁`.
    pub fn inverse_norm_estimate(&self) -> f64 {
        let n = self.dim();
        if n == 0 {
            return 0.0;
        }
        let mut x = vec![T::from_f64(1.0 / n as f64); n];
        let mut est = 0.0;
        for _ in 0..5 {
            let y = self.solve_vec(&x);
            let new_est: f64 = y.iter().map(|v| v.modulus()).sum();
            let xi: Vec<T> = y.iter().map(|v| v.unit_sign()).collect();
            let z = self.solve_adjoint_vec(&xi);
            let (jmax, zmax) = z
                .iter()
                .map(|v| v.modulus())
                .enumerate()
                .fold((0, -1.0), |acc, x| if x.1 > acc.1 { x } else { acc });
            if new_est <= est {
                break;
            }
            est = new_est;
            let ztx: f64 = z
                .iter()
                .zip(&x)
                .map(|(a, b)| (*a * b.conj()).modulus())
                .sum::<f64>();
            if zmax <= ztx {
                break;
            }
            x = vec![T::zero(); n];
            x[jmax] = T::one();
        }
        // Alternating-sign probe guards against the estimator stalling.
        let alt: Vec<T> = (0..n)
            .map(|i| {
                let s = if i % 2 == 0 { 1.0 } else { -1.0 };
                T::from_f64(s * (1.0 + i as f64 / (n.max(2) - 1) as f64))
            })
            .collect();
        let y = self.solve_vec(&alt);
        let alt_est = 2.0 * y.iter().map(|v| v.modulus()).sum::<f64>() / (3.0 * n as f64);
        est.max(alt_est)
    }

    pub fn condition_estimate(&self) -> f64 {
        self.norm_one * self.inverse_norm_estimate()
    }
}

/// Normwise relative residual `‖A·x − b‖∞ / (‖A‖∞‖x‖∞ + ‖b‖∞)`.
pub fn relative_residual<T: Scalar>(a: &Matrix<T>, x: &Matrix<T>, b: &Matrix<T>) -> f64 {
    let r = &a.matmul(x) - b;
    let denom = a.norm_inf() * x.norm_inf() + b.norm_inf();
    if denom == 0.0 {
        0.0
    } else {
        r.norm_inf() / denom
    }
}

/// Solves the square nonsingular system `A·x = b`, with one step of
/// iterative refinement, and reports residual and conditioning.
pub fn solve_linear<T: Scalar>(a: &Matrix<T>, b: &Matrix<T>) -> Result<(Matrix<T>, ConditionReport)> {
    if !a.is_square() {
        return Err(Error::Dimension(format!(
            "solve_linear needs a square matrix, got {}x{}",
            a.rows(),
            a.cols()
        )));
    }
    if b.rows() != a.rows() {
        return Err(Error::Dimension(format!(
            "rhs has {} rows, matrix has {}",
            b.rows(),
            a.rows()
        )));
    }
    if !b.is_finite() {
        return Err(Error::NonFinite("right-hand side"));
    }
    let lu = Lu::factor(a)?;
    let mut x = lu.solve(b);
    let r = b - &a.matmul(&x);
    let dx = lu.solve(&r);
    let refined = &x + &dx;
    if relative_residual(a, &refined, b) <= relative_residual(a, &x, b) {
        x = refined;
    }
    let residual_norm = relative_residual(a, &x, b);
    if !x.is_finite() || residual_norm > SOLVE_RESIDUAL_TOL {
        return Err(Error::ResidualTooLarge {
            residual: residual_norm,
        });
    }
    let condition_estimate = lu.condition_estimate();
    Ok((
        x,
        ConditionReport {
            condition_estimate,
            residual_norm,
            ill_conditioned: condition_estimate > ILL_CONDITIONED,
        },
    ))
}

/// Inverse of a square matrix through LU.
pub fn inverse<T: Scalar>(a: &Matrix<T>) -> Result<Matrix<T>> {
    let lu = Lu::factor(a)?;
    Ok(lu.solve(&Matrix::identity(a.rows())))
}

#[cfg(test)]
mod tests {
    use super::*;
    use num_complex::Complex64;

    #[test]
    fn identity_system() {
        let a = Matrix::<f64>::identity(3);
        let b = Matrix::column(&[1.0, 2.0, 3.0]);
        let (x, rep) = solve_linear(&a, &b).unwrap();
        assert_eq!(x.col_vec(0), vec![1.0, 2.0, 3.0]);
        assert!((rep.condition_estimate - 1.0).abs() < 1e-12);
        assert!(!rep.ill_conditioned);
    }

    #[test]
    fn diagonal_system() {
        let a = Matrix::diag(&[2.0, 4.0]);
        let b = Matrix::column(&[2.0, 8.0]);
        let (x, _) = solve_linear(&a, &b).unwrap();
        assert_eq!(x.col_vec(0), vec![1.0, 2.0]);
    }

    #[test]
    fn rotation_resolvent_back_substitution() {
        let w = 1.0;
        let rot = Matrix::from_rows(&[vec![0.0, w], vec![-w, 0.0]]).unwrap();
        let a = rot.shifted_resolvent_matrix(Complex64::new(0.0, w));
        let b = Matrix::column(&[Complex64::new(1.0, 0.0), Complex64::new(0.0, 0.0)]);
        // jωI − R is singular exactly at ω; use ω = 1 against a block at 0.5.
        assert!(solve_linear(&a, &b).is_err());
        let rot = Matrix::from_rows(&[vec![0.0, 0.5], vec![-0.5, 0.0]]).unwrap();
        let a = rot.shifted_resolvent_matrix(Complex64::new(0.0, w));
        let (x, rep) = solve_linear(&a, &b).unwrap();
        let r = &a.matmul(&x) - &b;
        assert!(r.max_abs() < 1e-12);
        assert!(rep.residual_norm < 1e-12);
    }

    #[test]
    fn singular_and_rectangular_rejected() {
        let a = Matrix::from_rows(&[vec![1.0, 2.0], vec![2.0, 4.0]]).unwrap();
        let b = Matrix::column(&[1.0, 1.0]);
        assert!(matches!(
            solve_linear(&a, &b),
            Err(Error::SingularMatrix { .. })
        ));
        let tall = Matrix::<f64>::zeros(3, 2);
        assert!(matches!(
            solve_linear(&tall, &Matrix::column(&[1.0, 1.0, 1.0])),
            Err(Error::Dimension(_))
        ));
    }

    #[test]
    fn condition_estimate_flags_ill_conditioning() {
        let a = Matrix::diag(&[1.0, 1e-13 * 2.0 + 1e-12]);
        let lu = Lu::factor(&a).unwrap();
        let c = lu.condition_estimate();
        assert!(c > 1e11, "{c}");
        let hilbert = Matrix::from_fn(8, 8, |i, j| 1.0 / (i + j + 1) as f64);
        let est = Lu::factor(&hilbert).unwrap().condition_estimate();
        // κ₁(H₈) ≈ 3.4e10
        assert!(est > 1e9 && est < 1e11, "{est}");
    }

    #[test]
    fn adjoint_solve_matches_transpose() {
        let a = Matrix::from_rows(&[
            vec![Complex64::new(1.0, 2.0), Complex64::new(0.5, -1.0)],
            vec![Complex64::new(-2.0, 0.1), Complex64::new(3.0, 1.0)],
        ])
        .unwrap();
        let lu = Lu::factor(&a).unwrap();
        let b = [Complex64::new(1.0, 0.0), Complex64::new(0.0, 1.0)];
        let x = lu.solve_adjoint_vec(&b);
        let ah = a.adjoint();
        let r = &ah.matmul(&Matrix::column(&x)) - &Matrix::column(&b);
        assert!(r.max_abs() < 1e-14);
    }
}
