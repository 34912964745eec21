//! Continuous algebraic Riccati equation
//! `AᵀP + PA − PBR⁻¹BᵀP + Q = 0` via the ordered real Schur form of the
//! Hamiltonian, with Newton–Kleinman polishing of the residual.

use super::eig::{spectral_abscissa, RealSchur};
use super::lu::{inverse, Lu};
use super::matrix::Matrix;
use crate::error::{Error, Result};

/// Residual bound: `‖AᵀP + PA − PBR⁻¹BᵀP + Q‖∞ ≤ RES_TOL·(1 + ‖P‖∞²)`.
pub const CARE_RESIDUAL_TOL: f64 = 1e-8;
const MAX_NEWTON_STEPS: usize = 12;

/// `AᵀP + PA − PBR⁻¹BᵀP + Q`.
pub fn care_residual(a: &Matrix, b: &Matrix, q: &Matrix, r: &Matrix, p: &Matrix) -> Result<Matrix> {
    let rinv = inverse(r)?;
    let g = b.matmul(&rinv).matmul(&b.transpose());
    let at_p = a.transpose().matmul(p);
    let pa = p.matmul(a);
    let pgp = p.matmul(&g).matmul(p);
    Ok(&(&(&at_p + &pa) - &pgp) + q)
}

fn residual_ratio(res: &Matrix, p: &Matrix) -> f64 {
    let pn = p.norm_inf();
    res.norm_inf() / (1.0 + pn * pn)
}

/// Stabilizing solution of the CARE.
pub fn care_solve(a: &Matrix, b: &Matrix, q: &Matrix, r: &Matrix) -> Result<Matrix> {
    let n = a.rows();
    if !a.is_square() || b.rows() != n || q.shape() != (n, n) || !r.is_square() || r.rows() != b.cols() {
        return Err(Error::Dimension(format!(
            "CARE shapes A {:?}, B {:?}, Q {:?}, R {:?}",
            a.shape(),
            b.shape(),
            q.shape(),
            r.shape()
        )));
    }
    for (name, m) in [("CARE A", a), ("CARE B", b), ("CARE Q", q), ("CARE R", r)] {
        if !m.is_finite() {
            return Err(Error::NonFinite(name));
        }
    }
    if (q - &q.transpose()).max_abs() > 1e-12 * q.max_abs().max(1.0) {
        return Err(Error::InvalidSpec("Q weight must be symmetric".into()));
    }
    if (r - &r.transpose()).max_abs() > 1e-12 * r.max_abs().max(1.0) {
        return Err(Error::InvalidSpec("R weight must be symmetric".into()));
    }
    let rinv = inverse(r).map_err(|_| Error::InvalidSpec("R weight must be positive definite".into()))?;
    if n == 0 {
        return Ok(Matrix::zeros(0, 0));
    }
    let g = b.matmul(&rinv).matmul(&b.transpose());

    let mut h = Matrix::zeros(2 * n, 2 * n);
    h.set_block(0, 0, a);
    h.set_block(0, n, &(-&g));
    h.set_block(n, 0, &(-q));
    h.set_block(n, n, &(-&a.transpose()));

    let scale = h.norm_inf().max(1.0);
    let margin = 1e3 * f64::EPSILON * scale;
    let mut schur = RealSchur::decompose(&h)?;
    let stable_count = schur
        .eigenvalues()
        .iter()
        .filter(|l| l.re < -margin)
        .count();
    if stable_count != n {
        return Err(Error::NotStabilizable {
            stable: stable_count,
            needed: n,
        });
    }
    let k = schur.reorder(|l| l.re < -margin)?;
    if k != n {
        return Err(Error::NotStabilizable { stable: k, needed: n });
    }
    let z11 = schur.z.block(0, 0, n, n);
    let z21 = schur.z.block(n, 0, n, n);
    // P·Z11 = Z21  ⇔  Z11ᵀ·Pᵀ = Z21ᵀ
    let lu = Lu::factor(&z11.transpose()).map_err(|_| Error::NotStabilizable { stable: n, needed: n })?;
    let mut p = lu.solve(&z21.transpose()).transpose().symmetrize();

    let mut res = residual_ratio(&care_residual(a, b, q, r, &p)?, &p);
    if res > 1e-2 * CARE_RESIDUAL_TOL {
        for _ in 0..MAX_NEWTON_STEPS {
            let Ok(candidate) = newton_kleinman_step(a, b, q, r, &rinv, &p) else {
                break;
            };
            let cand_res = residual_ratio(&care_residual(a, b, q, r, &candidate)?, &candidate);
            if !(cand_res < res) {
                break;
            }
            p = candidate;
            res = cand_res;
            if res <= 1e-3 * CARE_RESIDUAL_TOL {
                break;
            }
        }
    }
    if res > CARE_RESIDUAL_TOL {
        return Err(Error::RiccatiResidual {
            residual: res,
            bound: CARE_RESIDUAL_TOL,
        });
    }
    let k = rinv.matmul(&b.transpose()).matmul(&p);
    let closed = a - &b.matmul(&k);
    if spectral_abscissa(&closed)? >= 0.0 {
        return Err(Error::NotStabilizable { stable: 0, needed: n });
    }
    Ok(p)
}

fn newton_kleinman_step(a: &Matrix, b: &Matrix, q: &Matrix, r: &Matrix, rinv: &Matrix, p: &Matrix) -> Result<Matrix> {
    let k = rinv.matmul(&b.transpose()).matmul(p);
    let acl = a - &b.matmul(&k);
    let rhs = q + &k.transpose().matmul(r).matmul(&k);
    Ok(lyapunov(&acl, &rhs)?.symmetrize())
}

/// Solves `AᵀX + XA + M = 0` through the Kronecker form.
pub fn lyapunov(a: &Matrix, m: &Matrix) -> Result<Matrix> {
    let n = a.rows();
    let dim = n * n;
    // vec is row-major: X[i][j] ↦ i·n + j
    let mut k = Matrix::zeros(dim, dim);
    for i in 0..n {
        for j in 0..n {
            let row = i * n + j;
            for l in 0..n {
                // (AᵀX)[i][j] = Σ_l A[l][i]·X[l][j]
                k[(row, l * n + j)] += a[(l, i)];
                // (XA)[i][j] = Σ_l X[i][l]·A[l][j]
                k[(row, i * n + l)] += a[(l, j)];
            }
        }
    }
    let rhs: Vec<f64> = m.data().iter().map(|v| -v).collect();
    let x = Lu::factor(&k)?.solve_vec(&rhs);
    Matrix::new(n, n, x)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn scalar_integrator() {
        let one = Matrix::from_rows(&[vec![1.0]]).unwrap();
        let p = care_solve(&Matrix::zeros(1, 1), &one, &one, &one).unwrap();
        assert!((p[(0, 0)] - 1.0).abs() < 1e-14);
    }

    #[test]
    fn double_integrator() {
        let a = Matrix::from_rows(&[vec![0.0, 1.0], vec![0.0, 0.0]]).unwrap();
        let b = Matrix::column(&[0.0, 1.0]);
        let q = Matrix::identity(2);
        let r = Matrix::from_rows(&[vec![1.0]]).unwrap();
        let p = care_solve(&a, &b, &q, &r).unwrap();
        let res = care_residual(&a, &b, &q, &r, &p).unwrap();
        assert!(res.norm_inf() <= 1e-10);
        // closed form: P = [[√3, 1], [1, √3]]
        assert!((p[(0, 0)] - 3f64.sqrt()).abs() < 1e-12);
        assert!((p[(0, 1)] - 1.0).abs() < 1e-12);
        let k = b.transpose().matmul(&p);
        assert!(spectral_abscissa(&(&a - &b.matmul(&k))).unwrap() < 0.0);
    }

    #[test]
    fn unstabilizable_pair_rejected() {
        // unstable mode at +1 with no input
        let a = Matrix::diag(&[1.0, -1.0]);
        let b = Matrix::column(&[0.0, 1.0]);
        let q = Matrix::identity(2);
        let r = Matrix::from_rows(&[vec![1.0]]).unwrap();
        assert!(matches!(
            care_solve(&a, &b, &q, &r),
            Err(Error::NotStabilizable { .. })
        ));
    }

    #[test]
    fn lyapunov_matches_scalar() {
        let a = Matrix::from_rows(&[vec![-2.0]]).unwrap();
        let m = Matrix::from_rows(&[vec![4.0]]).unwrap();
        let x = lyapunov(&a, &m).unwrap();
        assert!((x[(0, 0)] - 1.0).abs() < 1e-15);
    }
}
