//! Matrix exponential (scaling and squaring around a degree-13 Padé
//! approximant) and zero-order-hold discretization.

use super::lu::Lu;
use super::matrix::Matrix;
use crate::error::{Error, Result};

const PADE13: [f64; 14] = [
    64764752532480000.0,
    32382376266240000.0,
    7771770303897600.0,
    1187353796428800.0,
    129060195264000.0,
    10559470521600.0,
    670442572800.0,
    33522128640.0,
    1323241920.0,
    40840800.0,
    960960.0,
    16380.0,
    182.0,
    1.0,
];
const THETA13: f64 = 5.371920351148152;

pub fn expm(a: &Matrix) -> Result<Matrix> {
    if !a.is_square() {
        return Err(Error::Dimension("expm needs a square matrix".into()));
    }
    if !a.is_finite() {
        return Err(Error::NonFinite("expm input"));
    }
    let n = a.rows();
    let norm = a.norm_one();
    let squarings = if norm > THETA13 {
        (norm / THETA13).log2().ceil() as i32
    } else {
        0
    };
    let a = a.scale(0.5f64.powi(squarings));
    let b = &PADE13;
    let id = Matrix::identity(n);
    let a2 = a.matmul(&a);
    let a4 = a2.matmul(&a2);
    let a6 = a4.matmul(&a2);
    let lin = |c6: f64, c4: f64, c2: f64, c0: f64| -> Matrix {
        let mut m = &(&a6.scale(c6) + &a4.scale(c4)) + &a2.scale(c2);
        if c0 != 0.0 {
            m = &m + &id.scale(c0);
        }
        m
    };
    let u_inner = &a6.matmul(&lin(b[13], b[11], b[9], 0.0)) + &lin(b[7], b[5], b[3], b[1]);
    let u = a.matmul(&u_inner);
    let v = &a6.matmul(&lin(b[12], b[10], b[8], 0.0)) + &lin(b[6], b[4], b[2], b[0]);
    let num = &v + &u;
    let den = &v - &u;
    let mut r = Lu::factor(&den)?.solve(&num);
    for _ in 0..squarings {
        r = r.matmul(&r);
    }
    Ok(r)
}

/// Exact discretization for piecewise-constant inputs:
/// `Ad = e^{Ah}`, `Bd = ∫₀ʰ e^{Aσ}dσ·B`, from the exponential of the
/// augmented matrix `[[A, B], [0, 0]]·h`.
pub fn zoh_discretize(a: &Matrix, b: &Matrix, h: f64) -> Result<(Matrix, Matrix)> {
    if !(h > 0.0) || !h.is_finite() {
        return Err(Error::InvalidSpec(format!("sample period must be positive, got {h}")));
    }
    let n = a.rows();
    if !a.is_square() || b.rows() != n {
        return Err(Error::Dimension(format!(
            "zoh_discretize shapes A {:?}, B {:?}",
            a.shape(),
            b.shape()
        )));
    }
    let m = b.cols();
    let mut aug = Matrix::zeros(n + m, n + m);
    aug.set_block(0, 0, &a.scale(h));
    aug.set_block(0, n, &b.scale(h));
    let e = expm(&aug)?;
    Ok((e.block(0, 0, n, n), e.block(0, n, n, m)))
}
