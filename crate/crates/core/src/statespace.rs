//! Single-input single-output state-space models `(A, B, C, D)`.

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numkernel::{eigenvalues, Lu, Matrix};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StateSpaceModel {
    pub a: Matrix,
    pub b: Matrix,
    pub c: Matrix,
    pub d: f64,
}

impl StateSpaceModel {
    pub fn new(a: Matrix, b: Matrix, c: Matrix, d: f64) -> Result<Self> {
        let n = a.rows();
        if !a.is_square() || b.shape() != (n, 1) || c.shape() != (1, n) {
            return Err(Error::Dimension(format!(
                "state-space shapes A {:?}, B {:?}, C {:?}",
                a.shape(),
                b.shape(),
                c.shape()
            )));
        }
        if !d.is_finite() {
            return Err(Error::NonFinite("feedthrough D"));
        }
        Ok(Self { a, b, c, d })
    }

    /// Pure gain with no states.
    pub fn gain(d: f64) -> Self {
        Self {
            a: Matrix::zeros(0, 0),
            b: Matrix::zeros(0, 1),
            c: Matrix::zeros(1, 0),
            d,
        }
    }

    pub fn order(&self) -> usize {
        self.a.rows()
    }

    /// `(sI − A)⁻¹B`.
    pub fn resolvent_input(&self, s: Complex64) -> Result<Vec<Complex64>> {
        let lu = Lu::factor(&self.a.shifted_resolvent_matrix(s))?;
        let rhs: Vec<Complex64> = self.b.data().iter().map(|&x| Complex64::new(x, 0.0)).collect();
        Ok(lu.solve_vec(&rhs))
    }

    /// `C(sI − A)⁻¹B + D`.
    pub fn transfer(&self, s: Complex64) -> Result<Complex64> {
        if self.order() == 0 {
            return Ok(Complex64::new(self.d, 0.0));
        }
        let x = self.resolvent_input(s)?;
        let y: Complex64 = self.c.data().iter().zip(&x).map(|(&c, &x)| x * c).sum();
        Ok(y + self.d)
    }

    /// Markov parameter `C·A^r·B`.
    pub fn markov(&self, r: usize) -> f64 {
        let mut v = self.b.clone();
        for _ in 0..r {
            v = self.a.matmul(&v);
        }
        self.c.matmul(&v).data().first().copied().unwrap_or(0.0)
    }

    pub fn poles(&self) -> Result<Vec<Complex64>> {
        eigenvalues(&self.a)
    }

    /// Controllability matrix `[B, AB, …, A^{n−1}B]`.
    pub fn controllability(&self) -> Matrix {
        let n = self.order();
        let mut out = Matrix::zeros(n, n);
        let mut v = self.b.clone();
        for j in 0..n {
            for i in 0..n {
                out[(i, j)] = v[(i, 0)];
            }
            v = self.a.matmul(&v);
        }
        out
    }

    /// Observability matrix `[C; CA; …; CA^{n−1}]`.
    pub fn observability(&self) -> Matrix {
        let n = self.order();
        let mut out = Matrix::zeros(n, n);
        let mut v = self.c.clone();
        for i in 0..n {
            for j in 0..n {
                out[(i, j)] = v[(0, j)];
            }
            v = v.matmul(&self.a);
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn first_order_lag() {
        let sys = StateSpaceModel::new(
            Matrix::diag(&[-2.0]),
            Matrix::column(&[1.0]),
            Matrix::row(&[3.0]),
            0.5,
        )
        .unwrap();
        let s = Complex64::new(1.0, 2.0);
        let expected = 3.0 / (s + 2.0) + 0.5;
        assert!((sys.transfer(s).unwrap() - expected).norm() < 1e-14);
        assert_eq!(sys.markov(0), 3.0);
        assert_eq!(sys.markov(1), -6.0);
    }

    #[test]
    fn gain_has_no_states() {
        let g = StateSpaceModel::gain(0.25);
        assert_eq!(g.order(), 0);
        assert_eq!(g.transfer(Complex64::new(0.0, 5.0)).unwrap(), Complex64::new(0.25, 0.0));
    }

    #[test]
    fn rejects_bad_shapes() {
        assert!(StateSpaceModel::new(Matrix::zeros(2, 2), Matrix::zeros(1, 1), Matrix::zeros(1, 2), 0.0).is_err());
    }
}
