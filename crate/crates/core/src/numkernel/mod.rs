//! Dense linear-algebra kernels: linear solves, eigenvalues, the continuous
//! algebraic Riccati equation, and matrix exponential / ZOH discretization.
//!
//! Everything here is a pure function of its inputs.

mod care;
mod eig;
mod expm;
mod lu;
mod matrix;
mod rank;

pub use care::{care_residual, care_solve, lyapunov, CARE_RESIDUAL_TOL};
pub use eig::{balance, eigenvalues, spectral_abscissa, RealSchur};
pub use expm::{expm, zoh_discretize};
pub use lu::{
    inverse, relative_residual, solve_linear, ConditionReport, Lu, ILL_CONDITIONED, SINGULAR_PIVOT_RATIO,
    SOLVE_RESIDUAL_TOL,
};
pub use matrix::{CMatrix, Matrix, Scalar};
pub use rank::rank_ratio;
