//! Small dense numerical kernel: matrices, Jacobi SVD, pseudoinverse and the
//! bounded-variable LP behind membership and nonconformity scores.

mod lp;
mod matrix;
mod svd;

pub use lp::{inf_residual, solve_min_inflation, solve_min_inflation_flat, InflationSolution};
pub use matrix::DenseMatrix;
pub use svd::{pinv, pinv_from_svd, rank, svd, Svd, DEFAULT_RANK_TOL};

pub(crate) use matrix::{dot, norm2};
