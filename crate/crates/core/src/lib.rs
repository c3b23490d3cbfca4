//! Output reachable sets of unknown LTI systems from noisy input-output data.
//!
//! The crate is organized bottom-up:
//!
//! - [`linsolve`]: dense matrices, Jacobi SVD, pseudoinverse, the min-inflation LP
//! - [`setalg`]: zonotopes, matrix zonotopes and interval boxes
//! - [`sysim`]: ground-truth simulator, datasets and the characteristic-polynomial oracle
//! - [`ddreach`]: lifted data matrices, the model set and set propagation
//! - [`fitcert`]: PCA containing zonotopes and certificate-driven contraction
//! - [`surrogate`]: zonotope tokenization and decoder-only transformer inference
//! - [`conformal`]: nonconformity scores, quantiles, inflation and coverage

pub mod conformal;
pub mod ddreach;
pub mod error;
pub mod fitcert;
pub mod linsolve;
pub mod seeds;
pub mod setalg;
pub mod surrogate;
pub mod sysim;

pub use error::{Error, Result};
