//! Factor multivariate stochastic volatility (fMSV) covariance estimation,
//! competing GARCH-type models, simulation designs and forecast evaluation.

// Negated comparisons (`!(x > 0.0)`) are the NaN-rejecting guards; metric loops index parallel arrays.
#![allow(clippy::neg_cmp_op_on_partial_ord, clippy::needless_range_loop)]

pub mod baselines;
pub mod data_io;
pub mod error;
pub mod evaluate;
pub mod factor_model;
pub mod forecaster;
pub mod garch;
pub mod linalg;
pub mod msv;
pub mod serde_mat;
pub mod simulate;
pub mod sparse_var;
pub mod study;

pub use error::{Error, Result};
