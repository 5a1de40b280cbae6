//! Competing conditional covariance models.

mod bekk;
mod dcc;
mod fgarch;
mod optim;
mod univariate;

pub use bekk::{fit_sbekk, sbekk_cov_path, BekkFit, BekkForecaster};
pub use dcc::{dcc_cov_path, fit_dcc, DccFit, DccForecaster};
pub use fgarch::{fgarch_cov_path, fit_fgarch, FgarchFit, FgarchForecaster};
pub use optim::{PERSISTENCE_CAP, START_PAIRS};
pub use univariate::{fit_garch11, simulate_garch11, Garch11Fit, Garch11Params};

use serde::{Deserialize, Serialize};

/// Largest cross-section estimated with the full likelihood by default.
pub const FULL_LIKELIHOOD_MAX_ASSETS: usize = 100;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LikelihoodMode {
    Full,
    /// Sum of bivariate likelihoods over contiguous pairs `(i, i+1)`.
    Composite,
}

impl LikelihoodMode {
    pub fn for_assets(p: usize) -> Self {
        if p <= FULL_LIKELIHOOD_MAX_ASSETS {
            Self::Full
        } else {
            Self::Composite
        }
    }
}
