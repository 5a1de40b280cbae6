//! The three estimation steps on the transformed factor series.

use std::f64::consts::PI;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{ensure, Result};
use crate::linalg::{clip_eigenvalues, least_squares_rows, symmetrize};
use crate::sparse_var::{build_lagged_design, cross_validate_lambda, CvOptions, VarCoeffs};

/// Bounds applied to the variance split ratio `r`.
pub const R_BOUNDS: (f64, f64) = (1e-3, 1.0 - 1e-3);
/// Eigenvalue floor of Σ_η relative to `tr(Σ_α)/m`.
pub const ETA_FLOOR: f64 = 1e-8;

#[derive(Debug, Clone, PartialEq)]
pub struct Step1 {
    pub coeffs: VarCoeffs,
    /// T×m residuals `û_t^{(q)}` with zero-initialised lags.
    pub residuals: DMatrix<f64>,
    pub lambda_star: f64,
    pub lasso_lambda_star: f64,
    pub cv_curve: Vec<(f64, f64)>,
}

/// Sparse VAR(q) approximation of the VAR(∞) form, tuned by cross-validation.
pub fn msv_step1(x: &DMatrix<f64>, q: usize, cv: &CvOptions) -> Result<Step1> {
    let design = build_lagged_design(x, q)?;
    let res = cross_validate_lambda(x, q, cv)?;
    let residuals = res.final_fit.residuals(&design);
    Ok(Step1 {
        coeffs: res.final_fit,
        residuals,
        lambda_star: res.lambda_star,
        lasso_lambda_star: res.lasso_lambda_star,
        cv_curve: res.cv_curve,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Step2 {
    #[serde(with = "crate::serde_mat::dvec")]
    pub c_star: DVector<f64>,
    #[serde(with = "crate::serde_mat")]
    pub phi: DMatrix<f64>,
    #[serde(with = "crate::serde_mat")]
    pub xi: DMatrix<f64>,
    /// Gram matrix of `K_{t−1}` required the ridge fallback.
    pub ridged: bool,
}

/// Least squares of `x_t` on `K_{t−1} = (1, x_{t−1}ᵀ, û_{t−1}ᵀ)ᵀ`. Row 0 has no
/// lagged residual and is dropped; `skip` drops further leading rows.
pub fn msv_step2(x: &DMatrix<f64>, residuals: &DMatrix<f64>, skip: usize) -> Result<Step2> {
    let (t, m) = x.shape();
    ensure!(residuals.shape() == (t, m), InvalidArgument, "residual shape mismatch");
    let start = 1 + skip;
    ensure!(
        t >= start + 2 * m + 2,
        InvalidArgument,
        "need T >= 2m+3 usable rows for step 2 (T={t})"
    );
    let n = t - start;
    let mut k = DMatrix::zeros(n, 1 + 2 * m);
    let mut y = DMatrix::zeros(n, m);
    for (row, s) in (start..t).enumerate() {
        k[(row, 0)] = 1.0;
        for j in 0..m {
            k[(row, 1 + j)] = x[(s - 1, j)];
            k[(row, 1 + m + j)] = residuals[(s - 1, j)];
            y[(row, j)] = x[(s, j)];
        }
    }
    let (gamma, ridged) = least_squares_rows(&k, &y)?;
    Ok(Step2 {
        c_star: gamma.column(0).into_owned(),
        phi: gamma.columns(1, m).into_owned(),
        xi: gamma.columns(1 + m, m).into_owned(),
        ridged,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Step3 {
    #[serde(with = "crate::serde_mat")]
    pub sigma_xi: DMatrix<f64>,
    #[serde(with = "crate::serde_mat")]
    pub sigma_alpha: DMatrix<f64>,
    pub r: f64,
    #[serde(with = "crate::serde_mat")]
    pub s_x: DMatrix<f64>,
    pub clamped: bool,
}

/// Sample covariance of the rows of `x` (divisor T).
pub fn sample_cov_rows(x: &DMatrix<f64>) -> DMatrix<f64> {
    let t = x.nrows() as f64;
    let mut c = x.clone();
    for mut col in c.column_iter_mut() {
        let mean = col.mean();
        col.add_scalar_mut(-mean);
    }
    symmetrize(&(c.transpose() * &c / t))
}

/// Variance split `Σ_ξ = r S_x`, `Σ_α = (1−r) S_x` with
/// `r = (π²/2)(m⁻¹ tr S_x)⁻¹`, clamped to [`R_BOUNDS`].
pub fn msv_step3(x: &DMatrix<f64>) -> Result<Step3> {
    let s_x = sample_cov_rows(x);
    split_variance(s_x)
}

pub fn split_variance(s_x: DMatrix<f64>) -> Result<Step3> {
    let m = s_x.nrows() as f64;
    let tr = s_x.trace();
    ensure!(
        tr > 0.0 && tr.is_finite(),
        InvalidArgument,
        "S_x has non-positive trace"
    );
    let raw = (PI * PI / 2.0) / (tr / m);
    let r = raw.clamp(R_BOUNDS.0, R_BOUNDS.1);
    Ok(Step3 {
        sigma_xi: &s_x * r,
        sigma_alpha: &s_x * (1.0 - r),
        r,
        s_x,
        clamped: r != raw,
    })
}

/// `Σ_η = Σ_α − ΦΣ_αΦᵀ`, symmetrised and eigenvalue-clipped at
/// `ETA_FLOOR · tr(Σ_α)/m`. The flag reports whether clipping was needed.
pub fn derive_state_noise(sigma_alpha: &DMatrix<f64>, phi: &DMatrix<f64>) -> (DMatrix<f64>, bool) {
    let m = sigma_alpha.nrows() as f64;
    let raw = symmetrize(&(sigma_alpha - phi * sigma_alpha * phi.transpose()));
    let floor = ETA_FLOOR * sigma_alpha.trace() / m;
    clip_eigenvalues(&raw, floor)
}
