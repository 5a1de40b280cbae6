//! Multivariate stochastic volatility of the factor series, estimated in
//! three least-squares steps and filtered through a linear state space.

mod kalman;
mod stabilize;
mod steps;
mod transform;
mod upsilon;

pub use kalman::{kalman_filter_smoother, Filtered, KalmanOutput, KalmanState, StateSpace};
pub use stabilize::{stabilize_transition, ReplacedEig, Stabilization, UNIT_TOL};
pub use steps::{
    derive_state_noise, msv_step1, msv_step2, msv_step3, sample_cov_rows, split_variance, Step1, Step2, Step3,
    ETA_FLOOR, R_BOUNDS,
};
pub use transform::{apply_log_square, log_square, log_square_transform, LogSqSeries, OFFSET_RATIO};
pub use upsilon::{solve_vma_upsilon, vma_moment_residual, VmaSolution};

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::data_io::{Artifact, CovPath};
use crate::error::{ensure, Result};
use crate::factor_model::{fit_factor_model_em, gls_projection, rotate_ic3_to_ic2, EmOptions, FactorFit};
use crate::linalg::{solve_discrete_lyapunov, symmetrize};
use crate::sparse_var::{CvOptions, VarCoeffs};

/// `E[log ζ²]` for standard normal ζ: `ψ(1/2) + log 2 = −γ_E − log 2`.
pub const KAPPA: f64 = -1.270_362_845_461_478;
/// Prior variance placed on replaced (unit-root) state directions.
pub const DIFFUSE_VAR: f64 = 1e7;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MsvOptions {
    pub q: usize,
    pub cv: CvOptions,
    /// Drop the first `q` rows (zero-initialised lags) before step 2.
    pub trim_step2: bool,
}

impl Default for MsvOptions {
    fn default() -> Self {
        Self {
            q: 10,
            cv: CvOptions::default(),
            trim_step2: false,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MsvFit {
    #[serde(with = "crate::serde_mat::dvec")]
    pub c: DVector<f64>,
    #[serde(with = "crate::serde_mat::dvec")]
    pub s_sq: DVector<f64>,
    pub step1: VarCoeffs,
    pub lambda_star: f64,
    pub lasso_lambda_star: f64,
    #[serde(with = "crate::serde_mat")]
    pub residuals: DMatrix<f64>,
    pub step2: Step2,
    pub step3: Step3,
    #[serde(with = "crate::serde_mat")]
    pub sigma_eta: DMatrix<f64>,
    pub eta_clipped: bool,
    #[serde(with = "crate::serde_mat::dvec")]
    pub nu_star: DVector<f64>,
    pub stabilization: Stabilization,
}

impl Artifact for MsvFit {
    const SCHEMA: &'static str = "msv_fit";
    const VERSION: u32 = 1;
}

impl MsvFit {
    pub fn dim(&self) -> usize {
        self.nu_star.len()
    }

    pub fn state_space(&self) -> StateSpace {
        let m = self.dim();
        StateSpace {
            transition: self.stabilization.phi_used.clone(),
            state_noise: self.sigma_eta.clone(),
            obs_noise: self.step3.sigma_xi.clone(),
            obs_intercept: self.nu_star.clone(),
            state_intercept: DVector::zeros(m),
        }
    }

    /// Zero-mean prior: stationary Lyapunov variance, or `Σ_α` plus a diffuse
    /// component along replaced directions.
    pub fn initial_state(&self) -> KalmanState {
        let m = self.dim();
        let phi = &self.stabilization.phi_used;
        let p = if self.stabilization.replaced_eigs.is_empty() {
            solve_discrete_lyapunov(phi, &self.sigma_eta)
                .ok()
                .filter(|p| p.iter().all(|v| v.is_finite()))
                .unwrap_or_else(|| self.step3.sigma_alpha.clone())
        } else {
            let q = &self.stabilization.replaced_directions;
            symmetrize(&(&self.step3.sigma_alpha + q * q.transpose() * DIFFUSE_VAR))
        };
        KalmanState {
            a: DVector::zeros(m),
            p,
        }
    }
}

/// Steps 1–3, state noise and stabilisation on an estimated factor series.
pub fn fit_msv(f: &DMatrix<f64>, opts: &MsvOptions) -> Result<MsvFit> {
    let xs = log_square_transform(f)?;
    let s1 = msv_step1(&xs.x, opts.q, &opts.cv)?;
    let skip = if opts.trim_step2 { opts.q } else { 0 };
    let s2 = msv_step2(&xs.x, &s1.residuals, skip)?;
    let s3 = msv_step3(&xs.x)?;
    let stabilization = stabilize_transition(&s2.phi, &s2.c_star);
    let (sigma_eta, eta_clipped) = derive_state_noise(&s3.sigma_alpha, &stabilization.phi_used);
    let t = xs.x.nrows() as f64;
    let nu_star = DVector::from_fn(xs.x.ncols(), |j, _| xs.x.column(j).sum() / t);
    Ok(MsvFit {
        c: xs.c,
        s_sq: xs.s_sq,
        step1: s1.coeffs,
        lambda_star: s1.lambda_star,
        lasso_lambda_star: s1.lasso_lambda_star,
        residuals: s1.residuals,
        step2: s2,
        step3: s3,
        sigma_eta,
        eta_clipped,
        nu_star,
        stabilization,
    })
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct FmsvOptions {
    pub em: EmOptions,
    pub msv: MsvOptions,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FmsvModel {
    /// Factor fit under IC2.
    pub factor: FactorFit,
    pub msv: MsvFit,
    #[serde(with = "crate::serde_mat::dvec")]
    pub offsets: DVector<f64>,
    #[serde(with = "crate::serde_mat::dvec")]
    pub means: DVector<f64>,
}

impl Artifact for FmsvModel {
    const SCHEMA: &'static str = "fmsv";
    const VERSION: u32 = 1;
}

pub fn fit_fmsv(values: &DMatrix<f64>, m: usize, opts: &FmsvOptions) -> Result<FmsvModel> {
    let ic3 = fit_factor_model_em(values, m, &opts.em)?;
    let factor = rotate_ic3_to_ic2(&ic3)?;
    let f = crate::factor_model::gls_factor_scores(&factor, values)?;
    let msv = fit_msv(&f.values, &opts.msv)?;
    Ok(FmsvModel {
        offsets: DVector::from_element(m, KAPPA),
        means: factor.means.clone(),
        factor,
        msv,
    })
}

impl FmsvModel {
    pub fn n_factors(&self) -> usize {
        self.factor.n_factors()
    }

    /// Transformed GLS factor series `x̂_t` of a panel, using the stored constants.
    pub fn transformed(&self, values: &DMatrix<f64>) -> Result<DMatrix<f64>> {
        let f = crate::factor_model::gls_factor_scores(&self.factor, values)?;
        Ok(apply_log_square(&f.values, &self.msv.c))
    }

    /// `Λ diag(exp(ν* + a − κ + ½·diag P)) Λᵀ + Σ_ε`; the variance term only with `lognormal`.
    pub fn covariance_from_state(&self, a: &DVector<f64>, p: &DMatrix<f64>, lognormal: bool) -> DMatrix<f64> {
        let d = self.factor_variances(a, p, lognormal);
        self.factor.implied_covariance(&d)
    }

    pub fn factor_variances(&self, a: &DVector<f64>, p: &DMatrix<f64>, lognormal: bool) -> DVector<f64> {
        DVector::from_fn(a.len(), |j, _| {
            let corr = if lognormal { 0.5 * p[(j, j)] } else { 0.0 };
            (self.msv.nu_star[j] + a[j] - self.offsets[j] + corr).exp()
        })
    }

    /// In-sample path from the smoothed states.
    pub fn smoothed_path(&self, values: &DMatrix<f64>, lognormal: bool) -> Result<CovPath> {
        let x = self.transformed(values)?;
        let out = kalman_filter_smoother(&self.msv.state_space(), &x, &self.msv.initial_state())?;
        Ok(CovPath::new(
            (0..x.nrows())
                .map(|t| self.covariance_from_state(&out.smoothed.row(t).transpose(), &out.smoothed_var[t], lognormal))
                .collect(),
        ))
    }

    pub fn forecaster(&self, lognormal: bool) -> Result<FmsvForecaster> {
        Ok(FmsvForecaster {
            projection: gls_projection(&self.factor)?,
            state: self.msv.initial_state(),
            ss: self.msv.state_space(),
            model: self.clone(),
            lognormal,
        })
    }
}

/// `Ĥ_{T+l|T}` for `l = 1..=horizon` after filtering all rows of `values`.
pub fn forecast_covariance(
    model: &FmsvModel,
    values: &DMatrix<f64>,
    horizon: usize,
    lognormal: bool,
) -> Result<CovPath> {
    ensure!(horizon >= 1, InvalidArgument, "forecast horizon must be >= 1");
    let x = model.transformed(values)?;
    let ss = model.msv.state_space();
    let out = kalman_filter_smoother(&ss, &x, &model.msv.initial_state())?;
    let mut mats = Vec::with_capacity(horizon);
    let (mut a, mut p) = (out.next.a.clone(), out.next.p.clone());
    for l in 0..horizon {
        if l > 0 {
            (a, p) = ss.predict(&a, &p);
        }
        mats.push(model.covariance_from_state(&a, &p, lognormal));
    }
    Ok(CovPath::new(mats))
}

/// One-step-ahead covariance forecasts with fixed parameters, fed one return at a time.
#[derive(Debug, Clone)]
pub struct FmsvForecaster {
    model: FmsvModel,
    ss: StateSpace,
    projection: DMatrix<f64>,
    state: KalmanState,
    lognormal: bool,
}

impl FmsvForecaster {
    pub fn forecast(&self) -> DMatrix<f64> {
        self.model
            .covariance_from_state(&self.state.a, &self.state.p, self.lognormal)
    }

    pub fn update(&mut self, y: &DVector<f64>) -> Result<()> {
        let f = &self.projection * (y - &self.model.means);
        let x = DVector::from_fn(f.len(), |j, _| log_square(f[j], self.model.msv.c[j]));
        self.state.step(&self.ss, &x)?;
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn kappa_closed_form() {
        let euler = 0.577_215_664_901_532_9;
        assert!((KAPPA - (-euler - std::f64::consts::LN_2)).abs() < 1e-15);
    }
}
