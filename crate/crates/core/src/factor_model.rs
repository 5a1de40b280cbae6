//! Maximum-likelihood factor analysis with diagonal idiosyncratic covariance.
//!
//! The EM algorithm runs under the IC3 normalisation (`M_f = I`, diagonal and
//! decreasing `p⁻¹ΛᵀΣ_ε⁻¹Λ`); [`rotate_ic3_to_ic2`] converts the result to the
//! IC2 normalisation (`p⁻¹ΛᵀΣ_ε⁻¹Λ = I`, diagonal `M_f`) used downstream.
//! Factor scores come from cross-sectional GLS.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::baselines::demeaned;
use crate::data_io::Artifact;
use crate::error::{ensure, Error, Result};
use crate::linalg::{spd_inverse, sym_eigen_desc, sym_inv_sqrt, symmetrize};

/// Floor on idiosyncratic variances relative to each sample variance.
pub const IDIO_FLOOR: f64 = 1e-6;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Identification {
    IC3,
    IC2,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FactorFit {
    /// p×m loading matrix Λ.
    #[serde(with = "crate::serde_mat")]
    pub loadings: DMatrix<f64>,
    /// Diagonal of Σ_ε.
    #[serde(with = "crate::serde_mat::dvec")]
    pub idio_var: DVector<f64>,
    /// m×m factor second moment M_f.
    #[serde(with = "crate::serde_mat")]
    pub factor_moment: DMatrix<f64>,
    pub identification: Identification,
    /// Per-iteration Gaussian log-likelihood (per observation, without the 2π constant).
    pub loglik_trace: Vec<f64>,
    /// Column means removed before estimation.
    #[serde(with = "crate::serde_mat::dvec")]
    pub means: DVector<f64>,
    pub converged: bool,
    /// True when some idiosyncratic variance sits on its floor at exit.
    pub floor_active: bool,
    /// True when two diagonal entries of M_f coincide (IC2 distinctness not met).
    pub tied_moments: bool,
}

impl Artifact for FactorFit {
    const SCHEMA: &'static str = "factor_fit";
    const VERSION: u32 = 1;
}

impl FactorFit {
    pub fn n_assets(&self) -> usize {
        self.loadings.nrows()
    }

    pub fn n_factors(&self) -> usize {
        self.loadings.ncols()
    }

    /// `p⁻¹ ΛᵀΣ_ε⁻¹Λ`.
    pub fn scaled_gram(&self) -> DMatrix<f64> {
        scaled_gram(&self.loadings, &self.idio_var)
    }

    /// `Λ D Λᵀ + Σ_ε` for a diagonal factor variance `d`.
    pub fn implied_covariance(&self, factor_var: &DVector<f64>) -> DMatrix<f64> {
        let scaled = &self.loadings * DMatrix::from_diagonal(factor_var);
        let mut h = symmetrize(&(scaled * self.loadings.transpose()));
        for i in 0..h.nrows() {
            h[(i, i)] += self.idio_var[i];
        }
        h
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct EmOptions {
    pub max_iter: usize,
    /// Relative log-likelihood change at which EM stops.
    pub tol: f64,
    /// Unused by the deterministic initialisation; kept for reproducibility records.
    pub seed: u64,
}

impl Default for EmOptions {
    fn default() -> Self {
        Self {
            max_iter: 2000,
            tol: 1e-8,
            seed: 0,
        }
    }
}

fn scaled_gram(loadings: &DMatrix<f64>, idio: &DVector<f64>) -> DMatrix<f64> {
    let p = loadings.nrows() as f64;
    let weighted = DMatrix::from_fn(loadings.nrows(), loadings.ncols(), |i, j| loadings[(i, j)] / idio[i]);
    symmetrize(&(loadings.transpose() * weighted / p))
}

/// `−½(log det Σ + tr(Σ⁻¹S))` with `Σ = ΛΛᵀ + diag(ψ)`, evaluated through the
/// Woodbury identity and the matrix determinant lemma. The `−(p/2)log 2π`
/// constant is omitted, so `Λ = 0, ψ = 1, S = I` gives `−p/2`.
pub fn factor_log_likelihood(
    loadings: &DMatrix<f64>,
    idio_var: &DVector<f64>,
    sample_cov: &DMatrix<f64>,
) -> Result<f64> {
    let (p, m) = loadings.shape();
    ensure!(
        idio_var.len() == p && sample_cov.nrows() == p,
        InvalidArgument,
        "dimension mismatch"
    );
    ensure!(
        idio_var.iter().all(|&v| v > 0.0),
        InvalidArgument,
        "idiosyncratic variances must be positive"
    );
    // B = Ψ^{-1} Λ, G = I + Λᵀ Ψ^{-1} Λ
    let b = DMatrix::from_fn(p, m, |i, j| loadings[(i, j)] / idio_var[i]);
    let mut g = loadings.transpose() * &b;
    for k in 0..m {
        g[(k, k)] += 1.0;
    }
    let g = symmetrize(&g);
    let chol = crate::linalg::cholesky(&g).map_err(|_| Error::Numerical("implied covariance is not PD".into()))?;
    let log_det = idio_var.iter().map(|v| v.ln()).sum::<f64>()
        + 2.0 * chol.l_dirty().diagonal().iter().map(|d| d.ln()).sum::<f64>();
    let trace_psi = (0..p).map(|i| sample_cov[(i, i)] / idio_var[i]).sum::<f64>();
    let sb = sample_cov * &b;
    let inner = b.transpose() * sb;
    let trace_corr = (chol.inverse() * inner).trace();
    Ok(-0.5 * (log_det + trace_psi - trace_corr))
}

/// Principal components of the sample correlation matrix, scaled back to the
/// covariance metric, as EM starting values.
fn initial_values(s: &DMatrix<f64>, m: usize) -> (DMatrix<f64>, DVector<f64>) {
    let p = s.nrows();
    let sd = DVector::from_fn(p, |i, _| s[(i, i)].max(f64::MIN_POSITIVE).sqrt());
    let corr = DMatrix::from_fn(p, p, |i, j| s[(i, j)] / (sd[i] * sd[j]));
    let (vals, vecs) = sym_eigen_desc(&corr);
    let loadings = DMatrix::from_fn(p, m, |i, j| vecs[(i, j)] * vals[j].max(0.0).sqrt() * sd[i]);
    let idio = DVector::from_fn(p, |i, _| {
        let var = s[(i, i)];
        let common: f64 = loadings.row(i).iter().map(|l| l * l).sum();
        (var - common).max(IDIO_FLOOR * var)
    });
    (loadings, idio)
}

/// Rotate so that `p⁻¹ΛᵀΣ_ε⁻¹Λ` is diagonal with decreasing entries; each
/// column's largest-magnitude entry is made positive.
fn to_ic3(loadings: &DMatrix<f64>, idio: &DVector<f64>) -> DMatrix<f64> {
    let (_, v) = sym_eigen_desc(&scaled_gram(loadings, idio));
    let mut rotated = loadings * v;
    for mut col in rotated.column_iter_mut() {
        let pivot = col
            .iter()
            .copied()
            .fold(0.0_f64, |acc, x| if x.abs() > acc.abs() { x } else { acc });
        if pivot < 0.0 {
            col.neg_mut();
        }
    }
    rotated
}

/// EM estimation of the Gaussian factor model; the result satisfies IC3.
pub fn fit_factor_model_em(values: &DMatrix<f64>, m: usize, opts: &EmOptions) -> Result<FactorFit> {
    let (t, p) = values.shape();
    ensure!(m >= 1, InvalidArgument, "need at least one factor");
    ensure!(m < p, InvalidArgument, "number of factors m={m} must be below p={p}");
    ensure!(t > m, InvalidArgument, "need T > m (T={t}, m={m})");

    let means = DVector::from_fn(p, |j, _| values.column(j).mean());
    let y = demeaned(values);
    let s = symmetrize(&(y.transpose() * &y / t as f64));
    let floor = DVector::from_fn(p, |i, _| IDIO_FLOOR * s[(i, i)]);
    ensure!(
        floor.iter().all(|&f| f > 0.0),
        Data,
        "panel has a constant column; factor analysis needs positive variances"
    );

    let (mut lambda, mut psi) = initial_values(&s, m);
    let mut trace = vec![factor_log_likelihood(&lambda, &psi, &s)?];
    let mut converged = false;

    for _ in 0..opts.max_iter {
        // E-step: beta = (I + ΛᵀΨ⁻¹Λ)⁻¹ ΛᵀΨ⁻¹ = Λᵀ Σ⁻¹
        let b = DMatrix::from_fn(p, m, |i, j| lambda[(i, j)] / psi[i]);
        let mut g = lambda.transpose() * &b;
        for k in 0..m {
            g[(k, k)] += 1.0;
        }
        let g_inv = spd_inverse(&g)?;
        let beta = &g_inv * b.transpose(); // m×p
        let s_beta_t = &s * beta.transpose(); // p×m
                                              // E[f fᵀ] averaged over t
        let eff = symmetrize(&(&g_inv + &beta * &s_beta_t));

        // M-step
        let new_lambda = &s_beta_t * spd_inverse(&eff)?;
        let new_psi = DVector::from_fn(p, |i, _| {
            let common: f64 = (0..m).map(|k| new_lambda[(i, k)] * s_beta_t[(i, k)]).sum();
            (s[(i, i)] - common).max(floor[i])
        });
        lambda = new_lambda;
        psi = new_psi;

        let ll = factor_log_likelihood(&lambda, &psi, &s)?;
        let prev = *trace.last().expect("trace is never empty");
        trace.push(ll);
        if ((ll - prev) / prev.abs().max(1e-300)).abs() < opts.tol {
            converged = true;
            break;
        }
    }

    let floor_active = psi.iter().zip(floor.iter()).any(|(v, f)| v <= f);
    let loadings = to_ic3(&lambda, &psi);
    Ok(FactorFit {
        loadings,
        idio_var: psi,
        factor_moment: DMatrix::identity(m, m),
        identification: Identification::IC3,
        loglik_trace: trace,
        means,
        converged,
        floor_active,
        tied_moments: false,
    })
}

/// Re-normalise an IC3 fit to IC2: `Λ ← Λ (p⁻¹ΛᵀΣ_ε⁻¹Λ)^{-1/2}`,
/// `M_f ← p⁻¹ΛᵀΣ_ε⁻¹Λ`, Σ_ε unchanged.
pub fn rotate_ic3_to_ic2(fit: &FactorFit) -> Result<FactorFit> {
    let gram = fit.scaled_gram();
    let inv_sqrt = sym_inv_sqrt(&gram).map_err(|_| Error::Numerical("p⁻¹ΛᵀΣ_ε⁻¹Λ is not positive definite".into()))?;
    let loadings = &fit.loadings * inv_sqrt;
    let diag: Vec<f64> = gram.diagonal().iter().copied().collect();
    let tied = diag.iter().enumerate().any(|(i, a)| {
        diag[i + 1..]
            .iter()
            .any(|b| (a - b).abs() <= 1e-12 * a.abs().max(b.abs()))
    });
    Ok(FactorFit {
        loadings,
        idio_var: fit.idio_var.clone(),
        factor_moment: gram,
        identification: Identification::IC2,
        loglik_trace: fit.loglik_trace.clone(),
        means: fit.means.clone(),
        converged: fit.converged,
        floor_active: fit.floor_active,
        tied_moments: tied,
    })
}

/// T×m matrix of GLS factor estimates.
#[derive(Debug, Clone, PartialEq)]
pub struct FactorSeries {
    pub values: DMatrix<f64>,
}

/// m×p GLS projection `(ΛᵀΣ_ε⁻¹Λ)⁻¹ΛᵀΣ_ε⁻¹`.
pub fn gls_projection(fit: &FactorFit) -> Result<DMatrix<f64>> {
    let (p, m) = fit.loadings.shape();
    let weighted = DMatrix::from_fn(p, m, |i, j| fit.loadings[(i, j)] / fit.idio_var[i]);
    let gram = symmetrize(&(fit.loadings.transpose() * &weighted));
    let inv = spd_inverse(&gram).map_err(|_| Error::Numerical("ΛᵀΣ_ε⁻¹Λ is singular".into()))?;
    Ok(inv * weighted.transpose())
}

/// `f̂_t = (ΛᵀΣ_ε⁻¹Λ)⁻¹ΛᵀΣ_ε⁻¹(y_t − ȳ)` using the fit's stored means.
pub fn gls_factor_scores(fit: &FactorFit, values: &DMatrix<f64>) -> Result<FactorSeries> {
    ensure!(
        values.ncols() == fit.n_assets(),
        InvalidArgument,
        "panel has {} assets, fit has {}",
        values.ncols(),
        fit.n_assets()
    );
    let proj = gls_projection(fit)?;
    let mut y = values.clone();
    for (j, mut col) in y.column_iter_mut().enumerate() {
        col.add_scalar_mut(-fit.means[j]);
    }
    Ok(FactorSeries {
        values: y * proj.transpose(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use nalgebra::{dmatrix, dvector};

    fn fit_from(loadings: DMatrix<f64>, idio: DVector<f64>) -> FactorFit {
        let (p, m) = loadings.shape();
        FactorFit {
            loadings,
            idio_var: idio,
            factor_moment: DMatrix::identity(m, m),
            identification: Identification::IC3,
            loglik_trace: vec![],
            means: DVector::zeros(p),
            converged: true,
            floor_active: false,
            tied_moments: false,
        }
    }

    #[test]
    fn loglik_plug_in() {
        let p = 6;
        let ll = factor_log_likelihood(
            &DMatrix::zeros(p, 1),
            &DVector::from_element(p, 1.0),
            &DMatrix::identity(p, p),
        )
        .unwrap();
        assert!((ll + p as f64 / 2.0).abs() < 1e-14);
    }

    #[test]
    fn rotation_examples() {
        let fit = fit_from(dmatrix![2.0; 0.0], dvector![1.0, 1.0]);
        let ic2 = rotate_ic3_to_ic2(&fit).unwrap();
        assert!((ic2.loadings[(0, 0)] - 2f64.sqrt()).abs() < 1e-14);
        assert_eq!(ic2.loadings[(1, 0)], 0.0);
        assert!((ic2.factor_moment[(0, 0)] - 2.0).abs() < 1e-14);

        // already normalised: p⁻¹ΛᵀΛ = I with p = 2
        let s = 2f64.sqrt();
        let fit = fit_from(dmatrix![s, 0.0; 0.0, s], dvector![1.0, 1.0]);
        let ic2 = rotate_ic3_to_ic2(&fit).unwrap();
        assert!((&ic2.loadings - &fit.loadings).amax() < 1e-14);
        assert!((&ic2.factor_moment - DMatrix::identity(2, 2)).amax() < 1e-14);
    }

    #[test]
    fn gls_reduces_to_projection() {
        // orthonormal columns, unit idio variance
        let l = dmatrix![0.6, 0.0; 0.8, 0.0; 0.0, 1.0];
        let fit = fit_from(l.clone(), DVector::from_element(3, 1.0));
        let y = dmatrix![1.0, 2.0, 3.0; -1.0, 0.5, 0.25];
        let f = gls_factor_scores(&fit, &y).unwrap().values;
        let expected = &y * &l;
        assert!((f - expected).amax() < 1e-14);
    }

    #[test]
    fn gls_noiseless_recovery() {
        let l = dmatrix![1.0, 0.2; -0.5, 1.0; 0.3, 0.3; 2.0, -1.0];
        let fit = fit_from(l.clone(), dvector![0.5, 2.0, 0.1, 3.0]);
        let g = dmatrix![0.7, -1.3; 2.0, 0.1];
        let y = &g * l.transpose();
        let f = gls_factor_scores(&fit, &y).unwrap().values;
        assert!((f - g).amax() < 1e-12);
    }

    #[test]
    fn m_must_be_below_p() {
        let y = DMatrix::from_fn(20, 2, |i, j| (i * (j + 1)) as f64);
        assert!(fit_factor_model_em(&y, 2, &EmOptions::default()).is_err());
    }
}
