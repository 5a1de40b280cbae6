use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::univariate::{fit_garch11, Garch11Params};
use crate::data_io::{Artifact, CovPath};
use crate::error::{ensure, Result};
use crate::forecaster::{rolling_path, RollingForecaster};
use crate::linalg::sym_eigen_desc;

/// PCA factor GARCH: `H_t = Λ diag(h_t) Λᵀ + Σ_ε` with orthonormal Λ.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FgarchFit {
    #[serde(with = "crate::serde_mat")]
    pub loadings: DMatrix<f64>,
    pub factor_garch: Vec<Garch11Params>,
    #[serde(with = "crate::serde_mat::dvec")]
    pub idio_var: DVector<f64>,
}

impl Artifact for FgarchFit {
    const SCHEMA: &'static str = "fgarch";
    const VERSION: u32 = 1;
}

/// Loadings are the leading eigenvectors of `YᵀY/T` (largest-magnitude entry
/// positive); factors are `YΛ`.
pub fn fit_fgarch(values: &DMatrix<f64>, m: usize) -> Result<FgarchFit> {
    let (t, p) = values.shape();
    ensure!(
        m >= 1 && m <= p,
        InvalidArgument,
        "fGARCH needs 1 <= m <= p (m={m}, p={p})"
    );
    let gram = values.transpose() * values / t as f64;
    let (_, vecs) = sym_eigen_desc(&gram);
    let mut loadings = vecs.columns(0, m).into_owned();
    for mut col in loadings.column_iter_mut() {
        let pivot = col
            .iter()
            .copied()
            .fold(0.0f64, |acc, v| if v.abs() > acc.abs() { v } else { acc });
        if pivot < 0.0 {
            col.neg_mut();
        }
    }
    let factors = values * &loadings;
    let factor_garch = (0..m)
        .into_par_iter()
        .map(|j| fit_garch11(factors.column(j).as_slice()).map(|f| f.params))
        .collect::<Result<Vec<_>>>()?;
    let resid = values - &factors * loadings.transpose();
    let idio_var = DVector::from_fn(p, |i, _| resid.column(i).norm_squared() / t as f64);
    Ok(FgarchFit {
        loadings,
        factor_garch,
        idio_var,
    })
}

#[derive(Debug, Clone)]
pub struct FgarchForecaster {
    fit: FgarchFit,
    h: DVector<f64>,
}

impl FgarchForecaster {
    pub fn new(fit: &FgarchFit) -> Self {
        Self {
            h: DVector::from_iterator(fit.factor_garch.len(), fit.factor_garch.iter().map(|g| g.init_var)),
            fit: fit.clone(),
        }
    }
}

impl RollingForecaster for FgarchForecaster {
    fn forecast(&self) -> DMatrix<f64> {
        let l = &self.fit.loadings;
        let scaled = DMatrix::from_fn(l.nrows(), l.ncols(), |i, j| l[(i, j)] * self.h[j]);
        let mut h = scaled * l.transpose();
        for i in 0..h.nrows() {
            h[(i, i)] += self.fit.idio_var[i];
        }
        h
    }

    fn update(&mut self, y: &DVector<f64>) -> Result<()> {
        let f = self.fit.loadings.transpose() * y;
        for (j, g) in self.fit.factor_garch.iter().enumerate() {
            self.h[j] = g.next_var(f[j], self.h[j]);
        }
        Ok(())
    }
}

pub fn fgarch_cov_path(fit: &FgarchFit, values: &DMatrix<f64>) -> Result<CovPath> {
    rolling_path(&mut FgarchForecaster::new(fit), values, 0)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn loadings_orthonormal() {
        let y = DMatrix::from_fn(200, 4, |i, j| {
            ((i * (j + 3) * 97) % 89) as f64 / 89.0 - 0.5 + 0.3 * ((i % 13) as f64 / 13.0)
        });
        let fit = fit_fgarch(&y, 2).unwrap();
        let g = fit.loadings.transpose() * &fit.loadings;
        assert!((g - DMatrix::<f64>::identity(2, 2)).amax() < 1e-10);
        assert!(fit.idio_var.iter().all(|&v| v >= 0.0));
    }
}
