use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::dcc::likelihood_blocks;
use super::optim::{from_pair, minimize_multistart, to_pair, START_PAIRS};
use super::LikelihoodMode;
use crate::baselines::sample_covariance;
use crate::data_io::{Artifact, CovPath};
use crate::error::{ensure, Result};
use crate::forecaster::{rolling_path, RollingForecaster};

const LN_2PI: f64 = 1.837_877_066_409_345_5;

/// Scalar BEKK(1,1) with variance targeting:
/// `H_t = (1−a²−b²)Ŝ + a²y_{t−1}y_{t−1}ᵀ + b²H_{t−1}`, `H_1 = Ŝ`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BekkFit {
    pub a: f64,
    pub b: f64,
    #[serde(with = "crate::serde_mat")]
    pub s_hat: DMatrix<f64>,
    pub mode: LikelihoodMode,
    pub loglik: f64,
    pub converged: bool,
}

impl Artifact for BekkFit {
    const SCHEMA: &'static str = "sbekk";
    const VERSION: u32 = 1;
}

fn bekk_loglik(values: &DMatrix<f64>, s_hat: &DMatrix<f64>, a2: f64, b2: f64, blocks: &[Vec<usize>]) -> f64 {
    blocks
        .par_iter()
        .map(|idx| {
            let k = idx.len();
            let s = DMatrix::from_fn(k, k, |i, j| s_hat[(idx[i], idx[j])]);
            let base = &s * (1.0 - a2 - b2);
            let mut h = s;
            let mut ll = 0.0;
            for t in 0..values.nrows() {
                let y = DVector::from_fn(k, |i, _| values[(t, idx[i])]);
                let Some(chol) = h.clone().cholesky() else {
                    return f64::NEG_INFINITY;
                };
                let logdet = 2.0 * chol.l_dirty().diagonal().iter().map(|d| d.ln()).sum::<f64>();
                ll -= 0.5 * (k as f64 * LN_2PI + logdet + y.dot(&chol.solve(&y)));
                h = &base + &y * y.transpose() * a2 + &h * b2;
            }
            ll
        })
        .sum()
}

/// Gaussian QML over `(a², b²)` with `a² + b² ≤ 1 − 10⁻⁴`.
pub fn fit_sbekk(values: &DMatrix<f64>, mode: LikelihoodMode) -> Result<BekkFit> {
    let p = values.ncols();
    ensure!(
        p >= 2 || mode == LikelihoodMode::Full,
        InvalidArgument,
        "composite BEKK needs at least two assets"
    );
    let s_hat = sample_covariance(values)?.matrix;
    let blocks = likelihood_blocks(p, mode);
    let objective = |th: &[f64]| {
        let (a2, b2) = to_pair(th[0], th[1]);
        -bekk_loglik(values, &s_hat, a2, b2, &blocks)
    };
    let starts: Vec<Vec<f64>> = START_PAIRS
        .iter()
        .map(|&(a2, b2)| {
            let (t1, t2) = from_pair(a2, b2);
            vec![t1, t2]
        })
        .collect();
    let (a2, b2, converged) = match minimize_multistart(&objective, &starts) {
        Some(m) => {
            let (a2, b2) = to_pair(m.x[0], m.x[1]);
            (a2, b2, m.converged)
        }
        None => (0.0, 0.0, false),
    };
    let loglik = bekk_loglik(values, &s_hat, a2, b2, &blocks);
    Ok(BekkFit {
        a: a2.sqrt(),
        b: b2.sqrt(),
        s_hat,
        mode,
        loglik,
        converged,
    })
}

#[derive(Debug, Clone)]
pub struct BekkForecaster {
    base: DMatrix<f64>,
    a2: f64,
    b2: f64,
    h: DMatrix<f64>,
}

impl BekkForecaster {
    pub fn new(fit: &BekkFit) -> Self {
        let (a2, b2) = (fit.a * fit.a, fit.b * fit.b);
        Self {
            base: &fit.s_hat * (1.0 - a2 - b2),
            a2,
            b2,
            h: fit.s_hat.clone(),
        }
    }
}

impl RollingForecaster for BekkForecaster {
    fn forecast(&self) -> DMatrix<f64> {
        self.h.clone()
    }

    fn update(&mut self, y: &DVector<f64>) -> Result<()> {
        self.h = &self.base + y * y.transpose() * self.a2 + &self.h * self.b2;
        Ok(())
    }
}

pub fn sbekk_cov_path(fit: &BekkFit, values: &DMatrix<f64>) -> Result<CovPath> {
    rolling_path(&mut BekkForecaster::new(fit), values, 0)
}

#[cfg(test)]
mod tests {
    use super::*;
    use nalgebra::dmatrix;

    fn fit_with(a: f64, b: f64, s: DMatrix<f64>) -> BekkFit {
        BekkFit {
            a,
            b,
            s_hat: s,
            mode: LikelihoodMode::Full,
            loglik: 0.0,
            converged: true,
        }
    }

    #[test]
    fn three_step_recursion_oracle() {
        let s = dmatrix![1.0, 0.2; 0.2, 0.5];
        let y = dmatrix![0.3, -0.1; -0.4, 0.2; 0.1, 0.1];
        let (a, b) = (0.3f64, 0.9f64);
        let path = sbekk_cov_path(&fit_with(a, b, s.clone()), &y).unwrap();
        let mut h = s.clone();
        for t in 0..3 {
            assert!((&path.matrices[t] - &h).amax() < 1e-12);
            let yt = y.row(t).transpose();
            h = &s * (1.0 - a * a - b * b) + &yt * yt.transpose() * (a * a) + &h * (b * b);
        }
    }

    #[test]
    fn zero_parameters_are_static() {
        let s = dmatrix![1.0, 0.2; 0.2, 0.5];
        let y = dmatrix![0.3, -0.1; -0.4, 0.2];
        let path = sbekk_cov_path(&fit_with(0.0, 0.0, s.clone()), &y).unwrap();
        assert!(path.matrices.iter().all(|h| (h - &s).amax() < 1e-15));
    }

    #[test]
    fn bivariate_composite_equals_full() {
        let y = DMatrix::from_fn(80, 2, |i, j| (((i + 3) * (j + 5) * 31) % 17) as f64 / 17.0 - 0.5);
        let s = sample_covariance(&y).unwrap().matrix;
        let full = bekk_loglik(&y, &s, 0.05, 0.9, &likelihood_blocks(2, LikelihoodMode::Full));
        let comp = bekk_loglik(&y, &s, 0.05, 0.9, &likelihood_blocks(2, LikelihoodMode::Composite));
        assert_eq!(full, comp);
    }
}
