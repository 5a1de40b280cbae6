use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::optim::{from_pair, minimize_multistart, to_pair, START_PAIRS};
use super::univariate::{fit_garch11, Garch11Params};
use super::LikelihoodMode;
use crate::data_io::{Artifact, CovPath};
use crate::error::{ensure, Result};
use crate::forecaster::{rolling_path, RollingForecaster};
use crate::linalg::{min_eigenvalue, symmetrize};

const TARGET_SHRINK: f64 = 1e-6;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DccFit {
    pub marginals: Vec<Garch11Params>,
    pub a: f64,
    pub b: f64,
    #[serde(with = "crate::serde_mat")]
    pub q_bar: DMatrix<f64>,
    pub mode: LikelihoodMode,
    pub loglik: f64,
    pub converged: bool,
    /// The correlation target needed shrinkage towards the identity.
    pub target_shrunk: bool,
}

impl Artifact for DccFit {
    const SCHEMA: &'static str = "dcc";
    const VERSION: u32 = 1;
}

/// T×p devolatilised returns `z_{t,i} = y_{t,i}/√h_{t,i}`.
fn standardized(values: &DMatrix<f64>, marginals: &[Garch11Params]) -> DMatrix<f64> {
    let mut z = values.clone();
    for (i, mut col) in z.column_iter_mut().enumerate() {
        let y: Vec<f64> = col.iter().copied().collect();
        let h = marginals[i].variances(&y);
        for (t, v) in col.iter_mut().enumerate() {
            *v /= h[t].sqrt();
        }
    }
    z
}

/// Unit-diagonal `(1/T)Σ z_t z_tᵀ`, shrunk towards I until positive definite.
fn correlation_target(z: &DMatrix<f64>) -> (DMatrix<f64>, bool) {
    let t = z.nrows() as f64;
    let s = symmetrize(&(z.transpose() * z / t));
    let d = s.diagonal().map(|v| 1.0 / v.sqrt());
    let mut q = DMatrix::from_fn(s.nrows(), s.ncols(), |i, j| s[(i, j)] * d[i] * d[j]);
    q.fill_diagonal(1.0);
    let mut shrunk = false;
    let mut w = TARGET_SHRINK;
    while min_eigenvalue(&q) <= 0.0 && w <= 1.0 {
        let id = DMatrix::<f64>::identity(q.nrows(), q.ncols());
        q = &q * (1.0 - w) + id * w;
        shrunk = true;
        w *= 10.0;
    }
    (q, shrunk)
}

fn correlation_of(q: &DMatrix<f64>) -> DMatrix<f64> {
    let d = q.diagonal().map(|v| 1.0 / v.sqrt());
    let mut r = DMatrix::from_fn(q.nrows(), q.ncols(), |i, j| q[(i, j)] * d[i] * d[j]);
    r.fill_diagonal(1.0);
    r
}

/// Correlation part of the Gaussian log-likelihood over the selected index sets.
fn correlation_loglik(z: &DMatrix<f64>, q_bar: &DMatrix<f64>, a: f64, b: f64, blocks: &[Vec<usize>]) -> f64 {
    blocks
        .par_iter()
        .map(|idx| {
            let k = idx.len();
            let qb = DMatrix::from_fn(k, k, |i, j| q_bar[(idx[i], idx[j])]);
            let mut q = qb.clone();
            let mut ll = 0.0;
            for t in 0..z.nrows() {
                let zt = DVector::from_fn(k, |i, _| z[(t, idx[i])]);
                let r = correlation_of(&q);
                let Some(chol) = r.cholesky() else {
                    return f64::NEG_INFINITY;
                };
                let logdet = 2.0 * chol.l_dirty().diagonal().iter().map(|d| d.ln()).sum::<f64>();
                let quad = zt.dot(&chol.solve(&zt));
                ll -= 0.5 * (logdet + quad - zt.dot(&zt));
                q = &qb * (1.0 - a - b) + &zt * zt.transpose() * a + &q * b;
            }
            ll
        })
        .sum()
}

pub(crate) fn likelihood_blocks(p: usize, mode: LikelihoodMode) -> Vec<Vec<usize>> {
    match mode {
        LikelihoodMode::Full => vec![(0..p).collect()],
        LikelihoodMode::Composite => (0..p.saturating_sub(1)).map(|i| vec![i, i + 1]).collect(),
    }
}

/// Two-step QML: per-asset GARCH(1,1), then scalar DCC `(a, b)` with correlation targeting.
pub fn fit_dcc(values: &DMatrix<f64>, mode: LikelihoodMode) -> Result<DccFit> {
    let p = values.ncols();
    ensure!(p >= 2, InvalidArgument, "DCC needs at least two assets");
    let marginals = (0..p)
        .into_par_iter()
        .map(|i| fit_garch11(values.column(i).as_slice()).map(|f| f.params))
        .collect::<Result<Vec<_>>>()?;
    let z = standardized(values, &marginals);
    let (q_bar, target_shrunk) = correlation_target(&z);
    let blocks = likelihood_blocks(p, mode);
    let objective = |th: &[f64]| {
        let (a, b) = to_pair(th[0], th[1]);
        -correlation_loglik(&z, &q_bar, a, b, &blocks)
    };
    let starts: Vec<Vec<f64>> = START_PAIRS
        .iter()
        .map(|&(a, b)| {
            let (t1, t2) = from_pair(a, b);
            vec![t1, t2]
        })
        .collect();
    let (a, b, converged) = match minimize_multistart(&objective, &starts) {
        Some(m) => {
            let (a, b) = to_pair(m.x[0], m.x[1]);
            (a, b, m.converged)
        }
        None => (0.0, 0.0, false),
    };
    let loglik = correlation_loglik(&z, &q_bar, a, b, &blocks);
    Ok(DccFit {
        marginals,
        a,
        b,
        q_bar,
        mode,
        loglik,
        converged,
        target_shrunk,
    })
}

/// `H_t = D_t R_t D_t` fed one return at a time.
#[derive(Debug, Clone)]
pub struct DccForecaster {
    fit: DccFit,
    h: DVector<f64>,
    q: DMatrix<f64>,
}

impl DccForecaster {
    pub fn new(fit: &DccFit) -> Self {
        Self {
            h: DVector::from_iterator(fit.marginals.len(), fit.marginals.iter().map(|m| m.init_var)),
            q: fit.q_bar.clone(),
            fit: fit.clone(),
        }
    }

    pub fn correlation(&self) -> DMatrix<f64> {
        correlation_of(&self.q)
    }
}

impl RollingForecaster for DccForecaster {
    fn forecast(&self) -> DMatrix<f64> {
        let d = self.h.map(f64::sqrt);
        let r = self.correlation();
        DMatrix::from_fn(r.nrows(), r.ncols(), |i, j| d[i] * r[(i, j)] * d[j])
    }

    fn update(&mut self, y: &DVector<f64>) -> Result<()> {
        let z = y.component_div(&self.h.map(f64::sqrt));
        let (a, b) = (self.fit.a, self.fit.b);
        self.q = &self.fit.q_bar * (1.0 - a - b) + &z * z.transpose() * a + &self.q * b;
        for (i, m) in self.fit.marginals.iter().enumerate() {
            self.h[i] = m.next_var(y[i], self.h[i]);
        }
        Ok(())
    }
}

/// In-sample path `H_1..H_T` (each using returns before t only).
pub fn dcc_cov_path(fit: &DccFit, values: &DMatrix<f64>) -> Result<CovPath> {
    rolling_path(&mut DccForecaster::new(fit), values, 0)
}
