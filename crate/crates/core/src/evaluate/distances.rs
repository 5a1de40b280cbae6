use nalgebra::DMatrix;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::data_io::CovPath;
use crate::error::{ensure, Result};
use crate::linalg::symmetrize;

pub const DEFAULT_B: u32 = 3;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DistanceSet {
    pub d_e: f64,
    pub d_f: f64,
    /// `+∞` when Ĥ (or H) is singular.
    pub d_s: f64,
    pub d_b: f64,
    pub b: u32,
}

/// Euclidean (vech), Frobenius, Stein and asymmetric power-`b` distances.
pub fn distances(h: &DMatrix<f64>, h_hat: &DMatrix<f64>, b: u32) -> DistanceSet {
    let p = h.nrows();
    let diff = h - h_hat;
    let mut d_e = 0.0;
    for j in 0..p {
        for i in j..p {
            d_e += diff[(i, j)] * diff[(i, j)];
        }
    }
    let d_f = diff.norm_squared();
    DistanceSet {
        d_e,
        d_f,
        d_s: stein(h, h_hat),
        d_b: power_loss(h, h_hat, b),
        b,
    }
}

/// `Σ(μ_k − log μ_k − 1)` over eigenvalues of `L⁻¹HL⁻ᵀ`, `Ĥ = LLᵀ`.
fn stein(h: &DMatrix<f64>, h_hat: &DMatrix<f64>) -> f64 {
    let Some(chol) = h_hat.clone().cholesky() else {
        return f64::INFINITY;
    };
    let l = chol.l();
    let Some(x) = l.solve_lower_triangular(h) else {
        return f64::INFINITY;
    };
    let Some(y) = l.solve_lower_triangular(&x.transpose()) else {
        return f64::INFINITY;
    };
    let mu = symmetrize(&y).symmetric_eigenvalues();
    if mu.iter().any(|&v| v <= 0.0) {
        return f64::INFINITY;
    }
    mu.iter().map(|&v| v - v.ln() - 1.0).sum::<f64>().max(0.0)
}

fn power_loss(h: &DMatrix<f64>, h_hat: &DMatrix<f64>, b: u32) -> f64 {
    let bf = b as f64;
    let hb = h.pow(b);
    let hhat_bm1 = h_hat.pow(b - 1);
    let hhat_b = &hhat_bm1 * h_hat;
    (hb - hhat_b).trace() / (bf * (bf - 1.0)) - (hhat_bm1 * (h - h_hat)).trace() / (bf - 1.0)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DistanceSeries {
    pub d_e: Vec<f64>,
    pub d_f: Vec<f64>,
    pub d_s: Vec<f64>,
    pub d_b: Vec<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AverageDistances {
    pub d_e: f64,
    pub d_f: f64,
    /// Mean over finite values only.
    pub d_s: f64,
    pub d_b: f64,
    /// Dates where D_S was infinite and left out of its mean.
    pub d_s_excluded: usize,
}

pub fn distance_series(truth: &CovPath, est: &CovPath, b: u32) -> Result<DistanceSeries> {
    ensure!(
        truth.len() == est.len(),
        InvalidArgument,
        "paths differ in length ({} vs {})",
        truth.len(),
        est.len()
    );
    let sets: Vec<DistanceSet> = truth
        .matrices
        .par_iter()
        .zip(est.matrices.par_iter())
        .map(|(h, e)| distances(h, e, b))
        .collect();
    Ok(DistanceSeries {
        d_e: sets.iter().map(|s| s.d_e).collect(),
        d_f: sets.iter().map(|s| s.d_f).collect(),
        d_s: sets.iter().map(|s| s.d_s).collect(),
        d_b: sets.iter().map(|s| s.d_b).collect(),
    })
}

impl DistanceSeries {
    pub fn average(&self) -> AverageDistances {
        let mean = |v: &[f64]| v.iter().sum::<f64>() / v.len() as f64;
        let finite: Vec<f64> = self.d_s.iter().copied().filter(|v| v.is_finite()).collect();
        AverageDistances {
            d_e: mean(&self.d_e),
            d_f: mean(&self.d_f),
            d_s: if finite.is_empty() {
                f64::INFINITY
            } else {
                mean(&finite)
            },
            d_b: mean(&self.d_b),
            d_s_excluded: self.d_s.len() - finite.len(),
        }
    }
}

pub fn average_distances(truth: &CovPath, est: &CovPath, b: u32) -> Result<AverageDistances> {
    Ok(distance_series(truth, est, b)?.average())
}
