//! Static covariance baselines: sample covariance and one-parameter linear
//! shrinkage towards a scaled identity.

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::data_io::Artifact;
use crate::error::{ensure, Result};
use crate::linalg::symmetrize;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StaticMethod {
    Sample,
    Cov1Para,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StaticCov {
    #[serde(with = "crate::serde_mat")]
    pub matrix: DMatrix<f64>,
    pub method: StaticMethod,
    /// Shrinkage intensity δ* (Cov1Para only).
    pub intensity: Option<f64>,
}

impl Artifact for StaticCov {
    const SCHEMA: &'static str = "static_cov";
    const VERSION: u32 = 1;
}

/// Column-demeaned copy of a T×p data matrix.
pub(crate) fn demeaned(values: &DMatrix<f64>) -> DMatrix<f64> {
    let mut x = values.clone();
    for mut col in x.column_iter_mut() {
        let mean = col.mean();
        col.add_scalar_mut(-mean);
    }
    x
}

/// `(1/T) Σ (y_t − ȳ)(y_t − ȳ)ᵀ`.
pub fn sample_covariance(values: &DMatrix<f64>) -> Result<StaticCov> {
    let t = values.nrows();
    ensure!(t >= 2, InvalidArgument, "sample covariance needs T >= 2, got {t}");
    let x = demeaned(values);
    let s = symmetrize(&(x.transpose() * &x / t as f64));
    Ok(StaticCov {
        matrix: s,
        method: StaticMethod::Sample,
        intensity: None,
    })
}

/// Linear shrinkage `δ·(tr S/p)·I + (1−δ)·S` with the analytic intensity of
/// the constant-variance, zero-correlation target.
pub fn cov1para_shrinkage(values: &DMatrix<f64>) -> Result<StaticCov> {
    let (t, p) = values.shape();
    ensure!(t >= 2, InvalidArgument, "shrinkage needs T >= 2, got {t}");
    let x = demeaned(values);
    let tf = t as f64;
    let sample = symmetrize(&(x.transpose() * &x / tf));
    let mean_var = sample.trace() / p as f64;
    let prior = DMatrix::<f64>::identity(p, p) * mean_var;

    // pi-hat: sum of asymptotic variances of the sample covariance entries
    let y = x.map(|v| v * v);
    let phi_mat = y.transpose() * &y / tf - sample.map(|v| v * v);
    let phi: f64 = phi_mat.sum();
    // gamma-hat: squared Frobenius misalignment between sample and target
    let gamma = (&sample - &prior).norm_squared();

    let intensity = if gamma > 0.0 {
        (phi / gamma / tf).clamp(0.0, 1.0)
    } else {
        1.0
    };
    let matrix = symmetrize(&(&prior * intensity + &sample * (1.0 - intensity)));
    Ok(StaticCov {
        matrix,
        method: StaticMethod::Cov1Para,
        intensity: Some(intensity),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use nalgebra::dmatrix;

    #[test]
    fn two_observations_hand_arithmetic() {
        let y = dmatrix![0.0, 0.0; 2.0, 2.0];
        let s = sample_covariance(&y).unwrap();
        assert_eq!(s.matrix, DMatrix::from_element(2, 2, 1.0));
    }

    #[test]
    fn constant_column_gives_zero_row() {
        let y = dmatrix![1.0, 3.0; 2.0, 3.0; 4.0, 3.0];
        let s = sample_covariance(&y).unwrap().matrix;
        assert_eq!(s.row(1).iter().copied().collect::<Vec<_>>(), vec![0.0, 0.0]);
        assert_eq!(s[(0, 1)], 0.0);
    }

    #[test]
    fn matches_two_pass_oracle() {
        let y = DMatrix::from_fn(37, 4, |i, j| ((i * 7 + j * 13) % 11) as f64 * 0.3 - (j as f64).sin());
        let s = sample_covariance(&y).unwrap().matrix;
        let t = y.nrows() as f64;
        for a in 0..4 {
            for b in 0..4 {
                let ma: f64 = y.column(a).iter().sum::<f64>() / t;
                let mb: f64 = y.column(b).iter().sum::<f64>() / t;
                let mut acc = 0.0;
                for i in 0..y.nrows() {
                    acc += (y[(i, a)] - ma) * (y[(i, b)] - mb);
                }
                assert!((s[(a, b)] - acc / t).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn scaled_identity_sample_is_fixed_point() {
        // columns with equal variance and zero sample correlation
        let y = dmatrix![1.0, 1.0; -1.0, 1.0; 1.0, -1.0; -1.0, -1.0];
        let s = sample_covariance(&y).unwrap().matrix;
        let c = cov1para_shrinkage(&y).unwrap();
        assert!((c.matrix - &s).amax() < 1e-15);
        let d = c.intensity.unwrap();
        assert!((0.0..=1.0).contains(&d));
    }
}
