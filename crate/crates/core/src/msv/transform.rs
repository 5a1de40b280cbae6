use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{ensure, Result};

/// Ratio between the offset `c_i` and the sample mean of `f_i²`.
pub const OFFSET_RATIO: f64 = 1e-4;

/// `x_{i,t} = log(f²_{i,t} + c_i) − c_i/(f²_{i,t} + c_i)` together with its constants.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LogSqSeries {
    #[serde(with = "crate::serde_mat")]
    pub x: DMatrix<f64>,
    #[serde(with = "crate::serde_mat::dvec")]
    pub c: DVector<f64>,
    #[serde(with = "crate::serde_mat::dvec")]
    pub s_sq: DVector<f64>,
}

#[inline]
pub fn log_square(f: f64, c: f64) -> f64 {
    let v = f * f + c;
    v.ln() - c / v
}

pub fn log_square_transform(f: &DMatrix<f64>) -> Result<LogSqSeries> {
    let (t, m) = f.shape();
    ensure!(t >= 1, InvalidArgument, "empty factor series");
    let s_sq = DVector::from_fn(m, |j, _| f.column(j).iter().map(|v| v * v).sum::<f64>() / t as f64);
    ensure!(
        s_sq.iter().all(|&s| s > 0.0 && s.is_finite()),
        InvalidArgument,
        "factor column with zero (or non-finite) mean square"
    );
    let c = s_sq.map(|s| OFFSET_RATIO * s);
    let x = apply_log_square(f, &c);
    Ok(LogSqSeries { x, c, s_sq })
}

/// Transform with fixed offsets (used when filtering new data with a fitted model).
pub fn apply_log_square(f: &DMatrix<f64>, c: &DVector<f64>) -> DMatrix<f64> {
    DMatrix::from_fn(f.nrows(), f.ncols(), |t, j| log_square(f[(t, j)], c[j]))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn value_at_zero() {
        let v = log_square(0.0, 1e-4);
        assert!((v - ((1e-4f64).ln() - 1.0)).abs() < 1e-15);
        assert!((v + 10.2103).abs() < 1e-4);
    }

    #[test]
    fn correction_vanishes_at_unit_scale() {
        let v = log_square(1.0, 1e-4);
        let expected = 1.0001f64.ln() - 1e-4 / 1.0001;
        assert!((v - expected).abs() < 1e-18);
        assert!(v.abs() < 1e-8);
    }

    #[test]
    fn offsets_follow_mean_square() {
        let f = DMatrix::from_row_slice(4, 1, &[1.0, -1.0, 0.0, 2.0]);
        let s = log_square_transform(&f).unwrap();
        assert_eq!(s.s_sq[0], 1.5);
        assert_eq!(s.c[0], 1e-4 * 1.5);
        assert!(s.x.iter().all(|v| v.is_finite()));
        assert!(log_square_transform(&DMatrix::zeros(3, 1)).is_err());
    }
}
