//! One-step-ahead covariance forecasting with fixed parameters.

use nalgebra::{DMatrix, DVector};

use crate::data_io::CovPath;
use crate::error::{ensure, Result};
use crate::linalg::{clip_eigenvalues, min_eigenvalue, symmetrize};

/// A forecaster only sees returns through `update`, so `forecast` at step t
/// depends on rows `< t` alone.
pub trait RollingForecaster {
    /// Conditional covariance of the next, not yet observed, return.
    fn forecast(&self) -> DMatrix<f64>;
    fn update(&mut self, y: &DVector<f64>) -> Result<()>;
}

/// Symmetrise and clip negative eigenvalues to zero.
pub fn psd_guard(h: DMatrix<f64>) -> DMatrix<f64> {
    let h = symmetrize(&h);
    if min_eigenvalue(&h) >= 0.0 {
        h
    } else {
        clip_eigenvalues(&h, 0.0).0
    }
}

/// Feed every row of `values`; collect the forecasts made before rows `start..`.
pub fn rolling_path<F: RollingForecaster + ?Sized>(f: &mut F, values: &DMatrix<f64>, start: usize) -> Result<CovPath> {
    ensure!(
        start <= values.nrows(),
        InvalidArgument,
        "start {start} beyond {} rows",
        values.nrows()
    );
    let mut out = Vec::with_capacity(values.nrows() - start);
    for t in 0..values.nrows() {
        if t >= start {
            out.push(psd_guard(f.forecast()));
        }
        f.update(&values.row(t).transpose())?;
    }
    Ok(CovPath::new(out))
}

/// Forecaster returning a fixed matrix.
#[derive(Debug, Clone)]
pub struct Static(pub DMatrix<f64>);

impl RollingForecaster for Static {
    fn forecast(&self) -> DMatrix<f64> {
        self.0.clone()
    }

    fn update(&mut self, _: &DVector<f64>) -> Result<()> {
        Ok(())
    }
}

impl RollingForecaster for crate::msv::FmsvForecaster {
    fn forecast(&self) -> DMatrix<f64> {
        crate::msv::FmsvForecaster::forecast(self)
    }

    fn update(&mut self, y: &DVector<f64>) -> Result<()> {
        crate::msv::FmsvForecaster::update(self, y)
    }
}
