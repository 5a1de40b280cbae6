use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::data_io::CovPath;
use crate::error::{ensure, Error, Result};

pub const TRADING_DAYS: f64 = 252.0;
const NEWTON_MAX_ITER: usize = 200;
const COORD_MAX_SWEEPS: usize = 100_000;

/// Realized covariance proxy `(1−a)y_ty_tᵀ + (a/T*)Σ_{s=t−T*+1}^t y_sy_sᵀ` for `t = t_star..T`.
pub fn realized_proxy(values: &DMatrix<f64>, t_star: usize, a: f64) -> Result<CovPath> {
    let (t_len, p) = values.shape();
    ensure!(
        t_star >= 1 && t_star <= t_len,
        InvalidArgument,
        "t_star must lie in 1..=T"
    );
    ensure!(
        (0.0..=1.0).contains(&a),
        InvalidArgument,
        "proxy weight must lie in [0, 1]"
    );
    let outer = |t: usize| {
        let y = values.row(t).transpose();
        &y * y.transpose()
    };
    let mut window = DMatrix::zeros(p, p);
    for s in 0..t_star {
        window += outer(s);
    }
    let mut out = Vec::with_capacity(t_len - t_star);
    for t in t_star..t_len {
        window += outer(t);
        window -= outer(t - t_star);
        out.push(outer(t) * (1.0 - a) + &window * (a / t_star as f64));
    }
    Ok(CovPath::new(out))
}

/// `Ĥ⁻¹ι / ιᵀĤ⁻¹ι`.
pub fn gmvp_weights(h: &DMatrix<f64>) -> Result<DVector<f64>> {
    let p = h.nrows();
    let chol = h
        .clone()
        .cholesky()
        .ok_or_else(|| Error::Numerical("GMVP needs a positive definite covariance".into()))?;
    let x = chol.solve(&DVector::from_element(p, 1.0));
    Ok(&x / x.sum())
}

#[derive(Debug, Clone, PartialEq)]
pub struct RppSolution {
    pub weights: DVector<f64>,
    /// The damped Newton iteration failed and coordinate descent was used.
    pub fallback: bool,
}

/// Minimiser of `½wᵀĤw − cΣlog w_i`, normalised to sum to one.
pub fn rpp_weights(h: &DMatrix<f64>, c: f64, tol: f64) -> Result<RppSolution> {
    let p = h.nrows();
    ensure!(c > 0.0, InvalidArgument, "RPP budget c must be positive");
    ensure!(
        h.diagonal().iter().all(|&v| v > 0.0),
        Numerical,
        "RPP needs positive variances"
    );
    let objective = |w: &DVector<f64>| 0.5 * w.dot(&(h * w)) - c * w.iter().map(|v| v.ln()).sum::<f64>();

    let mut w = DVector::from_element(p, 1.0 / p as f64);
    let mut ok = false;
    for _ in 0..NEWTON_MAX_ITER {
        let hw = h * &w;
        let grad = &hw - w.map(|v| c / v);
        // w_i·grad_i is the deviation of the i-th risk contribution from c
        let deviation = w.component_mul(&grad).amax();
        if deviation <= tol * c {
            ok = true;
            break;
        }
        let mut hess = h.clone();
        for i in 0..p {
            hess[(i, i)] += c / (w[i] * w[i]);
        }
        let Some(chol) = hess.cholesky() else { break };
        let step = chol.solve(&grad);
        let f0 = objective(&w);
        let slope = grad.dot(&step);
        let mut t = 1.0;
        let mut accepted = false;
        while t > 1e-12 {
            let cand = &w - &step * t;
            if cand.iter().all(|&v| v > 0.0) && objective(&cand) <= f0 - 1e-4 * t * slope {
                w = cand;
                accepted = true;
                break;
            }
            t *= 0.5;
        }
        if !accepted {
            // no further decrease representable: accept if already stationary
            ok = deviation <= 1e-8 * c;
            break;
        }
    }
    let fallback = !ok;
    if fallback {
        w = DVector::from_element(p, 1.0 / p as f64);
        let mut converged = false;
        for _ in 0..COORD_MAX_SWEEPS {
            let mut change: f64 = 0.0;
            for i in 0..p {
                let b = (h.row(i) * &w)[0] - h[(i, i)] * w[i];
                let hi = h[(i, i)];
                let new = (-b + (b * b + 4.0 * hi * c).sqrt()) / (2.0 * hi);
                change = change.max((new - w[i]).abs() / new);
                w[i] = new;
            }
            if change < tol {
                converged = true;
                break;
            }
        }
        ensure!(converged, Numerical, "RPP coordinate descent did not converge");
    }
    let sum = w.sum();
    Ok(RppSolution {
        weights: w / sum,
        fallback,
    })
}

/// Risk contributions `w_i (Ĥw)_i`.
pub fn risk_contributions(h: &DMatrix<f64>, w: &DVector<f64>) -> DVector<f64> {
    w.component_mul(&(h * w))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PortfolioResult {
    #[serde(with = "crate::serde_mat")]
    pub weights: DMatrix<f64>,
    pub returns: Vec<f64>,
    pub avg: f64,
    pub sd: f64,
    /// `None` when SD is zero.
    pub ir: Option<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PortfolioMetrics {
    pub avg: f64,
    pub sd: f64,
    pub ir: Option<f64>,
}

/// Annualised mean (×252), standard deviation (×√252, divisor n−1) and their ratio.
pub fn annualized_metrics(returns: &[f64]) -> Result<PortfolioMetrics> {
    let n = returns.len();
    ensure!(n >= 2, InvalidArgument, "need at least two portfolio returns");
    let mean = returns.iter().sum::<f64>() / n as f64;
    let var = returns.iter().map(|r| (r - mean).powi(2)).sum::<f64>() / (n - 1) as f64;
    let avg = TRADING_DAYS * mean;
    let sd = TRADING_DAYS.sqrt() * var.sqrt();
    Ok(PortfolioMetrics {
        avg,
        sd,
        ir: (sd > 0.0).then(|| avg / sd),
    })
}

/// Row t of `weights` is applied to row t of `values` (weights built before t).
pub fn portfolio_metrics(weights: &DMatrix<f64>, values: &DMatrix<f64>) -> Result<PortfolioResult> {
    ensure!(
        weights.shape() == values.shape(),
        InvalidArgument,
        "weights {:?} and returns {:?} are misaligned",
        weights.shape(),
        values.shape()
    );
    let returns: Vec<f64> = (0..values.nrows())
        .map(|t| weights.row(t).dot(&values.row(t)))
        .collect();
    let m = annualized_metrics(&returns)?;
    Ok(PortfolioResult {
        weights: weights.clone(),
        returns,
        avg: m.avg,
        sd: m.sd,
        ir: m.ir,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PortfolioKind {
    Gmvp,
    Rpp,
}

/// Weights for every forecast in `path`, one row per date.
pub fn weight_path(path: &CovPath, kind: PortfolioKind) -> Result<DMatrix<f64>> {
    let p = path.dim();
    let mut w = DMatrix::zeros(path.len(), p);
    for (t, h) in path.matrices.iter().enumerate() {
        let row = match kind {
            PortfolioKind::Gmvp => gmvp_weights(h)?,
            PortfolioKind::Rpp => rpp_weights(h, 1.0, 1e-10)?.weights,
        };
        w.set_row(t, &row.transpose());
    }
    Ok(w)
}
