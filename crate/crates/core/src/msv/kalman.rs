//! Linear-Gaussian filtering and fixed-interval smoothing for
//! `x_t = ν* + α_t + ξ_t`, `α_{t+1} = d + Φα_t + η_t`.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{ensure, Error, Result};
use crate::linalg::{pinv_sym, symmetrize};

const PINV_TOL: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StateSpace {
    #[serde(with = "crate::serde_mat")]
    pub transition: DMatrix<f64>,
    #[serde(with = "crate::serde_mat")]
    pub state_noise: DMatrix<f64>,
    #[serde(with = "crate::serde_mat")]
    pub obs_noise: DMatrix<f64>,
    #[serde(with = "crate::serde_mat::dvec")]
    pub obs_intercept: DVector<f64>,
    #[serde(with = "crate::serde_mat::dvec")]
    pub state_intercept: DVector<f64>,
}

impl StateSpace {
    pub fn dim(&self) -> usize {
        self.transition.nrows()
    }

    fn validate(&self) -> Result<()> {
        let m = self.dim();
        ensure!(
            self.transition.shape() == (m, m)
                && self.state_noise.shape() == (m, m)
                && self.obs_noise.shape() == (m, m)
                && self.obs_intercept.len() == m
                && self.state_intercept.len() == m,
            InvalidArgument,
            "inconsistent state-space dimensions"
        );
        Ok(())
    }

    /// One-step state prediction from a filtered moment pair.
    pub fn predict(&self, a: &DVector<f64>, p: &DMatrix<f64>) -> (DVector<f64>, DMatrix<f64>) {
        let a_next = &self.state_intercept + &self.transition * a;
        let p_next = symmetrize(&(&self.transition * p * self.transition.transpose() + &self.state_noise));
        (a_next, p_next)
    }

    /// `(α̂_{T+l|T}, P_{T+l|T})` for `l = 1..=horizon`.
    pub fn forecast(
        &self,
        a_filt: &DVector<f64>,
        p_filt: &DMatrix<f64>,
        horizon: usize,
    ) -> Vec<(DVector<f64>, DMatrix<f64>)> {
        let mut out = Vec::with_capacity(horizon);
        let (mut a, mut p) = (a_filt.clone(), p_filt.clone());
        for _ in 0..horizon {
            (a, p) = self.predict(&a, &p);
            out.push((a.clone(), p.clone()));
        }
        out
    }
}

/// Predicted moments `(a_{t|t−1}, P_{t|t−1})`, advanced one observation at a time.
#[derive(Debug, Clone, PartialEq)]
pub struct KalmanState {
    pub a: DVector<f64>,
    pub p: DMatrix<f64>,
}

pub struct Filtered {
    pub a: DVector<f64>,
    pub p: DMatrix<f64>,
    pub loglik: f64,
}

impl KalmanState {
    /// Measurement update with `x_t`; leaves `self` at `t+1|t`.
    pub fn step(&mut self, ss: &StateSpace, x: &DVector<f64>) -> Result<Filtered> {
        let v = x - &ss.obs_intercept - &self.a;
        let f = symmetrize(&(&self.p + &ss.obs_noise));
        ensure!(
            f.iter().all(|z| z.is_finite()),
            Numerical,
            "non-finite innovation covariance"
        );
        let (f_inv, loglik) = match f.clone().cholesky() {
            Some(chol) => {
                let logdet = 2.0 * chol.l_dirty().diagonal().iter().map(|d| d.ln()).sum::<f64>();
                let inv = chol.inverse();
                let quad = v.dot(&(&inv * &v));
                let m = v.len() as f64;
                (inv, -0.5 * (m * (2.0 * std::f64::consts::PI).ln() + logdet + quad))
            }
            None => (pinv_sym(&f, PINV_TOL), f64::NAN),
        };
        let gain = &self.p * f_inv;
        let a_filt = &self.a + &gain * v;
        let p_filt = symmetrize(&(&self.p - &gain * &self.p));
        let (a_next, p_next) = ss.predict(&a_filt, &p_filt);
        self.a = a_next;
        self.p = p_next;
        Ok(Filtered {
            a: a_filt,
            p: p_filt,
            loglik,
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct KalmanOutput {
    /// Row t holds `a_{t|t−1}`.
    pub predicted: DMatrix<f64>,
    pub pred_var: Vec<DMatrix<f64>>,
    pub filtered: DMatrix<f64>,
    pub filtered_var: Vec<DMatrix<f64>>,
    pub smoothed: DMatrix<f64>,
    pub smoothed_var: Vec<DMatrix<f64>>,
    /// Moments of the first out-of-sample state `α_{T+1|T}`.
    pub next: KalmanState,
    /// Gaussian log-likelihood; NaN when an innovation covariance was singular.
    pub loglik: f64,
}

/// Run the filter over the rows of `x` starting from the prior `init`
/// (`a_{1|0}`, `P_{1|0}`), then the RTS smoother.
pub fn kalman_filter_smoother(ss: &StateSpace, x: &DMatrix<f64>, init: &KalmanState) -> Result<KalmanOutput> {
    ss.validate()?;
    let (t_len, m) = x.shape();
    ensure!(
        m == ss.dim(),
        InvalidArgument,
        "observations have {m} columns, state has {}",
        ss.dim()
    );
    ensure!(
        init.a.len() == m && init.p.shape() == (m, m),
        InvalidArgument,
        "initial state has wrong dimension"
    );

    let mut state = init.clone();
    let mut predicted = DMatrix::zeros(t_len, m);
    let mut filtered = DMatrix::zeros(t_len, m);
    let mut pred_var = Vec::with_capacity(t_len);
    let mut filtered_var = Vec::with_capacity(t_len);
    let mut loglik = 0.0;
    for t in 0..t_len {
        predicted.set_row(t, &state.a.transpose());
        pred_var.push(state.p.clone());
        let f = state.step(ss, &x.row(t).transpose())?;
        loglik += f.loglik;
        filtered.set_row(t, &f.a.transpose());
        filtered_var.push(f.p);
    }

    let mut smoothed = filtered.clone();
    let mut smoothed_var = filtered_var.clone();
    let phi_t = ss.transition.transpose();
    for t in (0..t_len.saturating_sub(1)).rev() {
        let p_next_inv = match pred_var[t + 1].clone().cholesky() {
            Some(c) => c.inverse(),
            None => pinv_sym(&pred_var[t + 1], PINV_TOL),
        };
        let j = &filtered_var[t] * &phi_t * p_next_inv;
        let da = smoothed.row(t + 1).transpose() - predicted.row(t + 1).transpose();
        let a_s = filtered.row(t).transpose() + &j * da;
        smoothed.set_row(t, &a_s.transpose());
        let dp = &smoothed_var[t + 1] - &pred_var[t + 1];
        smoothed_var[t] = symmetrize(&(&filtered_var[t] + &j * dp * j.transpose()));
    }
    if smoothed.iter().any(|v| !v.is_finite()) {
        return Err(Error::Numerical("Kalman smoother produced non-finite states".into()));
    }

    Ok(KalmanOutput {
        predicted,
        pred_var,
        filtered,
        filtered_var,
        smoothed,
        smoothed_var,
        next: state,
        loglik,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use nalgebra::{dmatrix, dvector};

    fn scalar_ss(phi: f64, q: f64, r: f64, nu: f64) -> StateSpace {
        StateSpace {
            transition: dmatrix![phi],
            state_noise: dmatrix![q],
            obs_noise: dmatrix![r],
            obs_intercept: dvector![nu],
            state_intercept: dvector![0.0],
        }
    }

    #[test]
    fn noiseless_identity_recovers_observations() {
        let ss = StateSpace {
            transition: DMatrix::identity(2, 2),
            state_noise: DMatrix::zeros(2, 2),
            obs_noise: DMatrix::zeros(2, 2),
            obs_intercept: dvector![1.0, -1.0],
            state_intercept: dvector![0.0, 0.0],
        };
        let x = dmatrix![1.5, 0.0; 1.5, 0.0; 1.5, 0.0];
        let init = KalmanState {
            a: DVector::zeros(2),
            p: DMatrix::identity(2, 2) * 1e7,
        };
        let out = kalman_filter_smoother(&ss, &x, &init).unwrap();
        for t in 0..3 {
            assert!((out.filtered[(t, 0)] - 0.5).abs() < 1e-12);
            assert!((out.filtered[(t, 1)] - 1.0).abs() < 1e-12);
        }

        // exact observations with a moving state
        let ss = StateSpace {
            state_noise: DMatrix::identity(2, 2),
            ..ss
        };
        let x = dmatrix![1.5, 0.0; 2.0, -3.0; 0.5, 4.0];
        let out = kalman_filter_smoother(&ss, &x, &init).unwrap();
        for t in 0..3 {
            assert!((out.filtered[(t, 0)] - (x[(t, 0)] - 1.0)).abs() < 1e-12);
            assert!((out.filtered[(t, 1)] - (x[(t, 1)] + 1.0)).abs() < 1e-12);
        }
    }

    #[test]
    fn local_level_matches_manual_recursion() {
        let (q, r) = (0.3, 1.2);
        let ss = scalar_ss(1.0, q, r, 0.0);
        let ys = [0.4, -0.3, 1.1, 0.8, 0.2];
        let x = DMatrix::from_column_slice(5, 1, &ys);
        let init = KalmanState {
            a: dvector![0.0],
            p: dmatrix![2.0],
        };
        let out = kalman_filter_smoother(&ss, &x, &init).unwrap();

        let (mut a, mut p) = (0.0f64, 2.0f64);
        let (mut af, mut pf, mut ap, mut pp) = (vec![], vec![], vec![], vec![]);
        for &y in &ys {
            ap.push(a);
            pp.push(p);
            let k = p / (p + r);
            let a1 = a + k * (y - a);
            let p1 = p - k * p;
            af.push(a1);
            pf.push(p1);
            a = a1;
            p = p1 + q;
        }
        let mut as_ = af.clone();
        let mut ps = pf.clone();
        for t in (0..4).rev() {
            let j = pf[t] / pp[t + 1];
            as_[t] = af[t] + j * (as_[t + 1] - ap[t + 1]);
            ps[t] = pf[t] + j * j * (ps[t + 1] - pp[t + 1]);
        }
        for t in 0..5 {
            assert!((out.filtered[(t, 0)] - af[t]).abs() < 1e-10);
            assert!((out.predicted[(t, 0)] - ap[t]).abs() < 1e-10);
            assert!((out.smoothed[(t, 0)] - as_[t]).abs() < 1e-10);
            assert!((out.smoothed_var[t][(0, 0)] - ps[t]).abs() < 1e-10);
            assert!(out.smoothed_var[t][(0, 0)] <= out.filtered_var[t][(0, 0)] + 1e-12);
        }
        assert!((out.next.a[0] - a).abs() < 1e-10);
    }
}
