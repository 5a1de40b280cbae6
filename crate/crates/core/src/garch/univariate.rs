use nalgebra::DVector;
use serde::{Deserialize, Serialize};

use super::optim::{from_pair, minimize_multistart, to_pair, PERSISTENCE_CAP, START_PAIRS};
use crate::error::{ensure, Result};

const LN_2PI: f64 = 1.837_877_066_409_345_5;
pub const MIN_OBS: usize = 50;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Garch11Params {
    pub omega: f64,
    pub alpha: f64,
    pub beta: f64,
    pub uncond_var: f64,
    /// Variance used for the first observation.
    pub init_var: f64,
}

impl Garch11Params {
    pub fn new(omega: f64, alpha: f64, beta: f64, init_var: f64) -> Self {
        let persistence = alpha + beta;
        let uncond_var = if persistence < 1.0 {
            omega / (1.0 - persistence)
        } else {
            f64::INFINITY
        };
        Self {
            omega,
            alpha,
            beta,
            uncond_var,
            init_var,
        }
    }

    #[inline]
    pub fn next_var(&self, y: f64, h: f64) -> f64 {
        self.omega + self.alpha * y * y + self.beta * h
    }

    /// `h_1, …, h_{T+1}`; the last entry is the first out-of-sample variance.
    pub fn variances(&self, y: &[f64]) -> Vec<f64> {
        let mut h = Vec::with_capacity(y.len() + 1);
        h.push(self.init_var);
        for (t, &v) in y.iter().enumerate() {
            h.push(self.next_var(v, h[t]));
        }
        h
    }

    /// Gaussian quasi log-likelihood.
    pub fn log_likelihood(&self, y: &[f64]) -> f64 {
        let mut h = self.init_var;
        let mut ll = 0.0;
        for &v in y {
            if !(h > 0.0) {
                return f64::NEG_INFINITY;
            }
            ll -= 0.5 * (LN_2PI + h.ln() + v * v / h);
            h = self.next_var(v, h);
        }
        ll
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Garch11Fit {
    pub params: Garch11Params,
    pub loglik: f64,
    pub converged: bool,
    /// The simplex search failed and a variance-targeted grid was used.
    pub grid_fallback: bool,
}

pub(crate) fn sample_variance(y: &[f64]) -> f64 {
    let n = y.len() as f64;
    let mean = y.iter().sum::<f64>() / n;
    y.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n
}

fn unpack(theta: &[f64], h1: f64) -> Garch11Params {
    let (a, b) = to_pair(theta[1], theta[2]);
    Garch11Params::new(theta[0].exp(), a, b, h1)
}

/// Gaussian QML of a zero-mean GARCH(1,1) with `h_1` equal to the sample variance.
pub fn fit_garch11(y: &[f64]) -> Result<Garch11Fit> {
    ensure!(
        y.len() >= MIN_OBS,
        InvalidArgument,
        "GARCH needs at least {MIN_OBS} observations, got {}",
        y.len()
    );
    ensure!(
        y.iter().all(|v| v.is_finite()),
        Data,
        "non-finite return in GARCH input"
    );
    let var = sample_variance(y);
    ensure!(var > 0.0, Data, "GARCH input has zero variance");

    let objective = |theta: &[f64]| -unpack(theta, var).log_likelihood(y);
    let starts: Vec<Vec<f64>> = START_PAIRS
        .iter()
        .map(|&(a, b)| {
            let (t1, t2) = from_pair(a, b);
            vec![(var * (1.0 - a - b)).ln(), t1, t2]
        })
        .collect();

    let baseline = Garch11Params::new(var, 0.0, 0.0, var);
    let baseline_ll = baseline.log_likelihood(y);

    let (params, converged, grid_fallback) = match minimize_multistart(&objective, &starts) {
        Some(m) => (unpack(&m.x, var), m.converged, false),
        None => (grid_search(y, var), false, true),
    };
    let ll = params.log_likelihood(y);
    let (params, loglik) = if ll >= baseline_ll {
        (params, ll)
    } else {
        (baseline, baseline_ll)
    };
    Ok(Garch11Fit {
        params,
        loglik,
        converged,
        grid_fallback,
    })
}

fn grid_search(y: &[f64], var: f64) -> Garch11Params {
    let mut best = Garch11Params::new(var, 0.0, 0.0, var);
    let mut best_ll = best.log_likelihood(y);
    for i in 0..=20 {
        for j in 0..=49 {
            let (a, b) = (0.01 * i as f64, 0.02 * j as f64);
            if a + b > PERSISTENCE_CAP {
                continue;
            }
            let cand = Garch11Params::new(var * (1.0 - a - b), a, b, var);
            let ll = cand.log_likelihood(y);
            if ll > best_ll {
                best = cand;
                best_ll = ll;
            }
        }
    }
    best
}

/// Simulated zero-mean GARCH(1,1) path driven by the given innovations.
pub fn simulate_garch11(params: &Garch11Params, z: &DVector<f64>) -> (Vec<f64>, Vec<f64>) {
    let mut h = params.init_var;
    let mut y = Vec::with_capacity(z.len());
    let mut hs = Vec::with_capacity(z.len());
    for &e in z.iter() {
        let v = h.sqrt() * e;
        y.push(v);
        hs.push(h);
        h = params.next_var(v, h);
    }
    (y, hs)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn variance_recursion() {
        let p = Garch11Params::new(0.1, 0.2, 0.5, 1.0);
        let h = p.variances(&[1.0, -2.0]);
        assert_eq!(h, vec![1.0, 0.1 + 0.2 + 0.5, 0.1 + 0.8 + 0.5 * 0.8]);
        assert!((p.uncond_var - 1.0 / 3.0).abs() < 1e-15);
    }

    #[test]
    fn optimum_beats_constant_start() {
        let y: Vec<f64> = (0..300)
            .map(|t| ((t * 37 % 101) as f64 / 50.0 - 1.0) * (1.0 + (t as f64 / 40.0).sin().abs()))
            .collect();
        let fit = fit_garch11(&y).unwrap();
        let var = sample_variance(&y);
        assert!(fit.loglik >= Garch11Params::new(var, 0.0, 0.0, var).log_likelihood(&y));
        assert!(fit.params.alpha + fit.params.beta <= PERSISTENCE_CAP + 1e-12);
    }

    #[test]
    fn rejects_short_series() {
        assert!(fit_garch11(&[1.0; 10]).is_err());
    }
}
