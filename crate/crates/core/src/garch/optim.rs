use argmin::core::{CostFunction, Error as ArgminError, Executor, State};
use argmin::solver::neldermead::NelderMead;

/// Penalty returned in place of non-finite objective values.
const BARRIER: f64 = 1e300;
const MAX_ITERS: u64 = 2000;
const SD_TOL: f64 = 1e-10;
const SIMPLEX_STEP: f64 = 0.25;

pub(crate) struct Minimum {
    pub x: Vec<f64>,
    pub value: f64,
    pub converged: bool,
}

struct Objective<'a, F>(&'a F);

impl<F: Fn(&[f64]) -> f64> CostFunction for Objective<'_, F> {
    type Param = Vec<f64>;
    type Output = f64;

    fn cost(&self, p: &Self::Param) -> Result<f64, ArgminError> {
        let v = (self.0)(p);
        Ok(if v.is_finite() { v } else { BARRIER })
    }
}

fn simplex(start: &[f64]) -> Vec<Vec<f64>> {
    let mut out = vec![start.to_vec()];
    for k in 0..start.len() {
        let mut v = start.to_vec();
        v[k] += SIMPLEX_STEP;
        out.push(v);
    }
    out
}

fn run<F: Fn(&[f64]) -> f64>(f: &F, start: &[f64]) -> Option<Minimum> {
    let solver = NelderMead::new(simplex(start)).with_sd_tolerance(SD_TOL).ok()?;
    let res = Executor::new(Objective(f), solver)
        .configure(|s| s.max_iters(MAX_ITERS))
        .run()
        .ok()?;
    let state = res.state();
    let x = state.get_best_param()?.clone();
    let value = state.get_best_cost();
    let converged = state.get_iter() < MAX_ITERS;
    (value < BARRIER).then_some(Minimum { x, value, converged })
}

/// Nelder–Mead from each start; returns the best finite minimum.
pub(crate) fn minimize_multistart<F: Fn(&[f64]) -> f64>(f: &F, starts: &[Vec<f64>]) -> Option<Minimum> {
    starts
        .iter()
        .filter_map(|s| run(f, s))
        .min_by(|a, b| a.value.total_cmp(&b.value))
}

pub(crate) fn logistic(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

pub(crate) fn logit(p: f64) -> f64 {
    (p / (1.0 - p)).ln()
}

/// Persistence cap shared by all (α, β)-type pairs.
pub const PERSISTENCE_CAP: f64 = 1.0 - 1e-4;

/// Unconstrained `(θ₁, θ₂)` ↦ `(α, β)` with `α, β ≥ 0`, `α + β ≤ PERSISTENCE_CAP`.
pub(crate) fn to_pair(t1: f64, t2: f64) -> (f64, f64) {
    let s = PERSISTENCE_CAP * logistic(t1);
    let a = s * logistic(t2);
    (a, s - a)
}

pub(crate) fn from_pair(a: f64, b: f64) -> (f64, f64) {
    let s = a + b;
    (logit(s / PERSISTENCE_CAP), logit(a / s))
}

/// Default multi-start pairs for (α, β)-type parameters.
pub const START_PAIRS: [(f64, f64); 3] = [(0.05, 0.90), (0.02, 0.95), (0.10, 0.85)];

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn quadratic_bowl() {
        let f = |x: &[f64]| (x[0] - 1.0).powi(2) + 3.0 * (x[1] + 2.0).powi(2);
        let m = minimize_multistart(&f, &[vec![0.0, 0.0]]).unwrap();
        assert!((m.x[0] - 1.0).abs() < 1e-4 && (m.x[1] + 2.0).abs() < 1e-4);
    }

    #[test]
    fn pair_transform_roundtrip() {
        for &(a, b) in &START_PAIRS {
            let (t1, t2) = from_pair(a, b);
            let (a2, b2) = to_pair(t1, t2);
            assert!((a - a2).abs() < 1e-12 && (b - b2).abs() < 1e-12);
        }
    }
}
