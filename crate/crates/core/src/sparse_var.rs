//! Penalised VAR(q) estimation: lagged designs, OLS pilots, adaptive LASSO by
//! cyclic coordinate descent, and out-of-sample cross-validation of the
//! tuning parameter.
//!
//! All estimators work equation by equation: the least-squares loss
//! `½Σ_t‖x_t − Ψ̲Z_{t−1}‖²` separates over the rows of `Ψ̲ = (ψ*, Ψ₁, …, Ψ_q)`,
//! and every equation shares the regressor Gram matrix.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{ensure, Result};
use crate::linalg::ConditionedGram;

/// Coordinate-descent sweep cap.
pub const MAX_SWEEPS: usize = 10_000;
/// KKT tolerance on the per-observation scale (gradient divided by T).
pub const KKT_TOL: f64 = 1e-7;

/// Responses `x_t` paired with regressors `Z_{q,t−1} = (1, x_{t−1}ᵀ, …, x_{t−q}ᵀ)`,
/// zero-filling lags before the sample start.
#[derive(Debug, Clone, PartialEq)]
pub struct LaggedDesign {
    pub responses: DMatrix<f64>,
    pub regressors: DMatrix<f64>,
    pub q: usize,
}

impl LaggedDesign {
    pub fn n_obs(&self) -> usize {
        self.responses.nrows()
    }

    pub fn n_vars(&self) -> usize {
        self.responses.ncols()
    }

    /// Rows `start..end` of both blocks.
    pub fn rows(&self, start: usize, end: usize) -> LaggedDesign {
        LaggedDesign {
            responses: self.responses.rows(start, end - start).into_owned(),
            regressors: self.regressors.rows(start, end - start).into_owned(),
            q: self.q,
        }
    }
}

pub fn build_lagged_design(x: &DMatrix<f64>, q: usize) -> Result<LaggedDesign> {
    let (t, m) = x.shape();
    ensure!(q >= 1, InvalidArgument, "lag order must be positive");
    ensure!(t >= q + 2, InvalidArgument, "need T >= q+2 (T={t}, q={q})");
    let d = 1 + q * m;
    let mut z = DMatrix::zeros(t, d);
    for row in 0..t {
        z[(row, 0)] = 1.0;
        for lag in 1..=q {
            if row >= lag {
                for j in 0..m {
                    z[(row, 1 + (lag - 1) * m + j)] = x[(row - lag, j)];
                }
            }
        }
    }
    Ok(LaggedDesign {
        responses: x.clone(),
        regressors: z,
        q,
    })
}

/// Stacked VAR coefficients `Ψ̲ = (ψ*, Ψ₁, …, Ψ_q)`, one row per equation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VarCoeffs {
    #[serde(with = "crate::serde_mat")]
    pub coefs: DMatrix<f64>,
    pub q: usize,
    pub penalized: bool,
    pub lambda: f64,
    pub converged: bool,
    /// Whether the regressor Gram matrix needed the ridge fallback.
    pub ridged: bool,
    /// Largest KKT violation over all equations (per-observation scale).
    pub kkt_residual: f64,
}

impl VarCoeffs {
    pub fn n_vars(&self) -> usize {
        self.coefs.nrows()
    }

    pub fn intercept(&self) -> DVector<f64> {
        self.coefs.column(0).into_owned()
    }

    /// Lag matrix Ψ_k for k in 1..=q.
    pub fn lag_mat(&self, k: usize) -> DMatrix<f64> {
        let m = self.n_vars();
        self.coefs.columns(1 + (k - 1) * m, m).into_owned()
    }

    /// Nonzero coefficients as `(equation, regressor)` pairs.
    pub fn support(&self) -> Vec<(usize, usize)> {
        let mut s = Vec::new();
        for i in 0..self.coefs.nrows() {
            for k in 0..self.coefs.ncols() {
                if self.coefs[(i, k)] != 0.0 {
                    s.push((i, k));
                }
            }
        }
        s
    }

    pub fn fitted(&self, design: &LaggedDesign) -> DMatrix<f64> {
        &design.regressors * self.coefs.transpose()
    }

    pub fn residuals(&self, design: &LaggedDesign) -> DMatrix<f64> {
        &design.responses - self.fitted(design)
    }

    /// `T⁻¹ Σ_t ½‖x_t − Ψ̲Z_{t−1}‖²` on the given design.
    pub fn mean_loss(&self, design: &LaggedDesign) -> f64 {
        0.5 * self.residuals(design).norm_squared() / design.n_obs() as f64
    }
}

/// Sufficient statistics of one design: conditioned Gram and `Zᵀx_j` per equation.
struct Normal {
    gram: ConditionedGram,
    rhs: Vec<DVector<f64>>,
    n: f64,
}

impl Normal {
    fn new(design: &LaggedDesign) -> Result<Self> {
        let z = &design.regressors;
        let gram = ConditionedGram::new(z.transpose() * z)?;
        let ztx = z.transpose() * &design.responses;
        let rhs = (0..ztx.ncols()).map(|j| ztx.column(j).into_owned()).collect();
        Ok(Self {
            gram,
            rhs,
            n: design.n_obs() as f64,
        })
    }
}

pub fn ols_var(design: &LaggedDesign) -> Result<VarCoeffs> {
    let normal = Normal::new(design)?;
    let m = design.n_vars();
    let d = design.regressors.ncols();
    let mut coefs = DMatrix::zeros(m, d);
    for (j, rhs) in normal.rhs.iter().enumerate() {
        coefs.set_row(j, &normal.gram.solve(rhs).transpose());
    }
    Ok(VarCoeffs {
        coefs,
        q: design.q,
        penalized: false,
        lambda: 0.0,
        converged: true,
        ridged: normal.gram.ridged(),
        kkt_residual: 0.0,
    })
}

/// Per-coefficient penalty weights for one equation (`∞` pins a coefficient at zero).
#[derive(Debug, Clone)]
pub struct PenaltyWeights(pub Vec<f64>);

impl PenaltyWeights {
    /// `|θ̃_k|^{−γ}`; pilot zeros receive infinite weight.
    pub fn adaptive(pilot_row: &[f64], gamma: f64, penalize_intercept: bool) -> Self {
        let mut w: Vec<f64> = pilot_row
            .iter()
            .map(|&b| if b == 0.0 { f64::INFINITY } else { b.abs().powf(-gamma) })
            .collect();
        if !penalize_intercept && pilot_row[0] != 0.0 {
            w[0] = 0.0;
        }
        Self(w)
    }

    pub fn uniform(d: usize, penalize_intercept: bool) -> Self {
        let mut w = vec![1.0; d];
        if !penalize_intercept {
            w[0] = 0.0;
        }
        Self(w)
    }

    fn pinned(&self, k: usize) -> bool {
        self.0[k].is_infinite()
    }

    /// Absolute penalty `Tλw_k` (zero weight stays zero even for infinite λ·w products).
    fn penalty(&self, k: usize, n: f64, lambda: f64) -> f64 {
        let w = self.0[k];
        if w == 0.0 || lambda == 0.0 {
            0.0
        } else {
            n * lambda * w
        }
    }
}

#[derive(Debug, Clone)]
struct EquationFit {
    beta: DVector<f64>,
    kkt: f64,
    converged: bool,
}

fn soft_threshold(z: f64, t: f64) -> f64 {
    if z > t {
        z - t
    } else if z < -t {
        z + t
    } else {
        0.0
    }
}

/// Largest KKT violation on the per-observation scale.
fn kkt_violation(
    g: &DMatrix<f64>,
    c: &DVector<f64>,
    beta: &DVector<f64>,
    w: &PenaltyWeights,
    n: f64,
    lambda: f64,
) -> f64 {
    let grad = g * beta - c;
    let mut worst: f64 = 0.0;
    for k in 0..beta.len() {
        if w.pinned(k) {
            continue;
        }
        let pen = w.penalty(k, n, lambda);
        let v = if beta[k] != 0.0 {
            (grad[k] + pen * beta[k].signum()).abs()
        } else {
            (grad[k].abs() - pen).max(0.0)
        };
        worst = worst.max(v / n);
    }
    worst
}

/// Penalised objective `½βᵀGβ − cᵀβ + Σ Tλw_k|β_k|` (up to the constant `½xᵀx`).
fn objective(g: &DMatrix<f64>, c: &DVector<f64>, beta: &DVector<f64>, w: &PenaltyWeights, n: f64, lambda: f64) -> f64 {
    let quad = 0.5 * beta.dot(&(g * beta)) - c.dot(beta);
    let pen: f64 = (0..beta.len())
        .filter(|&k| beta[k] != 0.0)
        .map(|k| w.penalty(k, n, lambda) * beta[k].abs())
        .sum();
    quad + pen
}

/// Solve the active-set stationarity system with the current signs and keep it
/// when signs and inactive-set KKT conditions are preserved.
fn polish(
    g: &DMatrix<f64>,
    c: &DVector<f64>,
    beta: &DVector<f64>,
    w: &PenaltyWeights,
    n: f64,
    lambda: f64,
) -> Option<DVector<f64>> {
    let active: Vec<usize> = (0..beta.len()).filter(|&k| beta[k] != 0.0).collect();
    if active.is_empty() {
        return None;
    }
    let ga = DMatrix::from_fn(active.len(), active.len(), |a, b| g[(active[a], active[b])]);
    let rhs = DVector::from_fn(active.len(), |a, _| {
        let k = active[a];
        c[k] - w.penalty(k, n, lambda) * beta[k].signum()
    });
    let sol = ga.cholesky()?.solve(&rhs);
    let mut out = DVector::zeros(beta.len());
    for (a, &k) in active.iter().enumerate() {
        if sol[a].signum() != beta[k].signum() || sol[a] == 0.0 {
            return None;
        }
        out[k] = sol[a];
    }
    Some(out)
}

fn coordinate_descent(
    g: &DMatrix<f64>,
    c: &DVector<f64>,
    w: &PenaltyWeights,
    n: f64,
    lambda: f64,
    warm: &DVector<f64>,
    mut on_sweep: impl FnMut(&DVector<f64>),
) -> EquationFit {
    let d = c.len();
    let mut beta = warm.clone();
    for k in 0..d {
        if w.pinned(k) {
            beta[k] = 0.0;
        }
    }
    let mut r = g * &beta;
    let scale = (0..d).map(|k| g[(k, k)]).fold(0.0, f64::max).max(1e-300);
    let mut converged = false;

    for sweep in 0..MAX_SWEEPS {
        let mut max_change: f64 = 0.0;
        for k in 0..d {
            if w.pinned(k) || g[(k, k)] <= 0.0 {
                continue;
            }
            let gkk = g[(k, k)];
            let z = c[k] - r[k] + gkk * beta[k];
            let new = soft_threshold(z, w.penalty(k, n, lambda)) / gkk;
            let delta = new - beta[k];
            if delta != 0.0 {
                beta[k] = new;
                r.axpy(delta, &g.column(k), 1.0);
                max_change = max_change.max(delta.abs() * gkk.sqrt());
            }
        }
        on_sweep(&beta);
        // recompute the running gradient now and then to flush drift
        if sweep % 50 == 49 {
            r = g * &beta;
        }
        if max_change <= 1e-12 * scale.sqrt() || sweep % 25 == 24 {
            if let Some(p) = polish(g, c, &beta, w, n, lambda) {
                if kkt_violation(g, c, &p, w, n, lambda) <= KKT_TOL {
                    beta = p;
                    converged = true;
                    break;
                }
            }
            if kkt_violation(g, c, &beta, w, n, lambda) <= KKT_TOL && max_change <= 1e-12 * scale.sqrt() {
                converged = true;
                break;
            }
            r = g * &beta;
        }
    }
    if !converged && beta.iter().all(|&b| b == 0.0) {
        converged = kkt_violation(g, c, &beta, w, n, lambda) <= KKT_TOL;
    }
    let kkt = kkt_violation(g, c, &beta, w, n, lambda);
    EquationFit { beta, kkt, converged }
}

/// Weighted-LASSO fit of every equation at one λ.
fn fit_penalized(
    normal: &Normal,
    weights: &[PenaltyWeights],
    lambda: f64,
    warm: Option<&DMatrix<f64>>,
    q: usize,
) -> VarCoeffs {
    let m = normal.rhs.len();
    let d = normal.gram.gram.nrows();
    let mut coefs = DMatrix::zeros(m, d);
    let mut converged = true;
    let mut kkt: f64 = 0.0;
    for j in 0..m {
        let start = warm.map_or_else(|| DVector::zeros(d), |w| w.row(j).transpose());
        let fit = coordinate_descent(
            &normal.gram.gram,
            &normal.rhs[j],
            &weights[j],
            normal.n,
            lambda,
            &start,
            |_| {},
        );
        converged &= fit.converged;
        kkt = kkt.max(fit.kkt);
        coefs.set_row(j, &fit.beta.transpose());
    }
    VarCoeffs {
        coefs,
        q,
        penalized: true,
        lambda,
        converged,
        ridged: normal.gram.ridged(),
        kkt_residual: kkt,
    }
}

/// Adaptive LASSO with weights `|θ̃|^{−γ}` from `pilot`; minimises
/// `½Σ_t‖x_t − Ψ̲Z‖² + Tλ Σ_k w_k|θ_k|`.
pub fn adaptive_lasso_var(
    design: &LaggedDesign,
    pilot: &VarCoeffs,
    lambda: f64,
    gamma: f64,
    penalize_intercept: bool,
) -> Result<VarCoeffs> {
    ensure!(lambda >= 0.0, InvalidArgument, "lambda must be nonnegative");
    ensure!(gamma > 0.0, InvalidArgument, "gamma must be positive");
    ensure!(
        pilot.coefs.shape() == (design.n_vars(), design.regressors.ncols()),
        InvalidArgument,
        "pilot shape does not match the design"
    );
    let normal = Normal::new(design)?;
    let weights = adaptive_weights(pilot, gamma, penalize_intercept);
    Ok(fit_penalized(&normal, &weights, lambda, Some(&pilot.coefs), design.q))
}

fn adaptive_weights(pilot: &VarCoeffs, gamma: f64, penalize_intercept: bool) -> Vec<PenaltyWeights> {
    (0..pilot.n_vars())
        .map(|j| {
            let row: Vec<f64> = pilot.coefs.row(j).iter().copied().collect();
            PenaltyWeights::adaptive(&row, gamma, penalize_intercept)
        })
        .collect()
}

/// Smallest λ at which every penalised coefficient is zero, maximised over equations.
fn lambda_max(normal: &Normal, weights: &[PenaltyWeights]) -> f64 {
    let g = &normal.gram.gram;
    let d = g.nrows();
    let mut best: f64 = 0.0;
    for (c, w) in normal.rhs.iter().zip(weights) {
        // unpenalised coefficients are fitted first; pinned ones stay at zero
        let free: Vec<usize> = (0..d).filter(|&k| w.0[k] == 0.0).collect();
        let mut beta = DVector::zeros(d);
        if !free.is_empty() {
            let gf = DMatrix::from_fn(free.len(), free.len(), |a, b| g[(free[a], free[b])]);
            let cf = DVector::from_fn(free.len(), |a, _| c[free[a]]);
            if let Some(ch) = gf.cholesky() {
                let sol = ch.solve(&cf);
                for (a, &k) in free.iter().enumerate() {
                    beta[k] = sol[a];
                }
            }
        }
        let grad = g * &beta - c;
        for k in 0..d {
            let wk = w.0[k];
            if wk > 0.0 && wk.is_finite() {
                best = best.max(grad[k].abs() / (normal.n * wk));
            }
        }
    }
    best
}

/// Exposed for tests and diagnostics: λ_max of the adaptive problem.
pub fn adaptive_lambda_max(
    design: &LaggedDesign,
    pilot: &VarCoeffs,
    gamma: f64,
    penalize_intercept: bool,
) -> Result<f64> {
    let normal = Normal::new(design)?;
    Ok(lambda_max(&normal, &adaptive_weights(pilot, gamma, penalize_intercept)))
}

/// Penalised objective per equation, exposed for monotonicity checks.
pub fn coordinate_descent_trace(
    design: &LaggedDesign,
    pilot: &VarCoeffs,
    equation: usize,
    lambda: f64,
    gamma: f64,
) -> Result<Vec<f64>> {
    let normal = Normal::new(design)?;
    let w = &adaptive_weights(pilot, gamma, true)[equation];
    let g = &normal.gram.gram;
    let c = &normal.rhs[equation];
    let d = g.nrows();
    let mut trace = Vec::new();
    coordinate_descent(g, c, w, normal.n, lambda, &DVector::zeros(d), |b| {
        trace.push(objective(g, c, b, w, normal.n, lambda))
    });
    Ok(trace)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct CvOptions {
    /// Training fraction of the sample.
    pub ratio: f64,
    pub gamma: f64,
    pub penalize_intercept: bool,
    /// Number of log-spaced phase-A points on `[min_ratio·λ_max, λ_max]` (λ = 0 is added).
    pub lasso_points: usize,
    pub lasso_min_ratio: f64,
}

impl Default for CvOptions {
    fn default() -> Self {
        Self {
            ratio: 0.75,
            gamma: 1.0,
            penalize_intercept: true,
            lasso_points: 40,
            lasso_min_ratio: 1e-4,
        }
    }
}

/// Multipliers `0.1, 0.2, …, 5.0` applied to the LASSO-selected λ.
pub fn adaptive_grid_multipliers() -> Vec<f64> {
    (1..=50).map(|i| i as f64 / 10.0).collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CvResult {
    pub lambda_star: f64,
    pub lasso_lambda_star: f64,
    /// Phase-A (plain LASSO) `(λ, CV(λ))` points, largest λ first.
    pub lasso_curve: Vec<(f64, f64)>,
    /// Phase-B (adaptive LASSO) `(λ, CV(λ))` points in increasing λ.
    pub cv_curve: Vec<(f64, f64)>,
    #[serde(rename = "final")]
    pub final_fit: VarCoeffs,
}

fn argmin_curve(curve: &[(f64, f64)]) -> f64 {
    curve
        .iter()
        .fold(
            (f64::NAN, f64::INFINITY),
            |best, &(l, s)| {
                if s < best.1 {
                    (l, s)
                } else {
                    best
                }
            },
        )
        .0
}

/// Two-phase out-of-sample cross-validation followed by a full-sample refit.
pub fn cross_validate_lambda(x: &DMatrix<f64>, q: usize, opts: &CvOptions) -> Result<CvResult> {
    let design = build_lagged_design(x, q)?;
    let t = design.n_obs();
    let n_train = (opts.ratio * t as f64).floor() as usize;
    ensure!(
        n_train > design.regressors.ncols() && t > n_train,
        InvalidArgument,
        "sample of {t} rows too short for cross-validation with q={q}"
    );
    let train = design.rows(0, n_train);
    let test = design.rows(n_train, t);
    let normal = Normal::new(&train)?;
    let m = design.n_vars();
    let d = design.regressors.ncols();

    // phase A: plain LASSO path
    let uniform: Vec<PenaltyWeights> = (0..m)
        .map(|_| PenaltyWeights::uniform(d, opts.penalize_intercept))
        .collect();
    let lmax = lambda_max(&normal, &uniform);
    let mut grid_a: Vec<f64> = if lmax > 0.0 && opts.lasso_points > 0 {
        let n = opts.lasso_points;
        (0..n)
            .map(|i| {
                let frac = if n == 1 { 0.0 } else { i as f64 / (n - 1) as f64 };
                lmax * opts.lasso_min_ratio.powf(frac)
            })
            .collect()
    } else {
        Vec::new()
    };
    grid_a.push(0.0);
    let mut warm: Option<DMatrix<f64>> = None;
    let mut lasso_curve = Vec::with_capacity(grid_a.len());
    for &lambda in &grid_a {
        let fit = fit_penalized(&normal, &uniform, lambda, warm.as_ref(), q);
        lasso_curve.push((lambda, fit.mean_loss(&test)));
        warm = Some(fit.coefs);
    }
    let lasso_star = argmin_curve(&lasso_curve);

    // phase B: adaptive LASSO on c·λ*₁
    let pilot = ols_var(&train)?;
    let weights = adaptive_weights(&pilot, opts.gamma, opts.penalize_intercept);
    let grid_b: Vec<f64> = adaptive_grid_multipliers().iter().map(|c| c * lasso_star).collect();
    let mut warm: Option<DMatrix<f64>> = None;
    let mut cv_curve = vec![(0.0, 0.0); grid_b.len()];
    for (i, &lambda) in grid_b.iter().enumerate().rev() {
        let fit = fit_penalized(&normal, &weights, lambda, warm.as_ref(), q);
        cv_curve[i] = (lambda, fit.mean_loss(&test));
        warm = Some(fit.coefs);
    }
    // ties resolve to the larger λ (sparser model)
    let lambda_star = cv_curve
        .iter()
        .rev()
        .fold(
            (f64::NAN, f64::INFINITY),
            |best, &(l, s)| {
                if s < best.1 {
                    (l, s)
                } else {
                    best
                }
            },
        )
        .0;

    let full_pilot = ols_var(&design)?;
    let final_fit = adaptive_lasso_var(&design, &full_pilot, lambda_star, opts.gamma, opts.penalize_intercept)?;
    Ok(CvResult {
        lambda_star,
        lasso_lambda_star: lasso_star,
        lasso_curve,
        cv_curve,
        final_fit,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use nalgebra::dmatrix;

    #[test]
    fn design_rows_scalar() {
        let x = dmatrix![1.0; 2.0; 3.0];
        let d = build_lagged_design(&x, 1).unwrap();
        assert_eq!(d.regressors, dmatrix![1.0, 0.0; 1.0, 1.0; 1.0, 2.0]);
    }

    #[test]
    fn design_zero_presample() {
        let x = dmatrix![1.0; 2.0; 3.0; 4.0];
        let d = build_lagged_design(&x, 2).unwrap();
        assert_eq!(
            d.regressors.row(0).iter().copied().collect::<Vec<_>>(),
            vec![1.0, 0.0, 0.0]
        );
        assert_eq!(
            d.regressors.row(3).iter().copied().collect::<Vec<_>>(),
            vec![1.0, 3.0, 2.0]
        );
        assert!(build_lagged_design(&dmatrix![1.0; 2.0; 3.0], 2).is_err());
    }

    #[test]
    fn design_shape() {
        let x = DMatrix::from_fn(2000, 2, |i, j| ((i * 3 + j) % 7) as f64);
        let d = build_lagged_design(&x, 10).unwrap();
        assert_eq!(d.regressors.shape(), (2000, 21));
    }

    #[test]
    fn noiseless_ar1_is_interpolated() {
        // x_0 equals the intercept so the zero-lag first row is also exact
        let mut x = DMatrix::zeros(12, 1);
        x[(0, 0)] = 1.0;
        for t in 1..12 {
            x[(t, 0)] = 1.0 + 0.5 * x[(t - 1, 0)];
        }
        let d = build_lagged_design(&x, 1).unwrap();
        let fit = ols_var(&d).unwrap();
        assert!((fit.lag_mat(1)[(0, 0)] - 0.5).abs() < 1e-9);
        assert!((fit.intercept()[0] - 1.0).abs() < 1e-9);
        assert!(fit.residuals(&d).amax() < 1e-9);
    }

    #[test]
    fn huge_lambda_zeroes_everything() {
        let x = DMatrix::from_fn(60, 2, |i, j| {
            ((i * 7 + j * 3) % 5) as f64 - 2.0 + 0.1 * (i as f64).sin()
        });
        let d = build_lagged_design(&x, 2).unwrap();
        let pilot = ols_var(&d).unwrap();
        let lmax = adaptive_lambda_max(&d, &pilot, 1.0, true).unwrap();
        let fit = adaptive_lasso_var(&d, &pilot, 1e6 * lmax, 1.0, true).unwrap();
        assert!(fit.support().is_empty());
        let just_above = adaptive_lasso_var(&d, &pilot, lmax * 1.0001, 1.0, true).unwrap();
        assert!(just_above.support().is_empty());
        let below = adaptive_lasso_var(&d, &pilot, lmax * 0.9, 1.0, true).unwrap();
        assert!(!below.support().is_empty());
    }

    #[test]
    fn grid_has_fifty_candidates() {
        let g = adaptive_grid_multipliers();
        assert_eq!(g.len(), 50);
        assert!((g[0] - 0.1).abs() < 1e-15 && (g[49] - 5.0).abs() < 1e-15);
    }
}
