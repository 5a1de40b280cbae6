//! Seeded generators for the diagonal-BEKK design, the factor-GARCH design
//! and the fMSV model.

use std::path::Path;

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha20Rng;
use rand_distr::{Distribution, StandardNormal, StudentT, Uniform};
use serde::{Deserialize, Serialize};

use crate::data_io::{write_returns_csv, CovPath, ReturnsPanel};
use crate::error::{ensure, Error, Result};
use crate::linalg::{min_eigenvalue, solve_discrete_lyapunov, spectral_radius, sym_sqrt, symmetrize};

/// Recorded in every [`SimOutput`] so reference paths can be tied to the generator.
pub const PRNG_NAME: &str = "chacha20/rand_chacha-0.9";
pub const INNOVATION_DF: f64 = 3.0;
pub const BURN_IN: usize = 200;
const MAX_RESAMPLE: usize = 1000;

pub fn rng_from_seed(seed: u64) -> ChaCha20Rng {
    ChaCha20Rng::seed_from_u64(seed)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DgpKind {
    Dgp1,
    Dgp2,
    Fmsv,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimAux {
    #[serde(with = "crate::serde_mat")]
    pub factors: DMatrix<f64>,
    #[serde(with = "crate::serde_mat")]
    pub log_vols: DMatrix<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimOutput {
    #[serde(with = "crate::serde_mat")]
    pub returns: DMatrix<f64>,
    pub true_cov: CovPath,
    pub aux: Option<SimAux>,
    pub seed: u64,
    pub dgp: DgpKind,
    pub prng: String,
}

impl SimOutput {
    fn new(dgp: DgpKind, seed: u64, returns: DMatrix<f64>, covs: Vec<DMatrix<f64>>, aux: Option<SimAux>) -> Self {
        Self {
            returns,
            true_cov: CovPath::new(covs),
            aux,
            seed,
            dgp,
            prng: PRNG_NAME.to_string(),
        }
    }

    pub fn panel(&self) -> Result<ReturnsPanel> {
        ReturnsPanel::from_matrix(self.returns.clone())
    }

    /// Writes `returns.csv` and `true_cov.csv` (per-date vech of H_t) into `dir`.
    pub fn export(&self, dir: impl AsRef<Path>) -> Result<()> {
        let dir = dir.as_ref();
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        let panel = self.panel()?;
        write_returns_csv(&panel, dir.join("returns.csv"))?;
        self.true_cov.write_vech_csv(&panel.dates, dir.join("true_cov.csv"))
    }
}

/// Student-t draws rescaled by `√((df−2)/df)` to unit variance.
pub fn student_t_draws<R: Rng + ?Sized>(df: f64, n: usize, rng: &mut R) -> Result<DVector<f64>> {
    ensure!(df > 2.0, InvalidArgument, "degrees of freedom must exceed 2, got {df}");
    let dist = StudentT::new(df).map_err(|e| Error::InvalidArgument(e.to_string()))?;
    let scale = ((df - 2.0) / df).sqrt();
    Ok(DVector::from_fn(n, |_, _| scale * dist.sample(rng)))
}

pub fn standardized_student_t(df: f64, n: usize, seed: u64) -> Result<DVector<f64>> {
    student_t_draws(df, n, &mut rng_from_seed(seed))
}

fn uniform<R: Rng + ?Sized>(lo: f64, hi: f64, rng: &mut R) -> f64 {
    Uniform::new_inclusive(lo, hi).expect("valid bounds").sample(rng)
}

/// `Γ = KKᵀ/p` with the diagonal redrawn from U(0.005, 0.025), then shifted by
/// `(ζ + |λ_min|)I` for the first `ζ ∈ {0.005, 0.01, …}` giving `λ_min > 0.01`.
pub fn draw_gamma<R: Rng + ?Sized>(p: usize, rng: &mut R) -> DMatrix<f64> {
    let k = DMatrix::from_fn(p, p, |_, _| uniform(-0.2, 0.2, rng));
    let mut gamma = symmetrize(&(&k * k.transpose() / p as f64));
    for i in 0..p {
        gamma[(i, i)] = uniform(0.005, 0.025, rng);
    }
    let lmin = min_eigenvalue(&gamma);
    if lmin < 0.01 {
        let id = DMatrix::<f64>::identity(p, p);
        let mut step = 1;
        loop {
            let zeta = 0.005 * step as f64;
            let cand = &gamma + &id * (zeta + lmin.abs());
            if min_eigenvalue(&cand) > 0.01 {
                gamma = cand;
                break;
            }
            step += 1;
        }
    }
    gamma
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Dgp1Params {
    #[serde(with = "crate::serde_mat")]
    pub gamma: DMatrix<f64>,
    #[serde(with = "crate::serde_mat::dvec")]
    pub a: DVector<f64>,
    #[serde(with = "crate::serde_mat::dvec")]
    pub b: DVector<f64>,
}

impl Dgp1Params {
    pub fn draw<R: Rng + ?Sized>(p: usize, rng: &mut R) -> Result<Self> {
        let gamma = draw_gamma(p, rng);
        let mut a = DVector::zeros(p);
        let mut b = DVector::zeros(p);
        for k in 0..p {
            let mut tries = 0;
            loop {
                a[k] = uniform(0.1, 0.4, rng);
                b[k] = uniform(0.5, 0.8, rng);
                if a[k] * a[k] + b[k] * b[k] < 1.0 {
                    break;
                }
                tries += 1;
                ensure!(
                    tries < MAX_RESAMPLE,
                    Numerical,
                    "could not draw stationary BEKK coefficients"
                );
            }
        }
        Ok(Self { gamma, a, b })
    }

    /// `H_t = Γ + A y_{t−1}y_{t−1}ᵀA + B H_{t−1} B` for diagonal A, B.
    pub fn next_cov(&self, y: &DVector<f64>, h: &DMatrix<f64>) -> DMatrix<f64> {
        let p = y.len();
        let ay = y.component_mul(&self.a);
        let mut out = DMatrix::zeros(p, p);
        for j in 0..p {
            for i in j..p {
                let v = self.gamma[(i, j)] + ay[i] * ay[j] + self.b[i] * h[(i, j)] * self.b[j];
                out[(i, j)] = v;
                out[(j, i)] = v;
            }
        }
        out
    }

    pub fn initial_cov(&self) -> DMatrix<f64> {
        let persistence = self
            .a
            .iter()
            .zip(self.b.iter())
            .map(|(a, b)| a * a + b * b)
            .sum::<f64>()
            / self.a.len() as f64;
        &self.gamma / (1.0 - persistence)
    }
}

/// Runs the covariance recursion `next` with `y_t = H_t^{1/2}η_t`, discarding `burn_in` steps.
fn run_recursion<R: Rng + ?Sized>(
    p: usize,
    t_len: usize,
    burn_in: usize,
    h0: DMatrix<f64>,
    rng: &mut R,
    mut next: impl FnMut(&DVector<f64>, &DMatrix<f64>, &mut R) -> DMatrix<f64>,
) -> Result<(DMatrix<f64>, Vec<DMatrix<f64>>)> {
    let mut h = h0;
    let mut returns = DMatrix::zeros(t_len, p);
    let mut covs = Vec::with_capacity(t_len);
    for step in 0..burn_in + t_len {
        let eta = student_t_draws(INNOVATION_DF, p, rng)?;
        let y = sym_sqrt(&h) * eta;
        ensure!(
            y.iter().all(|v| v.is_finite()),
            Numerical,
            "non-finite simulated return"
        );
        if step >= burn_in {
            returns.set_row(step - burn_in, &y.transpose());
            covs.push(h.clone());
        }
        h = next(&y, &h, rng);
    }
    Ok((returns, covs))
}

pub fn simulate_dgp1<R: Rng + ?Sized>(
    params: &Dgp1Params,
    t_len: usize,
    burn_in: usize,
    rng: &mut R,
) -> Result<(DMatrix<f64>, Vec<DMatrix<f64>>)> {
    run_recursion(params.a.len(), t_len, burn_in, params.initial_cov(), rng, |y, h, _| {
        params.next_cov(y, h)
    })
}

/// Diagonal BEKK design with t(3) innovations.
pub fn gen_dgp1(p: usize, t_len: usize, seed: u64) -> Result<SimOutput> {
    ensure!(p >= 2 && t_len >= 2, InvalidArgument, "DGP 1 needs p >= 2 and T >= 2");
    let mut rng = rng_from_seed(seed);
    let params = Dgp1Params::draw(p, &mut rng)?;
    let (returns, covs) = simulate_dgp1(&params, t_len, BURN_IN, &mut rng)?;
    Ok(SimOutput::new(DgpKind::Dgp1, seed, returns, covs, None))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Dgp2Params {
    #[serde(with = "crate::serde_mat")]
    pub gamma: DMatrix<f64>,
    /// p×m* matrix whose columns are the β_j.
    #[serde(with = "crate::serde_mat")]
    pub betas: DMatrix<f64>,
    pub varsigma: Vec<f64>,
    pub kappa: Vec<f64>,
    pub tau: Vec<f64>,
}

pub const DGP2_FACTORS: usize = 2;

impl Dgp2Params {
    pub fn draw<R: Rng + ?Sized>(p: usize, rng: &mut R) -> Result<Self> {
        let gamma = draw_gamma(p, rng);
        let (mut varsigma, mut kappa, mut tau) = (Vec::new(), Vec::new(), Vec::new());
        for _ in 0..DGP2_FACTORS {
            varsigma.push(uniform(0.005, 0.01, rng));
            let mut tries = 0;
            loop {
                let (k, t) = (uniform(0.05, 0.15, rng), uniform(0.7, 0.9, rng));
                if k + t < 1.0 {
                    kappa.push(k);
                    tau.push(t);
                    break;
                }
                tries += 1;
                ensure!(
                    tries < MAX_RESAMPLE,
                    Numerical,
                    "could not draw stationary factor GARCH"
                );
            }
        }
        let betas = DMatrix::from_fn(p, DGP2_FACTORS, |_, _| uniform(-1.0, 1.0, rng));
        Ok(Self {
            gamma,
            betas,
            varsigma,
            kappa,
            tau,
        })
    }

    pub fn cov_from_lambda(&self, lambda: &[f64]) -> DMatrix<f64> {
        let mut h = self.gamma.clone();
        for (j, &l) in lambda.iter().enumerate() {
            let b = self.betas.column(j);
            h += b * b.transpose() * l;
        }
        symmetrize(&h)
    }
}

/// How the factor draws `r_{j,t}` that drive `λ_{j,t+1}` relate to the returns.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Dgp2Coupling {
    /// `y_t = Σ_j β_j r_{j,t} + Γ^{1/2}u_t`: the factor shocks are part of the returns.
    #[default]
    Embedded,
    /// `y_t = H_t^{1/2}η_t` with `r_{j,t}` drawn independently of `y_t`.
    Independent,
}

/// Returns, true covariances and factor variances of one factor-GARCH draw.
pub type Dgp2Draw = (DMatrix<f64>, Vec<DMatrix<f64>>, DMatrix<f64>);

/// Runs the factor-GARCH design for given parameters; returns (returns, H_t, λ_t).
/// In both couplings `Cov(y_t | past) = H_t`.
pub fn simulate_dgp2<R: Rng + ?Sized>(
    params: &Dgp2Params,
    t_len: usize,
    burn_in: usize,
    coupling: Dgp2Coupling,
    rng: &mut R,
) -> Result<Dgp2Draw> {
    let p = params.gamma.nrows();
    let m = params.varsigma.len();
    let gamma_sqrt = sym_sqrt(&params.gamma);
    let mut lambda: Vec<f64> = (0..m)
        .map(|j| {
            let persistence = params.kappa[j] + params.tau[j];
            params.varsigma[j] / (1.0 - persistence)
        })
        .collect();
    let mut returns = DMatrix::zeros(t_len, p);
    let mut covs = Vec::with_capacity(t_len);
    let mut lambdas = DMatrix::zeros(t_len, m);
    for step in 0..burn_in + t_len {
        let h = params.cov_from_lambda(&lambda);
        let r: Vec<f64> = (0..m)
            .map(|j| {
                let z: f64 = StandardNormal.sample(rng);
                lambda[j].sqrt() * z
            })
            .collect();
        let eta = student_t_draws(INNOVATION_DF, p, rng)?;
        let y = match coupling {
            Dgp2Coupling::Embedded => &params.betas * DVector::from_column_slice(&r) + &gamma_sqrt * eta,
            Dgp2Coupling::Independent => sym_sqrt(&h) * eta,
        };
        if step >= burn_in {
            let row = step - burn_in;
            returns.set_row(row, &y.transpose());
            for j in 0..m {
                lambdas[(row, j)] = lambda[j];
            }
            covs.push(h);
        }
        for j in 0..m {
            lambda[j] = params.varsigma[j] + params.kappa[j] * r[j] * r[j] + params.tau[j] * lambda[j];
        }
    }
    Ok((returns, covs, lambdas))
}

/// Two-factor GARCH design with t(3) innovations.
pub fn gen_dgp2(p: usize, t_len: usize, seed: u64) -> Result<SimOutput> {
    gen_dgp2_with(p, t_len, seed, Dgp2Coupling::default())
}

pub fn gen_dgp2_with(p: usize, t_len: usize, seed: u64, coupling: Dgp2Coupling) -> Result<SimOutput> {
    ensure!(p >= 2 && t_len >= 2, InvalidArgument, "DGP 2 needs p >= 2 and T >= 2");
    let mut rng = rng_from_seed(seed);
    let params = Dgp2Params::draw(p, &mut rng)?;
    let (returns, covs, _) = simulate_dgp2(&params, t_len, BURN_IN, coupling, &mut rng)?;
    Ok(SimOutput::new(DgpKind::Dgp2, seed, returns, covs, None))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FmsvParams {
    #[serde(with = "crate::serde_mat")]
    pub loadings: DMatrix<f64>,
    #[serde(with = "crate::serde_mat::dvec")]
    pub idio_var: DVector<f64>,
    #[serde(with = "crate::serde_mat::dvec")]
    pub mu: DVector<f64>,
    #[serde(with = "crate::serde_mat")]
    pub phi: DMatrix<f64>,
    #[serde(with = "crate::serde_mat")]
    pub sigma_eta: DMatrix<f64>,
}

impl FmsvParams {
    pub fn covariance(&self, h: &DVector<f64>) -> DMatrix<f64> {
        let l = &self.loadings;
        let scaled = DMatrix::from_fn(l.nrows(), l.ncols(), |i, j| l[(i, j)] * h[j].exp());
        let mut cov = scaled * l.transpose();
        for i in 0..cov.nrows() {
            cov[(i, i)] += self.idio_var[i];
        }
        symmetrize(&cov)
    }

    /// Stationary variance of `h_t`.
    pub fn log_vol_variance(&self) -> Result<DMatrix<f64>> {
        solve_discrete_lyapunov(&self.phi, &self.sigma_eta)
    }
}

/// Gaussian fMSV path started from the stationary distribution of `h`.
pub fn gen_fmsv(params: &FmsvParams, t_len: usize, seed: u64) -> Result<SimOutput> {
    let (p, m) = params.loadings.shape();
    ensure!(
        params.idio_var.len() == p
            && params.mu.len() == m
            && params.phi.shape() == (m, m)
            && params.sigma_eta.shape() == (m, m),
        InvalidArgument,
        "inconsistent fMSV parameter dimensions"
    );
    ensure!(spectral_radius(&params.phi) < 1.0, InvalidArgument, "Φ must be stable");
    ensure!(
        params.idio_var.iter().all(|&v| v >= 0.0),
        InvalidArgument,
        "negative idiosyncratic variance"
    );
    let mut rng = rng_from_seed(seed);
    let normal = |n: usize, rng: &mut ChaCha20Rng| DVector::from_fn(n, |_, _| StandardNormal.sample(rng));

    let eta_root = sym_sqrt(&params.sigma_eta);
    let stat_root = sym_sqrt(&params.log_vol_variance()?);
    let idio_sd = params.idio_var.map(f64::sqrt);
    let mut alpha = &stat_root * normal(m, &mut rng);

    let mut returns = DMatrix::zeros(t_len, p);
    let mut factors = DMatrix::zeros(t_len, m);
    let mut log_vols = DMatrix::zeros(t_len, m);
    let mut covs = Vec::with_capacity(t_len);
    for t in 0..t_len {
        let h = &params.mu + &alpha;
        let zeta = normal(m, &mut rng);
        let f = DVector::from_fn(m, |j, _| (0.5 * h[j]).exp() * zeta[j]);
        let eps = normal(p, &mut rng).component_mul(&idio_sd);
        let y = &params.loadings * &f + eps;
        returns.set_row(t, &y.transpose());
        factors.set_row(t, &f.transpose());
        log_vols.set_row(t, &h.transpose());
        covs.push(params.covariance(&h));
        alpha = &params.phi * alpha + &eta_root * normal(m, &mut rng);
    }
    Ok(SimOutput::new(
        DgpKind::Fmsv,
        seed,
        returns,
        covs,
        Some(SimAux { factors, log_vols }),
    ))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn gamma_repair_reaches_floor() {
        let mut rng = rng_from_seed(3);
        for _ in 0..5 {
            let g = draw_gamma(20, &mut rng);
            assert!(min_eigenvalue(&g) > 0.01 - 1e-12);
        }
    }

    #[test]
    fn dgp1_recursion_identity() {
        let out = {
            let mut rng = rng_from_seed(11);
            let params = Dgp1Params::draw(4, &mut rng).unwrap();
            let (y, h) = simulate_dgp1(&params, 30, 5, &mut rng).unwrap();
            for t in 1..30 {
                let next = params.next_cov(&y.row(t - 1).transpose(), &h[t - 1]);
                assert_eq!(next, h[t]);
            }
            y
        };
        assert_eq!(gen_dgp1(4, 30, 11).unwrap().returns.nrows(), out.nrows());
    }

    #[test]
    fn dgp2_degenerate_garch_is_constant() {
        let mut rng = rng_from_seed(5);
        let mut params = Dgp2Params::draw(5, &mut rng).unwrap();
        params.kappa = vec![0.0; 2];
        params.tau = vec![0.0; 2];
        let (_, covs, lambdas) = simulate_dgp2(&params, 20, 0, Dgp2Coupling::Embedded, &mut rng).unwrap();
        for t in 0..20 {
            assert_eq!(lambdas[(t, 0)], params.varsigma[0]);
            assert_eq!(covs[t], covs[0]);
        }
    }

    #[test]
    fn fmsv_without_state_noise_is_static() {
        let params = FmsvParams {
            loadings: DMatrix::from_fn(3, 1, |i, _| 1.0 + i as f64),
            idio_var: DVector::from_element(3, 0.1),
            mu: DVector::from_element(1, -0.5),
            phi: DMatrix::from_element(1, 1, 0.9),
            sigma_eta: DMatrix::zeros(1, 1),
        };
        let out = gen_fmsv(&params, 10, 1).unwrap();
        let h0 = params.covariance(&params.mu);
        assert!(out.true_cov.matrices.iter().all(|h| (h - &h0).amax() < 1e-15));
    }

    #[test]
    fn seeded_determinism() {
        assert_eq!(gen_dgp2(3, 40, 9).unwrap(), gen_dgp2(3, 40, 9).unwrap());
        assert_ne!(
            gen_dgp2(3, 40, 9).unwrap().returns,
            gen_dgp2(3, 40, 10).unwrap().returns
        );
        assert_eq!(
            standardized_student_t(3.0, 50, 1).unwrap(),
            standardized_student_t(3.0, 50, 1).unwrap()
        );
        assert!(standardized_student_t(2.0, 5, 1).is_err());
    }
}
