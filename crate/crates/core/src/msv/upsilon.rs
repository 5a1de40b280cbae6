use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{ensure, Error, Result};
use crate::linalg::spectral_radius;

const TOL: f64 = 1e-10;
const MAX_ITER: usize = 100_000;

/// Invertible VMA(1) representation `w_t = u_t + Υu_{t−1}`, `Var(u_t) = Σ_u`,
/// of `w_t = ξ_t − Φξ_{t−1} + η_{t−1}`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VmaSolution {
    #[serde(with = "crate::serde_mat")]
    pub upsilon: DMatrix<f64>,
    #[serde(with = "crate::serde_mat")]
    pub sigma_u: DMatrix<f64>,
    pub iterations: usize,
}

/// Root of `ΥAΥᵀ − ΥΓ₀ + A = 0` with `ρ(Υ) < 1`, where `A = ΦΣ_ξ` and
/// `Γ₀ = Σ_ξ + ΦΣ_ξΦᵀ + Σ_η`. Iterates `Υ_{k+1} = A(Γ₀ − AΥ_kᵀ)⁻¹` from zero;
/// `Σ_u = Γ₀ − AΥᵀ`.
pub fn solve_vma_upsilon(phi: &DMatrix<f64>, sigma_xi: &DMatrix<f64>, sigma_eta: &DMatrix<f64>) -> Result<VmaSolution> {
    let m = phi.nrows();
    ensure!(
        phi.shape() == (m, m) && sigma_xi.shape() == (m, m) && sigma_eta.shape() == (m, m),
        InvalidArgument,
        "inconsistent dimensions"
    );
    ensure!(spectral_radius(phi) < 1.0, InvalidArgument, "Φ must be stable");
    let a = phi * sigma_xi;
    let gamma0 = sigma_xi + &a * phi.transpose() + sigma_eta;
    let mut ups = DMatrix::zeros(m, m);
    let mut iterations = 0;
    loop {
        iterations += 1;
        let inner = &gamma0 - &a * ups.transpose();
        let inv = inner
            .clone()
            .try_inverse()
            .ok_or_else(|| Error::Numerical("singular Σ_u during VMA iteration".into()))?;
        let next = &a * inv;
        let delta = (&next - &ups).norm();
        ups = next;
        ensure!(ups.iter().all(|v| v.is_finite()), Numerical, "VMA iteration diverged");
        if delta < TOL {
            break;
        }
        ensure!(iterations < MAX_ITER, Numerical, "VMA iteration did not converge");
    }
    let sigma_u = &gamma0 - &a * ups.transpose();
    ensure!(spectral_radius(&ups) < 1.0, Numerical, "VMA solution is not invertible");
    Ok(VmaSolution {
        upsilon: ups,
        sigma_u,
        iterations,
    })
}

/// Max residual of `ΥΣ_u = ΦΣ_ξ` and `Σ_u + ΥΣ_uΥᵀ = Γ₀`.
pub fn vma_moment_residual(
    sol: &VmaSolution,
    phi: &DMatrix<f64>,
    sigma_xi: &DMatrix<f64>,
    sigma_eta: &DMatrix<f64>,
) -> f64 {
    let a = phi * sigma_xi;
    let gamma0 = sigma_xi + &a * phi.transpose() + sigma_eta;
    let lag1 = (&sol.upsilon * &sol.sigma_u - a).amax();
    let lag0 = (&sol.sigma_u + &sol.upsilon * &sol.sigma_u * sol.upsilon.transpose() - gamma0).amax();
    lag1.max(lag0)
}
