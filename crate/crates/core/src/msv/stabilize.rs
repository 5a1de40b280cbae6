//! Eigenvalue control of the VARMA transition via the real Schur form.

use nalgebra::linalg::Schur;
use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::linalg::spectral_radius;

/// Moduli up to `1 + UNIT_TOL` count as non-explosive.
pub const UNIT_TOL: f64 = 1e-9;
const FALLBACK_RADIUS: f64 = 0.999;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ReplacedEig {
    pub re: f64,
    pub im: f64,
}

impl ReplacedEig {
    pub fn modulus(&self) -> f64 {
        self.re.hypot(self.im)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Stabilization {
    pub replaced_eigs: Vec<ReplacedEig>,
    #[serde(with = "crate::serde_mat")]
    pub phi_used: DMatrix<f64>,
    #[serde(with = "crate::serde_mat::dvec")]
    pub c_used: DVector<f64>,
    /// Orthonormal Schur vectors spanning the replaced directions (m×k).
    #[serde(with = "crate::serde_mat")]
    pub replaced_directions: DMatrix<f64>,
    /// The Schur route failed and Φ was rescaled to radius 0.999 instead.
    pub fallback: bool,
}

impl Stabilization {
    pub fn is_identity(&self) -> bool {
        self.replaced_eigs.is_empty() && !self.fallback
    }
}

fn pass_through(phi: &DMatrix<f64>, c: &DVector<f64>) -> Stabilization {
    Stabilization {
        replaced_eigs: Vec::new(),
        phi_used: phi.clone(),
        c_used: c.clone(),
        replaced_directions: DMatrix::zeros(phi.nrows(), 0),
        fallback: false,
    }
}

fn scaled_fallback(phi: &DMatrix<f64>, c: &DVector<f64>) -> Stabilization {
    let rho = phi.clone().svd(false, false).singular_values.max();
    Stabilization {
        replaced_eigs: Vec::new(),
        phi_used: phi * (FALLBACK_RADIUS / rho),
        c_used: c.clone(),
        replaced_directions: DMatrix::zeros(phi.nrows(), 0),
        fallback: true,
    }
}

/// Apply the rotation `G = [cs −sn; sn cs]` on coordinates (i, i+1):
/// `T ← GᵀTG`, `Q ← QG`.
fn rotate(t: &mut DMatrix<f64>, q: &mut DMatrix<f64>, i: usize, cs: f64, sn: f64) {
    let n = t.nrows();
    for col in 0..n {
        let (a, b) = (t[(i, col)], t[(i + 1, col)]);
        t[(i, col)] = cs * a + sn * b;
        t[(i + 1, col)] = -sn * a + cs * b;
    }
    for row in 0..n {
        let (a, b) = (t[(row, i)], t[(row, i + 1)]);
        t[(row, i)] = cs * a + sn * b;
        t[(row, i + 1)] = -sn * a + cs * b;
    }
    for row in 0..q.nrows() {
        let (a, b) = (q[(row, i)], q[(row, i + 1)]);
        q[(row, i)] = cs * a + sn * b;
        q[(row, i + 1)] = -sn * a + cs * b;
    }
}

enum Block {
    Real(usize),
    Complex(usize, f64, f64),
}

/// Split the quasi-triangular factor into 1×1 and complex 2×2 blocks,
/// triangularising any 2×2 block whose eigenvalues are real.
fn blocks(t: &mut DMatrix<f64>, q: &mut DMatrix<f64>) -> Vec<Block> {
    let n = t.nrows();
    let mut out = Vec::new();
    let mut i = 0;
    while i < n {
        let sub = if i + 1 < n { t[(i + 1, i)] } else { 0.0 };
        let scale = t[(i, i)].abs() + if i + 1 < n { t[(i + 1, i + 1)].abs() } else { 0.0 };
        if i + 1 == n || sub.abs() <= f64::EPSILON * scale.max(f64::MIN_POSITIVE) {
            if i + 1 < n {
                t[(i + 1, i)] = 0.0;
            }
            out.push(Block::Real(i));
            i += 1;
            continue;
        }
        let (a, b, c, d) = (t[(i, i)], t[(i, i + 1)], sub, t[(i + 1, i + 1)]);
        let half_tr = 0.5 * (a + d);
        let disc = 0.25 * (a - d) * (a - d) + b * c;
        if disc < 0.0 {
            out.push(Block::Complex(i, half_tr, (-disc).sqrt()));
            i += 2;
            continue;
        }
        let lambda = half_tr + disc.sqrt().copysign(half_tr);
        let v1 = (b, lambda - a);
        let v2 = (lambda - d, c);
        let (x, y) = if v1.0.hypot(v1.1) >= v2.0.hypot(v2.1) { v1 } else { v2 };
        let norm = x.hypot(y);
        rotate(t, q, i, x / norm, y / norm);
        t[(i + 1, i)] = 0.0;
        out.push(Block::Real(i));
        out.push(Block::Real(i + 1));
        i += 2;
    }
    out
}

/// Replace explosive eigenvalues of `phi` by one and remove the intercept
/// along the replaced Schur directions. Non-explosive input is returned unchanged.
pub fn stabilize_transition(phi: &DMatrix<f64>, c_star: &DVector<f64>) -> Stabilization {
    let m = phi.nrows();
    if m == 0 || spectral_radius(phi) <= 1.0 + UNIT_TOL {
        return pass_through(phi, c_star);
    }
    let Some(schur) = Schur::try_new(phi.clone(), f64::EPSILON, 10_000) else {
        return scaled_fallback(phi, c_star);
    };
    let (mut q, mut t) = schur.unpack();
    let mut replaced = Vec::new();
    let mut dirs: Vec<usize> = Vec::new();
    for block in blocks(&mut t, &mut q) {
        match block {
            Block::Real(i) => {
                let v = t[(i, i)];
                if v.abs() > 1.0 + UNIT_TOL {
                    replaced.push(ReplacedEig { re: v, im: 0.0 });
                    t[(i, i)] = 1.0;
                    dirs.push(i);
                }
            }
            Block::Complex(i, re, im) => {
                let modulus = re.hypot(im);
                if modulus > 1.0 + UNIT_TOL {
                    replaced.push(ReplacedEig { re, im });
                    replaced.push(ReplacedEig { re, im: -im });
                    for r in i..i + 2 {
                        for s in i..i + 2 {
                            t[(r, s)] /= modulus;
                        }
                    }
                    dirs.extend([i, i + 1]);
                }
            }
        }
    }
    let phi_used = &q * t * q.transpose();
    let basis = DMatrix::from_fn(m, dirs.len(), |r, k| q[(r, dirs[k])]);
    let c_used = c_star - &basis * (basis.transpose() * c_star);
    let out = Stabilization {
        replaced_eigs: replaced,
        phi_used,
        c_used,
        replaced_directions: basis,
        fallback: false,
    };
    if out.phi_used.iter().all(|v| v.is_finite()) && spectral_radius(&out.phi_used) <= 1.0 + 1e-6 {
        out
    } else {
        scaled_fallback(phi, c_star)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use nalgebra::{dmatrix, dvector};

    #[test]
    fn stable_input_passes_through() {
        let phi = dmatrix![0.9, 0.1; 0.0, 0.5];
        let c = dvector![0.2, -0.1];
        let s = stabilize_transition(&phi, &c);
        assert_eq!(s.phi_used, phi);
        assert_eq!(s.c_used, c);
        assert!(s.is_identity());
    }

    #[test]
    fn scalar_explosive() {
        let s = stabilize_transition(&dmatrix![1.05], &dvector![0.3]);
        assert!((s.phi_used[(0, 0)] - 1.0).abs() < 1e-15);
        assert!(s.c_used[0].abs() < 1e-15);
        assert_eq!(s.replaced_eigs.len(), 1);
    }

    #[test]
    fn diagonal_case() {
        let s = stabilize_transition(&dmatrix![1.2, 0.0; 0.0, 0.5], &dvector![0.3, 0.4]);
        assert!((s.phi_used - dmatrix![1.0, 0.0; 0.0, 0.5]).amax() < 1e-14);
        assert!(s.c_used[0].abs() < 1e-14);
        assert!((s.c_used[1] - 0.4).abs() < 1e-14);
    }

    #[test]
    fn complex_pair_scaled_to_unit_circle() {
        let (r, th) = (1.1f64, 0.4f64);
        let phi = dmatrix![r * th.cos(), -r * th.sin(); r * th.sin(), r * th.cos()];
        let s = stabilize_transition(&phi, &dvector![1.0, 1.0]);
        assert_eq!(s.replaced_eigs.len(), 2);
        assert!((spectral_radius(&s.phi_used) - 1.0).abs() < 1e-12);
        assert!(s.c_used.amax() < 1e-14);
    }

    #[test]
    fn idempotent() {
        let phi = dmatrix![1.1, 0.3, 0.0; -0.2, 0.4, 0.1; 0.05, 0.0, -1.3];
        let c = dvector![0.5, -0.2, 0.1];
        let once = stabilize_transition(&phi, &c);
        let twice = stabilize_transition(&once.phi_used, &once.c_used);
        assert_eq!(once.phi_used, twice.phi_used);
        assert_eq!(once.c_used, twice.c_used);
        assert!(spectral_radius(&once.phi_used) <= 1.0 + UNIT_TOL);
    }
}
