//! Dense linear-algebra helpers shared by the estimators.

use nalgebra::{Cholesky, DMatrix, DVector, Dyn, Schur, SymmetricEigen};

use crate::error::{Error, Result};

/// Condition number above which a Gram matrix receives a ridge.
pub const RIDGE_CONDITION_LIMIT: f64 = 1e12;
/// Ridge intensity relative to `tr(Gram)/dim`.
pub const RIDGE_SCALE: f64 = 1e-8;

pub fn symmetrize(a: &DMatrix<f64>) -> DMatrix<f64> {
    let n = a.nrows();
    let mut out = a.clone();
    for i in 0..n {
        for j in 0..i {
            let v = 0.5 * (a[(i, j)] + a[(j, i)]);
            out[(i, j)] = v;
            out[(j, i)] = v;
        }
    }
    out
}

/// Eigen-decomposition of a symmetric matrix with eigenvalues sorted in
/// decreasing order (columns of the returned matrix follow the same order).
pub fn sym_eigen_desc(a: &DMatrix<f64>) -> (DVector<f64>, DMatrix<f64>) {
    let eig = SymmetricEigen::new(symmetrize(a));
    let n = a.nrows();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&i, &j| eig.eigenvalues[j].total_cmp(&eig.eigenvalues[i]));
    let values = DVector::from_iterator(n, order.iter().map(|&i| eig.eigenvalues[i]));
    let mut vectors = DMatrix::zeros(n, n);
    for (dst, &src) in order.iter().enumerate() {
        vectors.set_column(dst, &eig.eigenvectors.column(src));
    }
    (values, vectors)
}

/// `V diag(f(λ)) Vᵀ` for symmetric `a`.
pub fn sym_apply(a: &DMatrix<f64>, f: impl Fn(f64) -> f64) -> DMatrix<f64> {
    let eig = SymmetricEigen::new(symmetrize(a));
    let mapped = eig.eigenvalues.map(f);
    let v = &eig.eigenvectors;
    symmetrize(&(v * DMatrix::from_diagonal(&mapped) * v.transpose()))
}

/// Symmetric PSD square root; negative eigenvalues are treated as zero.
pub fn sym_sqrt(a: &DMatrix<f64>) -> DMatrix<f64> {
    sym_apply(a, |l| l.max(0.0).sqrt())
}

pub fn sym_inv_sqrt(a: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    let min = min_eigenvalue(a);
    if !(min > 0.0) {
        return Err(Error::Numerical(format!(
            "matrix is not positive definite (smallest eigenvalue {min:e})"
        )));
    }
    Ok(sym_apply(a, |l| 1.0 / l.sqrt()))
}

pub fn min_eigenvalue(a: &DMatrix<f64>) -> f64 {
    SymmetricEigen::new(symmetrize(a)).eigenvalues.min()
}

/// Raise every eigenvalue of a symmetric matrix to at least `floor`.
/// Returns the repaired matrix and whether any eigenvalue was moved.
pub fn clip_eigenvalues(a: &DMatrix<f64>, floor: f64) -> (DMatrix<f64>, bool) {
    let eig = SymmetricEigen::new(symmetrize(a));
    if eig.eigenvalues.iter().all(|&l| l >= floor) {
        return (symmetrize(a), false);
    }
    let mapped = eig.eigenvalues.map(|l| l.max(floor));
    let v = &eig.eigenvectors;
    (symmetrize(&(v * DMatrix::from_diagonal(&mapped) * v.transpose())), true)
}

/// Moore–Penrose inverse of a symmetric matrix; eigenvalues below
/// `rel_tol · max|λ|` are dropped.
pub fn pinv_sym(a: &DMatrix<f64>, rel_tol: f64) -> DMatrix<f64> {
    let eig = SymmetricEigen::new(symmetrize(a));
    let scale = eig.eigenvalues.amax();
    let cut = rel_tol * scale;
    let mapped = eig
        .eigenvalues
        .map(|l| if l.abs() > cut && l != 0.0 { 1.0 / l } else { 0.0 });
    let v = &eig.eigenvectors;
    symmetrize(&(v * DMatrix::from_diagonal(&mapped) * v.transpose()))
}

pub fn cholesky(a: &DMatrix<f64>) -> Result<Cholesky<f64, Dyn>> {
    Cholesky::new(symmetrize(a)).ok_or_else(|| Error::Numerical("matrix is not positive definite".into()))
}

pub fn spd_inverse(a: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    Ok(symmetrize(&cholesky(a)?.inverse()))
}

pub fn log_det_spd(a: &DMatrix<f64>) -> Result<f64> {
    let chol = cholesky(a)?;
    Ok(2.0 * chol.l_dirty().diagonal().iter().map(|d| d.ln()).sum::<f64>())
}

/// Spectral radius from the (possibly complex) eigenvalues of a real square matrix.
pub fn spectral_radius(a: &DMatrix<f64>) -> f64 {
    if a.nrows() == 0 {
        return 0.0;
    }
    match Schur::try_new(a.clone(), f64::EPSILON, 10_000) {
        Some(schur) => schur.complex_eigenvalues().iter().map(|z| z.norm()).fold(0.0, f64::max),
        None => a.clone().svd(false, false).singular_values.max(),
    }
}

/// Solve the discrete Lyapunov equation `X = A X Aᵀ + Q` by vectorisation.
/// Intended for the small state dimensions used here.
pub fn solve_discrete_lyapunov(a: &DMatrix<f64>, q: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    let n = a.nrows();
    let kron = a.kronecker(a);
    let lhs = DMatrix::<f64>::identity(n * n, n * n) - kron;
    let rhs = DVector::from_column_slice(q.as_slice());
    let sol = lhs
        .lu()
        .solve(&rhs)
        .ok_or_else(|| Error::Numerical("Lyapunov system is singular (unit-root transition)".into()))?;
    Ok(symmetrize(&DMatrix::from_column_slice(n, n, sol.as_slice())))
}

/// Half-vectorisation: stacks the columns of the lower triangle.
pub fn vech(a: &DMatrix<f64>) -> Vec<f64> {
    let n = a.nrows();
    let mut out = Vec::with_capacity(n * (n + 1) / 2);
    for j in 0..n {
        for i in j..n {
            out.push(a[(i, j)]);
        }
    }
    out
}

/// Gram matrix conditioned for solving: adds `RIDGE_SCALE · tr/dim` to the
/// diagonal when the condition number exceeds [`RIDGE_CONDITION_LIMIT`].
#[derive(Debug, Clone)]
pub struct ConditionedGram {
    pub gram: DMatrix<f64>,
    pub ridge: f64,
    chol: Cholesky<f64, Dyn>,
}

impl ConditionedGram {
    pub fn new(gram: DMatrix<f64>) -> Result<Self> {
        let gram = symmetrize(&gram);
        let dim = gram.nrows().max(1) as f64;
        let eig = SymmetricEigen::new(gram.clone());
        let (lo, hi) = (eig.eigenvalues.min(), eig.eigenvalues.max());
        let ill = !(lo > 0.0) || hi / lo > RIDGE_CONDITION_LIMIT;
        let ridge = if ill { RIDGE_SCALE * gram.trace() / dim } else { 0.0 };
        if !(ridge >= 0.0) || (ill && ridge == 0.0) {
            return Err(Error::Numerical("regressor Gram matrix is zero or non-finite".into()));
        }
        let mut conditioned = gram;
        for i in 0..conditioned.nrows() {
            conditioned[(i, i)] += ridge;
        }
        let chol = Cholesky::new(conditioned.clone())
            .ok_or_else(|| Error::Numerical("rank deficiency beyond ridge fallback".into()))?;
        Ok(Self {
            gram: conditioned,
            ridge,
            chol,
        })
    }

    pub fn ridged(&self) -> bool {
        self.ridge > 0.0
    }

    pub fn solve(&self, rhs: &DVector<f64>) -> DVector<f64> {
        self.chol.solve(rhs)
    }
}

/// Least squares of every column of `y` on `x` (rows are observations).
/// Returns coefficients as a `y.ncols() × x.ncols()` matrix (one row per equation).
pub fn least_squares_rows(x: &DMatrix<f64>, y: &DMatrix<f64>) -> Result<(DMatrix<f64>, bool)> {
    let gram = ConditionedGram::new(x.transpose() * x)?;
    let xty = x.transpose() * y;
    let mut coef = DMatrix::zeros(y.ncols(), x.ncols());
    for j in 0..y.ncols() {
        let sol = gram.solve(&xty.column(j).into_owned());
        coef.set_row(j, &sol.transpose());
    }
    Ok((coef, gram.ridged()))
}

#[cfg(test)]
mod tests {
    use super::*;
    use nalgebra::dmatrix;

    #[test]
    fn lyapunov_scalar() {
        let a = dmatrix![0.5];
        let q = dmatrix![0.75];
        let x = solve_discrete_lyapunov(&a, &q).unwrap();
        assert!((x[(0, 0)] - 1.0).abs() < 1e-14);
    }

    #[test]
    fn vech_order() {
        let a = dmatrix![1.0, 2.0; 2.0, 3.0];
        assert_eq!(vech(&a), vec![1.0, 2.0, 3.0]);
    }

    #[test]
    fn spectral_radius_rotation() {
        let a = dmatrix![0.0, -0.9; 0.9, 0.0];
        assert!((spectral_radius(&a) - 0.9).abs() < 1e-12);
    }

    #[test]
    fn ridge_kicks_in_for_singular_gram() {
        let g = dmatrix![1.0, 0.0; 0.0, 0.0];
        let c = ConditionedGram::new(g).unwrap();
        assert!(c.ridged());
    }
}
