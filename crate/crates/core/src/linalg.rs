//! Small dense linear-algebra helpers on top of nalgebra.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};

/// Spectral radius (largest eigenvalue modulus).
pub fn spectral_radius(a: &DMatrix<f64>) -> f64 {
    a.complex_eigenvalues()
        .iter()
        .map(|z| z.norm())
        .fold(0.0, f64::max)
}

/// Eigenvalues as `(re, im)` pairs.
pub fn eigenvalues(a: &DMatrix<f64>) -> Vec<(f64, f64)> {
    a.complex_eigenvalues().iter().map(|z| (z.re, z.im)).collect()
}

pub fn is_schur(a: &DMatrix<f64>) -> bool {
    spectral_radius(a) < 1.0
}

/// Zero-order-hold discretisation of `x' = A x + B u` with sample time
/// `dt`, via the exponential of the augmented block `[[A, B], [0, 0]] dt`.
pub fn zoh(a: &DMatrix<f64>, b: &DMatrix<f64>, dt: f64) -> (DMatrix<f64>, DMatrix<f64>) {
    let n = a.nrows();
    let m = b.ncols();
    let mut aug = DMatrix::zeros(n + m, n + m);
    aug.view_mut((0, 0), (n, n)).copy_from(&(a * dt));
    aug.view_mut((0, n), (n, m)).copy_from(&(b * dt));
    let e = aug.exp();
    (
        e.view((0, 0), (n, n)).into_owned(),
        e.view((0, n), (n, m)).into_owned(),
    )
}

/// Solve `A^T P A - P + Q = 0` for `P`.
///
/// Uses the vectorised form `(A^T (x) A^T - I) vec(P) = -vec(Q)` with one
/// round of iterative refinement; intended for the small virtual-state
/// dimensions used by the command governor.
pub fn solve_discrete_lyapunov(a: &DMatrix<f64>, q: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    let n = a.nrows();
    if a.ncols() != n || q.nrows() != n || q.ncols() != n {
        return Err(Error::DimensionMismatch {
            expected: n,
            got: q.nrows(),
        });
    }
    let at = a.transpose();
    let k = at.kronecker(&at) - DMatrix::<f64>::identity(n * n, n * n);
    let lu = k.clone().lu();
    let rhs = -DVector::from_column_slice(q.as_slice());
    let mut x = lu.solve(&rhs).ok_or(Error::Singular("Lyapunov operator"))?;
    let resid = &rhs - &k * &x;
    if let Some(dx) = lu.solve(&resid) {
        x += dx;
    }
    let p = DMatrix::from_column_slice(n, n, x.as_slice());
    // Symmetrise away round-off.
    Ok((&p + p.transpose()) * 0.5)
}

/// Infinity norm (max absolute row sum).
pub fn norm_inf(a: &DMatrix<f64>) -> f64 {
    a.row_iter()
        .map(|r| r.iter().map(|x| x.abs()).sum::<f64>())
        .fold(0.0, f64::max)
}

/// `A^T P A - P + Q`.
pub fn lyapunov_residual(a: &DMatrix<f64>, p: &DMatrix<f64>, q: &DMatrix<f64>) -> DMatrix<f64> {
    a.transpose() * p * a - p + q
}
