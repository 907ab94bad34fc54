//! Small dense linear-algebra helpers shared by the backends.

use nalgebra::{DMatrix, SymmetricEigen};

use crate::error::{Error, Result};

/// Relative tolerance used when checking user-supplied weight matrices.
pub const PSD_TOL: f64 = 1e-10;

pub fn max_abs(m: &DMatrix<f64>) -> f64 {
    m.iter().fold(0.0_f64, |acc, v| acc.max(v.abs()))
}

pub fn asymmetry(m: &DMatrix<f64>) -> f64 {
    let mut worst = 0.0_f64;
    for i in 0..m.nrows() {
        for j in (i + 1)..m.ncols() {
            worst = worst.max((m[(i, j)] - m[(j, i)]).abs());
        }
    }
    worst
}

pub fn symmetrize(m: &DMatrix<f64>) -> DMatrix<f64> {
    (m + m.transpose()) * 0.5
}

/// Checks that `m` is square, symmetric and positive semidefinite up to
/// `tol * max(1, |m|_max)`.
pub fn check_psd(name: &str, m: &DMatrix<f64>, tol: f64) -> Result<()> {
    if !m.is_square() {
        return Err(Error::dim(format!(
            "{name} must be square, got {}x{}",
            m.nrows(),
            m.ncols()
        )));
    }
    if m.iter().any(|v| !v.is_finite()) {
        return Err(Error::NotPsd(format!("{name} has non-finite entries")));
    }
    let scale = max_abs(m).max(1.0);
    let asym = asymmetry(m);
    if asym > tol * scale {
        return Err(Error::NotPsd(format!("{name} is not symmetric (asymmetry {asym:e})")));
    }
    if m.nrows() == 0 {
        return Ok(());
    }
    let eig = SymmetricEigen::new(symmetrize(m));
    let min = eig.eigenvalues.min();
    if min < -tol * scale {
        return Err(Error::NotPsd(format!("{name} has eigenvalue {min:e}")));
    }
    Ok(())
}

/// Symmetric square root of a PSD matrix; tiny negative eigenvalues are
/// clipped to zero.
pub fn psd_sqrt(m: &DMatrix<f64>) -> DMatrix<f64> {
    let eig = SymmetricEigen::new(symmetrize(m));
    let vals = eig.eigenvalues.map(|v| v.max(0.0).sqrt());
    &eig.eigenvectors * DMatrix::from_diagonal(&vals) * eig.eigenvectors.transpose()
}

/// Symmetrizes `m` and clips eigenvalues in `[-rel_tol * |m|, 0)` to zero.
///
/// Positive definite inputs are detected with a Cholesky attempt and returned
/// after symmetrization only. Eigenvalues below the tolerance are an error.
pub fn repair_psd(name: &str, m: &DMatrix<f64>, rel_tol: f64) -> Result<DMatrix<f64>> {
    let sym = symmetrize(m);
    if sym.nrows() == 0 || sym.clone().cholesky().is_some() {
        return Ok(sym);
    }
    let scale = max_abs(&sym).max(f64::MIN_POSITIVE);
    let eig = SymmetricEigen::new(sym);
    let min = eig.eigenvalues.min();
    if min < -rel_tol * scale {
        return Err(Error::NotPsd(format!(
            "{name} has eigenvalue {min:e} (scale {scale:e})"
        )));
    }
    let vals = eig.eigenvalues.map(|v| v.max(0.0));
    let rebuilt = &eig.eigenvectors * DMatrix::from_diagonal(&vals) * eig.eigenvectors.transpose();
    Ok(symmetrize(&rebuilt))
}

/// A square-root factor `L` with `L L^T = m` for PSD `m`: lower Cholesky when it
/// exists, otherwise `V sqrt(Λ)` from a clipped eigendecomposition.
pub fn psd_factor(name: &str, m: &DMatrix<f64>, rel_tol: f64) -> Result<DMatrix<f64>> {
    let sym = symmetrize(m);
    if let Some(ch) = sym.clone().cholesky() {
        return Ok(ch.l());
    }
    let scale = max_abs(&sym).max(f64::MIN_POSITIVE);
    let eig = SymmetricEigen::new(sym);
    let min = eig.eigenvalues.min();
    if min < -rel_tol * scale {
        return Err(Error::NotPsd(format!(
            "{name}: cholesky failed and eigenvalue {min:e} is below tolerance"
        )));
    }
    let vals = eig.eigenvalues.map(|v| v.max(0.0).sqrt());
    Ok(&eig.eigenvectors * DMatrix::from_diagonal(&vals))
}

/// Log-determinant of a symmetric positive definite matrix via Cholesky.
pub fn spd_log_det(name: &str, m: &DMatrix<f64>) -> Result<f64> {
    let ch = symmetrize(m)
        .cholesky()
        .ok_or_else(|| Error::Singular(format!("{name} is not positive definite")))?;
    Ok(2.0 * ch.l().diagonal().iter().map(|v| v.ln()).sum::<f64>())
}

/// Pairwise (cascade) summation; the reduction order depends only on the
/// slice length.
pub fn pairwise_sum(xs: &[f64]) -> f64 {
    if xs.len() <= 8 {
        return xs.iter().sum();
    }
    let mid = xs.len() / 2;
    pairwise_sum(&xs[..mid]) + pairwise_sum(&xs[mid..])
}

pub fn trace_product(a: &DMatrix<f64>, b: &DMatrix<f64>) -> f64 {
    // tr(A B) without forming the product
    let mut acc = 0.0;
    for i in 0..a.nrows() {
        for k in 0..a.ncols() {
            acc += a[(i, k)] * b[(k, i)];
        }
    }
    acc
}
