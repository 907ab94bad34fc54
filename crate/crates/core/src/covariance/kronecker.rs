//! Column-stacking and Kronecker products.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};

/// Stacks the columns of `a`: `vec(A)_p = A_{ij}` with `p = j d + i`.
pub fn vec(a: &DMatrix<f64>) -> DVector<f64> {
    // nalgebra storage is column-major already
    DVector::from_column_slice(a.as_slice())
}

/// Inverse of [`vec`] for a `rows x cols` matrix.
pub fn unvec(v: &DVector<f64>, rows: usize, cols: usize) -> Result<DMatrix<f64>> {
    if rows * cols != v.len() {
        return Err(Error::dim(format!(
            "cannot reshape a vector of length {} into {rows}x{cols}",
            v.len()
        )));
    }
    Ok(DMatrix::from_column_slice(rows, cols, v.as_slice()))
}

/// Kronecker product: block `(i, j)` of the result is `a[(i, j)] * b`.
pub fn kron(a: &DMatrix<f64>, b: &DMatrix<f64>) -> DMatrix<f64> {
    a.kronecker(b)
}

/// `I_m ⊗ a`.
pub fn kron_identity(m: usize, a: &DMatrix<f64>) -> DMatrix<f64> {
    DMatrix::<f64>::identity(m, m).kronecker(a)
}
