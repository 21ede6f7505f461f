//! Dense linear-algebra helpers used throughout the crate: vectorization,
//! Kronecker products, the vec-permutation matrix, spectral norms, and
//! symmetric positive-definiteness checks.
//!
//! All matrices are `nalgebra` dynamic matrices stored in column-major
//! order. Vectorization therefore stacks columns, which is the convention
//! every identity in this crate relies on.

use nalgebra::{DMatrix, DVector};

/// Stacks the columns of `m` into a single vector.
pub fn vec_mat(m: &DMatrix<f64>) -> DVector<f64> {
    DVector::from_column_slice(m.as_slice())
}

/// Inverse of [`vec_mat`]: reshapes a length `rows * cols` vector back
/// into a matrix, consuming entries column by column.
pub fn unvec(v: &DVector<f64>, rows: usize, cols: usize) -> DMatrix<f64> {
    assert_eq!(v.len(), rows * cols, "unvec: length mismatch");
    DMatrix::from_column_slice(rows, cols, v.as_slice())
}

/// Kronecker product `a ⊗ b`.
///
/// Satisfies `vec(A X B) = (Bᵀ ⊗ A) vec(X)` for conforming `X`.
pub fn kron(a: &DMatrix<f64>, b: &DMatrix<f64>) -> DMatrix<f64> {
    a.kronecker(b)
}

/// The vec-permutation (commutation) matrix `V_{n,m}`, defined by
/// `V_{n,m} vec(A) = vec(Aᵀ)` for every `n × m` matrix `A`.
pub fn vec_permutation(n: usize, m: usize) -> DMatrix<f64> {
    assert!(n >= 1 && m >= 1, "vec_permutation: dimensions must be >= 1");
    let mut v = DMatrix::zeros(n * m, n * m);
    // vec(A) index of entry (i, j) is j*n + i; vec(Aᵀ) index is i*m + j.
    for i in 0..n {
        for j in 0..m {
            v[(i * m + j, j * n + i)] = 1.0;
        }
    }
    v
}

/// Largest singular value of `m`.
pub fn spectral_norm(m: &DMatrix<f64>) -> f64 {
    if m.is_empty() {
        return 0.0;
    }
    m.singular_values()[0]
}

/// Spectral radius: largest eigenvalue magnitude.
pub fn spectral_radius(m: &DMatrix<f64>) -> f64 {
    assert!(m.is_square(), "spectral_radius: matrix must be square");
    m.complex_eigenvalues().iter().map(|l| l.norm()).fold(0.0, f64::max)
}

/// Returns true when `m` is symmetric within absolute tolerance `tol`.
pub fn is_symmetric(m: &DMatrix<f64>, tol: f64) -> bool {
    if !m.is_square() {
        return false;
    }
    let n = m.nrows();
    for i in 0..n {
        for j in (i + 1)..n {
            if (m[(i, j)] - m[(j, i)]).abs() > tol {
                return false;
            }
        }
    }
    true
}

/// Smallest eigenvalue of a symmetric matrix.
pub fn min_symmetric_eigenvalue(m: &DMatrix<f64>) -> f64 {
    m.clone().symmetric_eigen().eigenvalues.min()
}

/// Returns true when `m` is symmetric (tolerance `sym_tol`) and has all
/// eigenvalues strictly greater than zero.
pub fn is_symmetric_positive_definite(m: &DMatrix<f64>, sym_tol: f64) -> bool {
    is_symmetric(m, sym_tol) && min_symmetric_eigenvalue(m) > 0.0
}

/// Frobenius norm.
pub fn frobenius_norm(m: &DMatrix<f64>) -> f64 {
    m.norm()
}
