use nalgebra::DMatrix;

use super::dense::DenseMatrix;
use crate::error::{DlsError, Result};
use crate::scalar::{Scalar, C64};

/// Eigenvalues of a Hermitian matrix, computed in complex double precision.
pub fn hermitian_eigenvalues<T: Scalar>(m: &DenseMatrix<T>) -> Vec<f64> {
    assert!(m.is_square());
    let n = m.rows();
    if T::IS_COMPLEX {
        let a = DMatrix::<C64>::from_fn(n, n, |i, j| m[(i, j)].to_c64());
        a.symmetric_eigenvalues().iter().copied().collect()
    } else {
        let a = DMatrix::<f64>::from_fn(n, n, |i, j| m[(i, j)].to_c64().re);
        a.symmetric_eigenvalues().iter().copied().collect()
    }
}

/// Nonzero singular values in decreasing order.
///
/// Hermitian input is handled directly (`σ = |λ|`), anything else through the
/// eigenvalues of `M*M`.
pub fn singular_values<T: Scalar>(m: &DenseMatrix<T>) -> Vec<f64> {
    let direct = m.is_square() && m.is_hermitian(1e3 * T::machine_epsilon());
    let mut sv: Vec<f64> = if direct {
        hermitian_eigenvalues(m).into_iter().map(f64::abs).collect()
    } else {
        let mm = m.cast::<C64>().gram();
        hermitian_eigenvalues(&mm)
            .into_iter()
            .map(|l| l.max(0.0).sqrt())
            .collect()
    };
    sv.sort_by(|a, b| b.total_cmp(a));
    let Some(&max) = sv.first() else {
        return sv;
    };
    // Eigenvalues of M*M resolve singular values only down to sqrt(ε)·σ₁.
    let dim = m.rows().max(m.cols()) as f64;
    let cutoff = if direct {
        dim * f64::EPSILON * max
    } else {
        (dim * f64::EPSILON).sqrt() * max
    };
    sv.retain(|&s| s > cutoff);
    sv
}

/// `σ₁/σ_R` over the nonzero singular values.
pub fn condition_number<T: Scalar>(m: &DenseMatrix<T>) -> Result<f64> {
    let sv = singular_values(m);
    match (sv.first(), sv.last()) {
        (Some(&hi), Some(&lo)) if hi > 0.0 => Ok(hi / lo),
        _ => Err(DlsError::ZeroMatrix),
    }
}

/// Condition number of a Hermitian positive semidefinite matrix from its
/// eigenvalues, used when `A = B̃*B̃` is formed separately.
pub fn condition_number_hermitian<T: Scalar>(m: &DenseMatrix<T>) -> Result<f64> {
    let mut ev: Vec<f64> = hermitian_eigenvalues(m).into_iter().map(f64::abs).collect();
    ev.sort_by(|a, b| b.total_cmp(a));
    let Some(&max) = ev.first() else {
        return Err(DlsError::ZeroMatrix);
    };
    if max == 0.0 {
        return Err(DlsError::ZeroMatrix);
    }
    let cutoff = m.rows() as f64 * f64::EPSILON * max;
    let min = ev.iter().rev().find(|&&v| v > cutoff).copied().unwrap_or(max);
    Ok(max / min)
}
