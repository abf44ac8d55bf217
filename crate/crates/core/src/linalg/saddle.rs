use super::cholesky::solve_spd;
use super::dense::DenseMatrix;
use super::qr::householder_qr;
use crate::error::{DlsError, Result};
use crate::scalar::Scalar;

/// Solves `[A C*; C 0][u; w] = [f; d]` by Householder QR of the full block matrix.
///
/// An empty `C` (zero rows) reduces to `solve_spd(A, f)` with empty `w`.
pub fn saddle_solve<T: Scalar>(
    a: &DenseMatrix<T>,
    c: &DenseMatrix<T>,
    f: &[T],
    d: &[T],
) -> Result<(Vec<T>, Vec<T>)> {
    let n = a.rows();
    let l = c.rows();
    if !a.is_square() || f.len() != n {
        return Err(DlsError::DimensionMismatch {
            context: "saddle_solve (A, f)",
            expected: n,
            found: f.len(),
        });
    }
    if l == 0 {
        return Ok((solve_spd(a, f)?, Vec::new()));
    }
    if c.cols() != n || d.len() != l {
        return Err(DlsError::DimensionMismatch {
            context: "saddle_solve (C, d)",
            expected: n,
            found: c.cols(),
        });
    }
    if l > n {
        return Err(DlsError::SingularSaddle);
    }
    if householder_qr(&c.adjoint())?.rank_deficiency().is_some() {
        return Err(DlsError::SingularSaddle);
    }
    let k = DenseMatrix::from_fn(n + l, n + l, |i, j| match (i < n, j < n) {
        (true, true) => a[(i, j)],
        (true, false) => c[(j - n, i)].conj(),
        (false, true) => c[(i - n, j)],
        (false, false) => T::zero(),
    });
    let mut rhs = f.to_vec();
    rhs.extend_from_slice(d);
    let qr = householder_qr(&k)?;
    let sol = qr
        .solve_least_squares(&rhs)
        .map_err(|_| DlsError::SingularSaddle)?;
    let (u, w) = sol.split_at(n);
    Ok((u.to_vec(), w.to_vec()))
}
