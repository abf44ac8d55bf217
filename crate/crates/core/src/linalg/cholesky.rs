use super::dense::DenseMatrix;
use crate::error::{DlsError, Result};
use crate::scalar::Scalar;
use num_traits::{Float, One, Zero};

/// Lower Cholesky factor `L` with real positive diagonal, `G = LL*`.
pub fn cholesky<T: Scalar>(g: &DenseMatrix<T>) -> Result<DenseMatrix<T>> {
    if !g.is_square() {
        return Err(DlsError::DimensionMismatch {
            context: "cholesky",
            expected: g.rows(),
            found: g.cols(),
        });
    }
    if !g.is_hermitian(100.0 * T::machine_epsilon()) {
        return Err(DlsError::NotHermitian);
    }
    let n = g.rows();
    let mut l = DenseMatrix::<T>::zeros(n, n);
    for j in 0..n {
        let mut d = g[(j, j)].re();
        for k in 0..j {
            d = d - l[(j, k)].modulus_sq();
        }
        if !(d > T::Real::zero()) {
            return Err(DlsError::NotPositiveDefinite { index: j });
        }
        let ljj = d.sqrt();
        l[(j, j)] = T::from_real(ljj);
        let inv = T::Real::one() / ljj;
        for i in (j + 1)..n {
            let mut s = g[(i, j)];
            let (li, lj) = (l.row(i), l.row(j));
            for k in 0..j {
                s -= li[k] * lj[k].conj();
            }
            l[(i, j)] = s.scale(inv);
        }
    }
    Ok(l)
}

fn check_triangular_dims<T: Scalar>(
    context: &'static str,
    t: &DenseMatrix<T>,
    rhs_rows: usize,
) -> Result<()> {
    if !t.is_square() {
        return Err(DlsError::DimensionMismatch {
            context,
            expected: t.rows(),
            found: t.cols(),
        });
    }
    if t.rows() != rhs_rows {
        return Err(DlsError::DimensionMismatch {
            context,
            expected: t.rows(),
            found: rhs_rows,
        });
    }
    if let Some(index) = (0..t.rows()).find(|&i| t[(i, i)] == T::zero()) {
        return Err(DlsError::SingularTriangular { index });
    }
    Ok(())
}

/// Solves `LX = M` for lower-triangular `L`.
pub fn triangular_solve<T: Scalar>(l: &DenseMatrix<T>, m: &DenseMatrix<T>) -> Result<DenseMatrix<T>> {
    check_triangular_dims("triangular_solve", l, m.rows())?;
    let (n, c) = m.shape();
    let mut x = m.clone();
    for i in 0..n {
        for k in 0..i {
            let lik = l[(i, k)];
            if lik == T::zero() {
                continue;
            }
            for j in 0..c {
                let v = x[(k, j)];
                x[(i, j)] -= lik * v;
            }
        }
        let d = l[(i, i)];
        for v in x.row_mut(i) {
            *v /= d;
        }
    }
    Ok(x)
}

/// Solves `Lx = b` in place.
pub fn lower_solve_vec<T: Scalar>(l: &DenseMatrix<T>, b: &mut [T]) -> Result<()> {
    check_triangular_dims("lower_solve_vec", l, b.len())?;
    for i in 0..b.len() {
        let row = l.row(i);
        let mut s = b[i];
        for k in 0..i {
            s -= row[k] * b[k];
        }
        b[i] = s / row[i];
    }
    Ok(())
}

/// Solves `L*x = b` in place, `L` lower triangular.
pub fn lower_adjoint_solve_vec<T: Scalar>(l: &DenseMatrix<T>, b: &mut [T]) -> Result<()> {
    check_triangular_dims("lower_adjoint_solve_vec", l, b.len())?;
    let n = b.len();
    for i in (0..n).rev() {
        let mut s = b[i];
        for k in (i + 1)..n {
            s -= l[(k, i)].conj() * b[k];
        }
        b[i] = s / l[(i, i)].conj();
    }
    Ok(())
}

/// Solves `Rx = b` in place, `R` upper triangular.
pub fn upper_solve_vec<T: Scalar>(r: &DenseMatrix<T>, b: &mut [T]) -> Result<()> {
    check_triangular_dims("upper_solve_vec", r, b.len())?;
    let n = b.len();
    for i in (0..n).rev() {
        let row = r.row(i);
        let mut s = b[i];
        for k in (i + 1)..n {
            s -= row[k] * b[k];
        }
        b[i] = s / row[i];
    }
    Ok(())
}

/// Solves `RX = M` for upper-triangular `R`.
pub fn upper_solve<T: Scalar>(r: &DenseMatrix<T>, m: &DenseMatrix<T>) -> Result<DenseMatrix<T>> {
    check_triangular_dims("upper_solve", r, m.rows())?;
    let (n, c) = m.shape();
    let mut x = m.clone();
    for i in (0..n).rev() {
        for k in (i + 1)..n {
            let rik = r[(i, k)];
            if rik == T::zero() {
                continue;
            }
            for j in 0..c {
                let v = x[(k, j)];
                x[(i, j)] -= rik * v;
            }
        }
        let d = r[(i, i)];
        for v in x.row_mut(i) {
            *v /= d;
        }
    }
    Ok(x)
}

/// Solves `Au = f` for Hermitian positive definite `A` via Cholesky.
pub fn solve_spd<T: Scalar>(a: &DenseMatrix<T>, f: &[T]) -> Result<Vec<T>> {
    if a.rows() != f.len() {
        return Err(DlsError::DimensionMismatch {
            context: "solve_spd",
            expected: a.rows(),
            found: f.len(),
        });
    }
    let l = cholesky(a)?;
    let mut u = f.to_vec();
    lower_solve_vec(&l, &mut u)?;
    lower_adjoint_solve_vec(&l, &mut u)?;
    Ok(u)
}
