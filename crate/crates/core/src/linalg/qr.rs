use num_traits::{One, Zero};

use super::cholesky::upper_solve_vec;
use super::dense::DenseMatrix;
use crate::error::{DlsError, Result};
use crate::scalar::{RealScalar, Scalar};

/// Compact Householder QR, `M = QR` with `Q = H_0 ⋯ H_{n−1} D`.
///
/// Reflector `k` is `H_k = I − τ_k v_k v_k*`, `v_k` stored below the diagonal of
/// column `k` with an implicit unit leading entry. `D` is a diagonal of ±1 that
/// makes the diagonal of `R` real and nonnegative.
#[derive(Debug, Clone)]
pub struct QrFactors<T: Scalar> {
    packed: DenseMatrix<T>,
    tau: Vec<T>,
    signs: Vec<T::Real>,
}

/// Generates `(τ, β)` and scales `x[1..]` into the reflector tail so that
/// `H* [α; x] = [β; 0]` with real `β`.
fn make_reflector<T: Scalar>(x: &mut [T]) -> (T, T::Real) {
    let alpha = x[0];
    let tail = crate::scalar::norm2(&x[1..]);
    let zero = T::Real::zero();
    if tail == 0.0 && alpha.im() == zero {
        return (T::zero(), alpha.re());
    }
    let norm = <T::Real as RealScalar>::of_f64(alpha.to_c64().norm().hypot(tail));
    let beta = if alpha.re() >= zero { -norm } else { norm };
    let tau = (T::from_real(beta) - alpha) / T::from_real(beta);
    let inv = T::one() / (alpha - T::from_real(beta));
    for v in &mut x[1..] {
        *v *= inv;
    }
    x[0] = T::one();
    (tau, beta)
}

impl<T: Scalar> QrFactors<T> {
    pub fn rows(&self) -> usize {
        self.packed.rows()
    }

    pub fn cols(&self) -> usize {
        self.packed.cols()
    }

    /// Upper-triangular factor, `cols × cols`.
    pub fn r(&self) -> DenseMatrix<T> {
        let n = self.cols();
        DenseMatrix::from_fn(n, n, |i, j| {
            if j >= i {
                self.packed[(i, j)]
            } else {
                T::zero()
            }
        })
    }

    pub fn r_diagonal(&self) -> Vec<T::Real> {
        (0..self.cols()).map(|k| self.packed[(k, k)].re()).collect()
    }

    /// Applies `H_k*` to `y[k..]`.
    fn reflect_adjoint(&self, k: usize, y: &mut [T]) {
        let tau = self.tau[k];
        if tau == T::zero() {
            return;
        }
        let m = self.rows();
        let mut s = y[k];
        for i in (k + 1)..m {
            s += self.packed[(i, k)].conj() * y[i];
        }
        s *= tau.conj();
        y[k] -= s;
        for i in (k + 1)..m {
            y[i] -= self.packed[(i, k)] * s;
        }
    }

    /// Applies `H_k` to `y[k..]`.
    fn reflect(&self, k: usize, y: &mut [T]) {
        let tau = self.tau[k];
        if tau == T::zero() {
            return;
        }
        let m = self.rows();
        let mut s = y[k];
        for i in (k + 1)..m {
            s += self.packed[(i, k)].conj() * y[i];
        }
        s *= tau;
        y[k] -= s;
        for i in (k + 1)..m {
            y[i] -= self.packed[(i, k)] * s;
        }
    }

    /// `Q* y` for a full-length vector.
    pub fn apply_qt(&self, y: &mut [T]) {
        assert_eq!(y.len(), self.rows());
        for k in 0..self.cols() {
            self.reflect_adjoint(k, y);
        }
        for (k, &s) in self.signs.iter().enumerate() {
            y[k] = y[k].scale(s);
        }
    }

    /// `Q y` for a full-length vector.
    pub fn apply_q(&self, y: &mut [T]) {
        assert_eq!(y.len(), self.rows());
        for (k, &s) in self.signs.iter().enumerate() {
            y[k] = y[k].scale(s);
        }
        for k in (0..self.cols()).rev() {
            self.reflect(k, y);
        }
    }

    /// `Q* X` column by column.
    pub fn apply_qt_matrix(&self, x: &DenseMatrix<T>) -> DenseMatrix<T> {
        let mut out = x.clone();
        let mut col = vec![T::zero(); x.rows()];
        for j in 0..x.cols() {
            for (i, c) in col.iter_mut().enumerate() {
                *c = x[(i, j)];
            }
            self.apply_qt(&mut col);
            out.set_column(j, &col);
        }
        out
    }

    /// Thin `Q` with orthonormal columns, `rows × cols`.
    pub fn thin_q(&self) -> DenseMatrix<T> {
        let (m, n) = (self.rows(), self.cols());
        let mut q = DenseMatrix::zeros(m, n);
        let mut e = vec![T::zero(); m];
        for j in 0..n {
            e.iter_mut().for_each(|v| *v = T::zero());
            e[j] = T::one();
            self.apply_q(&mut e);
            q.set_column(j, &e);
        }
        q
    }

    /// Orthogonal projection of `y` onto the complement of `range(Q₁)`.
    pub fn project_complement(&self, y: &mut [T]) {
        self.apply_qt(y);
        for v in &mut y[..self.cols()] {
            *v = T::zero();
        }
        self.apply_q(y);
    }

    /// Index of the first diagonal entry of `R` below `rows·ε·max|R_kk|`.
    pub fn rank_deficiency(&self) -> Option<(usize, f64)> {
        let d: Vec<f64> = self.r_diagonal().iter().map(|v| v.as_f64()).collect();
        let max = d.iter().cloned().fold(0.0, f64::max);
        if max == 0.0 {
            return (!d.is_empty()).then_some((0, 0.0));
        }
        let threshold = self.rows() as f64 * T::machine_epsilon() * max;
        d.iter()
            .position(|&v| v < threshold)
            .map(|k| (k, d[k] / max))
    }

    /// Solves `min ‖Mx − b‖₂` using the stored factors.
    pub fn solve_least_squares(&self, b: &[T]) -> Result<Vec<T>> {
        if b.len() != self.rows() {
            return Err(DlsError::DimensionMismatch {
                context: "least_squares_qr",
                expected: self.rows(),
                found: b.len(),
            });
        }
        if let Some((column, ratio)) = self.rank_deficiency() {
            return Err(DlsError::RankDeficient { column, ratio });
        }
        let mut y = b.to_vec();
        self.apply_qt(&mut y);
        y.truncate(self.cols());
        upper_solve_vec(&self.r(), &mut y)?;
        Ok(y)
    }
}

/// Householder QR without pivoting. Requires `rows ≥ cols`.
pub fn householder_qr<T: Scalar>(m: &DenseMatrix<T>) -> Result<QrFactors<T>> {
    let (rows, cols) = m.shape();
    if rows < cols {
        return Err(DlsError::DimensionMismatch {
            context: "householder_qr (rows ≥ cols)",
            expected: cols,
            found: rows,
        });
    }
    // Column-major working copy keeps the reflector updates contiguous.
    let mut cm: Vec<Vec<T>> = (0..cols).map(|j| m.column(j)).collect();
    let mut tau = Vec::with_capacity(cols);
    let mut signs = Vec::with_capacity(cols);
    for k in 0..cols {
        let (t, beta) = make_reflector(&mut cm[k][k..]);
        tau.push(t);
        let (head, rest) = cm.split_at_mut(k + 1);
        let v = &head[k][k..];
        if t != T::zero() {
            let tc = t.conj();
            for col in rest.iter_mut() {
                let c = &mut col[k..];
                let mut s = c[0];
                for i in 1..v.len() {
                    s += v[i].conj() * c[i];
                }
                s *= tc;
                c[0] -= s;
                for i in 1..v.len() {
                    c[i] -= v[i] * s;
                }
            }
        }
        let sign = if beta < T::Real::zero() {
            -T::Real::one()
        } else {
            T::Real::one()
        };
        signs.push(sign);
        for col in rest.iter_mut() {
            col[k] = col[k].scale(sign);
        }
        cm[k][k] = T::from_real(beta * sign);
    }
    let packed = DenseMatrix::from_fn(rows, cols, |i, j| cm[j][i]);
    Ok(QrFactors { packed, tau, signs })
}

/// `argmin ‖Mx − b‖₂` via Householder QR.
pub fn least_squares_qr<T: Scalar>(m: &DenseMatrix<T>, b: &[T]) -> Result<Vec<T>> {
    householder_qr(m)?.solve_least_squares(b)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::cholesky::solve_spd;
    use crate::linalg::testutil::*;
    use crate::scalar::{C32, C64};
    use proptest::prelude::*;

    fn check_invariants<T: Scalar>(m: &DenseMatrix<T>) {
        let qr = householder_qr(m).unwrap();
        let q = qr.thin_q();
        let r = qr.r();
        let eps = T::machine_epsilon();
        let n = m.cols();
        let ortho = q.adjoint_matmul(&q).sub(&DenseMatrix::identity(n)).frobenius_norm();
        assert!(ortho <= 100.0 * eps * n.max(1) as f64, "orthogonality {ortho}");
        let rec = q.matmul(&r).sub(m).frobenius_norm();
        assert!(rec <= 100.0 * eps * m.frobenius_norm(), "reconstruction {rec}");
        assert!(r.is_upper_triangular());
        for d in r.diag() {
            assert!(d.im() == T::Real::zero() && d.re() >= T::Real::zero());
        }
    }

    #[test]
    fn orthonormal_columns_give_identity_r() {
        let q = householder_qr(&random_matrix::<f64>(&mut rng(2), 6, 3)).unwrap().thin_q();
        let r = householder_qr(&q).unwrap().r();
        assert!(relative_distance_f(&DenseMatrix::identity(3), &r) < 1e-14);
    }

    #[test]
    fn single_column_norm() {
        let m = DenseMatrix::from_rows(&[vec![3.0], vec![4.0]]);
        let r = householder_qr(&m).unwrap().r();
        assert!((r[(0, 0)] - 5.0f64).abs() < 1e-15);
    }

    #[test]
    fn random_eight_by_three() {
        check_invariants(&random_matrix::<f64>(&mut rng(8), 8, 3));
        check_invariants(&random_matrix::<C64>(&mut rng(9), 8, 3));
    }

    #[test]
    fn least_squares_examples() {
        let mut r = rng(4);
        let m = random_matrix::<f64>(&mut r, 4, 4);
        let x = least_squares_qr(&m, &m.column(0)).unwrap();
        for (i, v) in x.iter().enumerate() {
            let e = if i == 0 { 1.0 } else { 0.0 };
            assert!((v - e).abs() < 1e-12);
        }
        let ones = DenseMatrix::from_rows(&[vec![1.0], vec![1.0]]);
        let x = least_squares_qr(&ones, &[0.0, 2.0]).unwrap();
        assert!((x[0] - 1.0f64).abs() < 1e-15);
    }

    #[test]
    fn consistent_overdetermined_recovers_preimage() {
        let mut r = rng(5);
        let m = random_matrix::<C64>(&mut r, 12, 5);
        let x_true = random_vector::<C64>(&mut r, 5);
        let b = m.mat_vec(&x_true);
        let x = least_squares_qr(&m, &b).unwrap();
        let diff: f64 = x.iter().zip(&x_true).map(|(a, b)| (a - b).norm()).fold(0.0, f64::max);
        assert!(diff < 1e-12);
    }

    #[test]
    fn rank_deficient_is_reported() {
        let m = DenseMatrix::from_rows(&[vec![1.0, 2.0], vec![2.0, 4.0], vec![3.0, 6.0]]);
        assert!(matches!(
            least_squares_qr(&m, &[1.0, 0.0, 0.0]),
            Err(DlsError::RankDeficient { column: 1, .. })
        ));
    }

    #[test]
    fn normal_equation_residual_is_small() {
        let mut r = rng(6);
        let m = random_matrix::<f64>(&mut r, 20, 6);
        let b = random_vector::<f64>(&mut r, 20);
        let x = least_squares_qr(&m, &b).unwrap();
        let res: Vec<f64> = m.mat_vec(&x).iter().zip(&b).map(|(a, b)| a - b).collect();
        let ne = crate::scalar::norm2(&m.adjoint_mat_vec(&res));
        let bound = 1000.0 * f64::EPSILON * m.frobenius_norm() * crate::scalar::norm2(&b);
        assert!(ne <= bound, "{ne} > {bound}");
    }

    #[test]
    fn agrees_with_spd_solve_of_normal_equations() {
        let mut r = rng(11);
        let m = random_matrix::<C64>(&mut r, 15, 6);
        let b = random_vector::<C64>(&mut r, 15);
        let x_ls = least_squares_qr(&m, &b).unwrap();
        let x_ne = solve_spd(&m.gram(), &m.adjoint_mat_vec(&b)).unwrap();
        let num: f64 = x_ls.iter().zip(&x_ne).map(|(a, b)| (a - b).norm_sqr()).sum::<f64>().sqrt();
        assert!(num / crate::scalar::norm2(&x_ls) < 1e-10);
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(24))]
        #[test]
        fn qr_invariants_all_fields(seed in 0u64..10_000, cols in 1usize..32, extra in 0usize..33) {
            let rows = cols + extra;
            check_invariants(&random_matrix::<f64>(&mut rng(seed), rows, cols));
            check_invariants(&random_matrix::<f32>(&mut rng(seed), rows, cols));
            check_invariants(&random_matrix::<C64>(&mut rng(seed), rows, cols));
            check_invariants(&random_matrix::<C32>(&mut rng(seed), rows, cols));
        }
    }
}
