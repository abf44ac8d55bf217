//! Per-element pipeline: forms, Gram scaling, whitening, Dirichlet data and
//! static condensation.

use num_traits::{Float, One, Zero};

use crate::error::{DlsError, Result};
use crate::formulation::{eval_forms, FormTables, Formulation, ManufacturedCase};
use crate::linalg::{cholesky, householder_qr, lower_solve_vec, triangular_solve, DenseMatrix, QrFactors};
use crate::mesh::Element;
use crate::scalar::{Scalar, C64};

/// Element matrices in working precision. `gram` is absent for
/// Bubnov-Galerkin, whose `stiffness` is then the square `A_K` directly.
#[derive(Debug, Clone)]
pub struct ElementSystem<T: Scalar> {
    pub gram: Option<DenseMatrix<T>>,
    pub stiffness: DenseMatrix<T>,
    pub load: Vec<T>,
}

impl ElementSystem<C64> {
    pub fn cast<T: Scalar>(&self) -> ElementSystem<T> {
        ElementSystem {
            gram: self.gram.as_ref().map(DenseMatrix::cast),
            stiffness: self.stiffness.cast(),
            load: self.load.iter().map(|&v| T::from_c64(v)).collect(),
        }
    }
}

/// `G_K`, `B_K`, `l_K` in double precision, with column `j` of `B_K`
/// multiplied by the connectivity sign of local trial DOF `j`.
pub fn compute_element(
    form: &Formulation,
    element: &Element,
    tables: &FormTables,
    case: &ManufacturedCase,
    signs: &[i8],
) -> ElementSystem<C64> {
    let forms = eval_forms(form, element, tables, case.source.as_ref());
    let mut b = forms.stiffness;
    for (j, &s) in signs.iter().enumerate() {
        if s < 0 {
            for i in 0..b.rows() {
                b[(i, j)] = -b[(i, j)];
            }
        }
    }
    ElementSystem {
        gram: forms.gram,
        stiffness: b,
        load: forms.load,
    }
}

/// Symmetric diagonal scaling of the test basis, `v_i ↦ v_i/√G_ii`:
/// `G ↦ D^{−1/2}GD^{−1/2}`, `B ↦ D^{−1/2}B`, `l ↦ D^{−1/2}l`.
///
/// `B*G⁻¹B` and `B*G⁻¹l` are unchanged, so is the minimizer.
pub fn precondition_gram<T: Scalar>(
    g: &DenseMatrix<T>,
    b: &DenseMatrix<T>,
    l: &[T],
) -> Result<(DenseMatrix<T>, DenseMatrix<T>, Vec<T>)> {
    let n = g.rows();
    let mut s = Vec::with_capacity(n);
    for (index, d) in g.diag().into_iter().enumerate() {
        let d = d.re();
        if !(d > T::Real::zero()) {
            return Err(DlsError::NonpositiveDiagonal { index });
        }
        s.push(T::Real::one() / Float::sqrt(d));
    }
    let mut gs = DenseMatrix::from_fn(n, n, |i, j| g[(i, j)].scale(s[i] * s[j]));
    for i in 0..n {
        gs[(i, i)] = T::one();
    }
    let bs = DenseMatrix::from_fn(b.rows(), b.cols(), |i, j| b[(i, j)].scale(s[i]));
    let ls = l.iter().zip(&s).map(|(&v, &si)| v.scale(si)).collect();
    Ok((gs, bs, ls))
}

/// `B̃ = L⁻¹B`, `l̃ = L⁻¹l` with `G = LL*`.
pub fn whiten<T: Scalar>(g: &DenseMatrix<T>, b: &DenseMatrix<T>, l: &[T]) -> Result<(DenseMatrix<T>, Vec<T>)> {
    let factor = cholesky(g)?;
    let bt = triangular_solve(&factor, b)?;
    let mut lt = l.to_vec();
    lower_solve_vec(&factor, &mut lt)?;
    Ok((bt, lt))
}

/// `A_K = B̃*B̃`, `f_K = B̃*l̃`.
pub fn element_ne<T: Scalar>(bt: &DenseMatrix<T>, lt: &[T]) -> (DenseMatrix<T>, Vec<T>) {
    (bt.gram(), bt.adjoint_mat_vec(lt))
}

/// Moves a known coefficient vector `lift` (over all local columns) to the
/// right-hand side and keeps only the `free` columns: `(B̃[:, free], l̃ − B̃ lift)`.
pub fn apply_dirichlet<T: Scalar>(
    bt: &DenseMatrix<T>,
    lt: &[T],
    free: &[usize],
    lift: &[T],
) -> (DenseMatrix<T>, Vec<T>) {
    let shift = bt.mat_vec(lift);
    let rhs = lt.iter().zip(&shift).map(|(&a, &b)| a - b).collect();
    (bt.select_columns(free), rhs)
}

/// Square-system counterpart of [`apply_dirichlet`] for `A u = f`.
pub fn apply_dirichlet_ne<T: Scalar>(
    a: &DenseMatrix<T>,
    f: &[T],
    free: &[usize],
    lift: &[T],
) -> (DenseMatrix<T>, Vec<T>) {
    let shift = a.mat_vec(lift);
    let rhs: Vec<T> = free.iter().map(|&i| f[i] - shift[i]).collect();
    (a.select(free, free), rhs)
}

/// Bubbles eliminated by orthogonal projection.
#[derive(Debug, Clone)]
pub struct CondensedLs<T: Scalar> {
    /// `(I − P_bubb) B̃_interf`.
    pub rows: DenseMatrix<T>,
    /// `(I − P_bubb) l̃`.
    pub rhs: Vec<T>,
    qr: Option<QrFactors<T>>,
}

/// Condenses `min ‖B̃_i u_i + B̃_b u_b − l̃‖` to the interface with
/// `P_bubb = Q_bQ_b*` from a QR of the bubble columns.
pub fn condense_ls<T: Scalar>(
    interface: &DenseMatrix<T>,
    bubbles: &DenseMatrix<T>,
    rhs: &[T],
) -> Result<CondensedLs<T>> {
    if bubbles.cols() == 0 {
        return Ok(CondensedLs {
            rows: interface.clone(),
            rhs: rhs.to_vec(),
            qr: None,
        });
    }
    let qr = householder_qr(bubbles).map_err(|_| DlsError::RankDeficientBubbles)?;
    if qr.rank_deficiency().is_some() {
        return Err(DlsError::RankDeficientBubbles);
    }
    let m = interface.rows();
    let mut rows = interface.clone();
    let mut col = vec![T::zero(); m];
    for j in 0..interface.cols() {
        for (i, c) in col.iter_mut().enumerate() {
            *c = interface[(i, j)];
        }
        qr.project_complement(&mut col);
        rows.set_column(j, &col);
    }
    let mut r = rhs.to_vec();
    qr.project_complement(&mut r);
    Ok(CondensedLs {
        rows,
        rhs: r,
        qr: Some(qr),
    })
}

impl<T: Scalar> CondensedLs<T> {
    /// `u_b = R_b⁻¹Q_b*(l̃ − B̃_i u_i)`, given that residual right-hand side.
    pub fn recover(&self, rhs_minus_interface: &[T]) -> Result<Vec<T>> {
        match &self.qr {
            None => Ok(Vec::new()),
            Some(qr) => qr.solve_least_squares(rhs_minus_interface),
        }
    }

    pub fn num_bubbles(&self) -> usize {
        self.qr.as_ref().map_or(0, QrFactors::cols)
    }
}

/// Bubbles eliminated by the Schur complement of the normal equation.
#[derive(Debug, Clone)]
pub struct CondensedNe<T: Scalar> {
    pub schur: DenseMatrix<T>,
    pub rhs: Vec<T>,
    bubble_factor: DenseMatrix<T>,
    coupling: DenseMatrix<T>,
    bubble_rhs: Vec<T>,
}

/// `S = A_ii − A_ib A_bb⁻¹ A_bi`, `g = f_i − A_ib A_bb⁻¹ f_b`.
pub fn condense_ne<T: Scalar>(
    a: &DenseMatrix<T>,
    f: &[T],
    bubbles: &[usize],
    interface: &[usize],
) -> Result<CondensedNe<T>> {
    let a_ii = a.select(interface, interface);
    let f_i: Vec<T> = interface.iter().map(|&i| f[i]).collect();
    if bubbles.is_empty() {
        return Ok(CondensedNe {
            schur: a_ii,
            rhs: f_i,
            bubble_factor: DenseMatrix::zeros(0, 0),
            coupling: DenseMatrix::zeros(0, interface.len()),
            bubble_rhs: Vec::new(),
        });
    }
    let a_bb = a.select(bubbles, bubbles);
    let a_bi = a.select(bubbles, interface);
    let f_b: Vec<T> = bubbles.iter().map(|&i| f[i]).collect();
    let factor = cholesky(&a_bb).map_err(|_| DlsError::SingularBubbleBlock)?;
    // W = L⁻¹A_bi, w = L⁻¹f_b; S = A_ii − W*W, g = f_i − W*w.
    let w = triangular_solve(&factor, &a_bi)?;
    let mut wf = f_b.clone();
    lower_solve_vec(&factor, &mut wf)?;
    let schur = a_ii.sub(&w.gram());
    let corr = w.adjoint_mat_vec(&wf);
    let rhs = f_i.iter().zip(&corr).map(|(&a, &b)| a - b).collect();
    Ok(CondensedNe {
        schur,
        rhs,
        bubble_factor: factor,
        coupling: a_bi,
        bubble_rhs: f_b,
    })
}

impl<T: Scalar> CondensedNe<T> {
    /// `u_b = A_bb⁻¹(f_b − A_bi u_i)`.
    pub fn recover(&self, u_interface: &[T]) -> Result<Vec<T>> {
        if self.bubble_rhs.is_empty() {
            return Ok(Vec::new());
        }
        let shift = self.coupling.mat_vec(u_interface);
        let mut r: Vec<T> = self.bubble_rhs.iter().zip(&shift).map(|(&a, &b)| a - b).collect();
        crate::linalg::lower_solve_vec(&self.bubble_factor, &mut r)?;
        crate::linalg::lower_adjoint_solve_vec(&self.bubble_factor, &mut r)?;
        Ok(r)
    }
}

/// Whitened (and optionally Gram-scaled) element system in working precision.
pub fn whitened_element<T: Scalar>(
    system: &ElementSystem<C64>,
    precondition: bool,
) -> Result<(DenseMatrix<T>, Vec<T>)> {
    let s = system.cast::<T>();
    let g = s.gram.ok_or_else(|| {
        DlsError::UnsupportedCombination("no test Gram matrix (Bubnov-Galerkin has no least-squares form)".into())
    })?;
    if precondition {
        let (g, b, l) = precondition_gram(&g, &s.stiffness, &s.load)?;
        whiten(&g, &b, &l)
    } else {
        whiten(&g, &s.stiffness, &s.load)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::formulation::{make_case, make_formulation, FormulationKind, Parameters};
    use crate::linalg::testutil::*;
    use crate::linalg::{least_squares_qr, singular_values, solve_spd};
    use crate::mesh::uniform_mesh;
    use proptest::prelude::*;

    fn rel(a: &[C64], b: &[C64]) -> f64 {
        let d: Vec<C64> = a.iter().zip(b).map(|(x, y)| x - y).collect();
        crate::scalar::norm2(&d) / crate::scalar::norm2(a).max(f64::MIN_POSITIVE)
    }

    fn split(n: usize, nb: usize) -> (Vec<usize>, Vec<usize>) {
        // Interleave bubbles with interface columns.
        let bubbles: Vec<usize> = (0..nb).map(|k| (2 * k + 1).min(n - 1 - (nb - 1 - k))).collect();
        let interface = (0..n).filter(|i| !bubbles.contains(i)).collect();
        (bubbles, interface)
    }

    #[test]
    fn unit_diagonal_gram_is_unchanged() {
        let mut r = rng(1);
        let mut g = random_spd::<f64>(&mut r, 5);
        let d = g.diag();
        g = DenseMatrix::from_fn(5, 5, |i, j| g[(i, j)] / (d[i] * d[j]).sqrt());
        for i in 0..5 {
            g[(i, i)] = 1.0;
        }
        let b = random_matrix::<f64>(&mut r, 5, 3);
        let l = random_vector::<f64>(&mut r, 5);
        let (g2, b2, l2) = precondition_gram(&g, &b, &l).unwrap();
        assert!(relative_distance_f(&g, &g2) < 1e-15);
        assert_eq!(b, b2);
        assert_eq!(l, l2);
    }

    #[test]
    fn diagonal_gram_scaling() {
        let g = DenseMatrix::diagonal(&[4.0, 9.0]);
        let b = DenseMatrix::from_rows(&[vec![2.0, 4.0], vec![3.0, 6.0]]);
        let (g2, b2, l2) = precondition_gram(&g, &b, &[2.0, 3.0]).unwrap();
        assert_eq!(g2, DenseMatrix::identity(2));
        assert_eq!(b2, DenseMatrix::from_rows(&[vec![1.0, 2.0], vec![1.0, 2.0]]));
        assert_eq!(l2, vec![1.0, 1.0]);
        let bad = DenseMatrix::diagonal(&[1.0, 0.0]);
        assert!(matches!(
            precondition_gram(&bad, &b, &[0.0, 0.0]),
            Err(DlsError::NonpositiveDiagonal { index: 1 })
        ));
    }

    #[test]
    fn whitening_examples() {
        let mut r = rng(2);
        let b = random_matrix::<f64>(&mut r, 4, 2);
        let l = random_vector::<f64>(&mut r, 4);
        let (bt, lt) = whiten(&DenseMatrix::identity(4), &b, &l).unwrap();
        assert_eq!(bt, b);
        assert_eq!(lt, l);
        let b1 = DenseMatrix::from_rows(&[vec![2.0, -6.0]]);
        let (bt, _) = whiten(&DenseMatrix::diagonal(&[4.0]), &b1, &[1.0]).unwrap();
        assert_eq!(bt, DenseMatrix::from_rows(&[vec![1.0, -3.0]]));
    }

    #[test]
    fn ne_of_orthonormal_columns_is_identity() {
        let mut r = rng(3);
        let m = random_matrix::<C64>(&mut r, 7, 3);
        let q = householder_qr(&m).unwrap().thin_q();
        let (a, f) = element_ne(&q, &[C64::new(0.0, 0.0); 7]);
        assert!(relative_distance_f(&DenseMatrix::identity(3), &a) < 1e-14);
        assert!(f.iter().all(|v| v.norm() == 0.0));
    }

    #[test]
    fn schur_of_two_by_two() {
        let a = DenseMatrix::from_rows(&[vec![2.0f64, 1.0], vec![1.0, 2.0]]);
        let c = condense_ne(&a, &[0.0, 0.0], &[0], &[1]).unwrap();
        assert!((c.schur[(0, 0)] - 1.5).abs() < 1e-15);
        let block = DenseMatrix::diagonal(&[2.0, 3.0, 5.0]);
        let c = condense_ne(&block, &[1.0, 1.0, 1.0], &[1], &[0, 2]).unwrap();
        assert_eq!(c.schur, DenseMatrix::diagonal(&[2.0, 5.0]));
    }

    #[test]
    fn no_bubbles_and_orthogonal_interface() {
        let mut r = rng(4);
        let bi = random_matrix::<f64>(&mut r, 6, 2);
        let l = random_vector::<f64>(&mut r, 6);
        let c = condense_ls(&bi, &DenseMatrix::zeros(6, 0), &l).unwrap();
        assert_eq!(c.rows, bi);
        assert_eq!(c.rhs, l);
        // Bubble columns e0, e1; interface supported on rows 2..6.
        let bb = DenseMatrix::from_fn(6, 2, |i, j| if i == j { 1.0 } else { 0.0 });
        let bi = DenseMatrix::from_fn(6, 2, |i, j| if i >= 2 { (i + j) as f64 } else { 0.0 });
        let c = condense_ls(&bi, &bb, &l).unwrap();
        assert!(relative_distance_f(&bi, &c.rows) < 1e-15);
        // Residual orthogonal to the bubbles gives zero bubbles.
        let res = vec![0.0, 0.0, 1.0, 2.0, 3.0, 4.0];
        assert!(c.recover(&res).unwrap().iter().all(|v| v.abs() < 1e-15));
        assert!(c.recover(&[0.0; 6]).unwrap().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn rank_deficient_bubbles_are_reported() {
        let bb = DenseMatrix::from_rows(&[vec![1.0, 2.0], vec![2.0, 4.0], vec![0.0, 0.0]]);
        let bi = DenseMatrix::zeros(3, 1);
        assert!(matches!(condense_ls(&bi, &bb, &[0.0; 3]), Err(DlsError::RankDeficientBubbles)));
        let a = DenseMatrix::from_rows(&[vec![0.0, 0.0], vec![0.0, 1.0]]);
        assert!(matches!(condense_ne(&a, &[0.0; 2], &[0], &[1]), Err(DlsError::SingularBubbleBlock)));
    }

    #[test]
    fn dirichlet_homogeneous_drops_columns() {
        let mut r = rng(5);
        let b = random_matrix::<f64>(&mut r, 5, 4);
        let l = random_vector::<f64>(&mut r, 5);
        let (bf, lf) = apply_dirichlet(&b, &l, &[1, 3], &[0.0; 4]);
        assert_eq!(bf, b.select_columns(&[1, 3]));
        assert_eq!(lf, l);
        let (bf, lf) = apply_dirichlet(&b, &l, &[], &[1.0, 0.0, 0.0, 2.0]);
        assert_eq!(bf.cols(), 0);
        for i in 0..5 {
            assert!((lf[i] - (l[i] - b[(i, 0)] - 2.0 * b[(i, 3)])).abs() < 1e-15);
        }
    }

    #[test]
    fn dirichlet_matches_saddle_solve() {
        let mut r = rng(6);
        let (m, n) = (9, 5);
        let bt = random_matrix::<f64>(&mut r, m, n);
        let lt = random_vector::<f64>(&mut r, m);
        let fixed = [0usize, 3];
        let free = [1usize, 2, 4];
        let mut lift = vec![0.0; n];
        lift[0] = 0.7;
        lift[3] = -1.3;
        let (bf, lf) = apply_dirichlet(&bt, &lt, &free, &lift);
        let uf = least_squares_qr(&bf, &lf).unwrap();
        let mut u = lift.clone();
        for (k, &i) in free.iter().enumerate() {
            u[i] = uf[k];
        }
        // Oracle: [A C*; C 0] with C = rows of the identity at the fixed DOFs.
        let a = bt.gram();
        let f = bt.adjoint_mat_vec(&lt);
        let c = DenseMatrix::from_fn(2, n, |i, j| if j == fixed[i] { 1.0 } else { 0.0 });
        let (us, _) = crate::linalg::saddle_solve(&a, &c, &f, &[lift[0], lift[3]]).unwrap();
        for i in 0..n {
            assert!((u[i] - us[i]).abs() < 1e-11);
        }
    }

    #[test]
    fn ne_eigenvalues_are_squared_singular_values() {
        let mut r = rng(7);
        let bt = random_matrix::<C64>(&mut r, 8, 5);
        let (a, _) = element_ne(&bt, &[C64::new(0.0, 0.0); 8]);
        let mut ev = crate::linalg::hermitian_eigenvalues(&a);
        let mut sv: Vec<f64> = singular_values(&bt).iter().map(|s| s * s).collect();
        ev.sort_by(f64::total_cmp);
        sv.sort_by(f64::total_cmp);
        for (e, s) in ev.iter().zip(&sv) {
            assert!((e - s).abs() <= 1e-12 * sv[sv.len() - 1]);
        }
    }

    #[test]
    fn real_element_is_whitened_consistently() {
        // Bubbles of the FOSLS element are recovered exactly by both flavors.
        let mesh = uniform_mesh(2).unwrap();
        let case = make_case("poisson-alpha-sine").unwrap();
        let form = make_formulation(FormulationKind::FoslsStrong, 2, 1, case.parameters()).unwrap();
        let tables = FormTables::new(&form, mesh.h()).unwrap();
        let sys = compute_element(&form, &mesh.elements()[3], &tables, &case, &vec![1; form.trial_dim()]);
        let (bt, lt) = whitened_element::<f64>(&sys, true).unwrap();
        let mask = crate::mesh::local_bubble_mask(crate::mesh::SpaceKind::H1Conforming, 2)
            .into_iter()
            .chain(crate::mesh::local_bubble_mask(crate::mesh::SpaceKind::HdivConforming, 2))
            .collect::<Vec<_>>();
        let bubbles: Vec<usize> = (0..mask.len()).filter(|&i| mask[i]).collect();
        let interface: Vec<usize> = (0..mask.len()).filter(|&i| !mask[i]).collect();
        let full = least_squares_qr(&bt, &lt).unwrap();
        let ls = condense_ls(&bt.select_columns(&interface), &bt.select_columns(&bubbles), &lt).unwrap();
        let ui = least_squares_qr(&ls.rows, &ls.rhs).unwrap();
        let shift = bt.select_columns(&interface).mat_vec(&ui);
        let res: Vec<f64> = lt.iter().zip(&shift).map(|(a, b)| a - b).collect();
        let ub = ls.recover(&res).unwrap();
        for (k, &i) in interface.iter().enumerate() {
            assert!((ui[k] - full[i]).abs() <= 1e-11 * (1.0 + full[i].abs()));
        }
        for (k, &i) in bubbles.iter().enumerate() {
            assert!((ub[k] - full[i]).abs() <= 1e-11 * (1.0 + full[i].abs()));
        }
    }

    #[test]
    fn zero_load_element() {
        let mesh = uniform_mesh(2).unwrap();
        let mut case = make_case("poisson-sine").unwrap();
        case.source = std::sync::Arc::new(|_, _| C64::new(0.0, 0.0));
        let form = make_formulation(FormulationKind::PrimalDpg, 2, 1, Parameters::default()).unwrap();
        let tables = FormTables::new(&form, mesh.h()).unwrap();
        let sys = compute_element(&form, &mesh.elements()[0], &tables, &case, &vec![1; form.trial_dim()]);
        assert!(sys.load.iter().all(|v| v.norm() == 0.0));
    }

    fn full_solve_c64(bt: &DenseMatrix<C64>, lt: &[C64]) -> Vec<C64> {
        least_squares_qr(bt, lt).unwrap()
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(48))]

        #[test]
        fn whitening_identity(seed in any::<u64>(), m in 2usize..12, n in 1usize..6) {
            let mut r = rng(seed);
            let g = random_spd::<C64>(&mut r, m);
            let b = random_matrix::<C64>(&mut r, m, n);
            let (bt, _) = whiten(&g, &b, &vec![C64::new(0.0, 0.0); m]).unwrap();
            // Oracle: G⁻¹B one column at a time.
            let mut ginv_b = DenseMatrix::zeros(m, n);
            for j in 0..n {
                ginv_b.set_column(j, &solve_spd(&g, &b.column(j)).unwrap());
            }
            let exact = b.adjoint_matmul(&ginv_b);
            prop_assert!(relative_distance_f(&exact, &bt.gram()) < 1e-12);
        }

        #[test]
        fn gram_scaling_keeps_argmin(seed in any::<u64>(), n in 1usize..5, extra in 0usize..6) {
            let m = n + extra + 1;
            let mut r = rng(seed);
            let g0 = random_spd::<C64>(&mut r, m);
            let d: Vec<f64> = (0..m).map(|i| 1e3f64.powf(i as f64 / m as f64)).collect();
            let g = DenseMatrix::from_fn(m, m, |i, j| g0[(i, j)] * (d[i] * d[j]));
            let b = random_matrix::<C64>(&mut r, m, n);
            let l = random_vector::<C64>(&mut r, m);
            let (bt, lt) = whiten(&g, &b, &l).unwrap();
            let u0 = full_solve_c64(&bt, &lt);
            let (gs, bs, ls) = precondition_gram(&g, &b, &l).unwrap();
            let (bt, lt) = whiten(&gs, &bs, &ls).unwrap();
            let u1 = full_solve_c64(&bt, &lt);
            prop_assert!(rel(&u0, &u1) < 1e-12);
        }

        #[test]
        fn condensation_round_trip(seed in any::<u64>(), n in 2usize..9, extra in 0usize..6, nb_frac in 0.1f64..0.9) {
            let m = n + extra;
            let nb = ((n as f64 * nb_frac) as usize).clamp(1, n - 1);
            let mut r = rng(seed);
            let bt = random_matrix::<C64>(&mut r, m, n);
            let lt = random_vector::<C64>(&mut r, m);
            let (bubbles, interface) = split(n, nb);
            let full = full_solve_c64(&bt, &lt);

            let ls = condense_ls(&bt.select_columns(&interface), &bt.select_columns(&bubbles), &lt).unwrap();
            let ui = full_solve_c64(&ls.rows, &ls.rhs);
            let shift = bt.select_columns(&interface).mat_vec(&ui);
            let res: Vec<C64> = lt.iter().zip(&shift).map(|(a, b)| a - b).collect();
            let ub = ls.recover(&res).unwrap();

            let (a, f) = element_ne(&bt, &lt);
            let ne = condense_ne(&a, &f, &bubbles, &interface).unwrap();
            let ui_ne = solve_spd(&ne.schur, &ne.rhs).unwrap();
            let ub_ne = ne.recover(&ui_ne).unwrap();

            let mut u_ls = vec![C64::new(0.0, 0.0); n];
            let mut u_ne = u_ls.clone();
            for (k, &i) in interface.iter().enumerate() { u_ls[i] = ui[k]; u_ne[i] = ui_ne[k]; }
            for (k, &i) in bubbles.iter().enumerate() { u_ls[i] = ub[k]; u_ne[i] = ub_ne[k]; }
            // Random dense blocks are mildly ill-conditioned; NE loses cond(B̃)·ε relative to QR.
            let kappa = {
                let s = singular_values(&bt);
                s[0] / s[s.len() - 1]
            };
            prop_assert!(rel(&full, &u_ls) < 1e-11 * kappa.max(1.0));
            prop_assert!(rel(&full, &u_ne) < 1e-11 * (kappa * kappa).max(1.0));

            // Schur complement equals the normal equation of the projected rows.
            let (a_ls, f_ls) = element_ne(&ls.rows, &ls.rhs);
            prop_assert!(relative_distance_f(&a_ls, &ne.schur) < 1e-11 * kappa.max(1.0));
            prop_assert!(rel(&f_ls, &ne.rhs) < 1e-11 * kappa.max(1.0) || crate::scalar::norm2(&f_ls) < 1e-13);
        }

        #[test]
        fn projector_algebra(seed in any::<u64>(), m in 3usize..12, nb in 1usize..3) {
            let mut r = rng(seed);
            let bb = random_matrix::<C64>(&mut r, m, nb);
            let qr = householder_qr(&bb).unwrap();
            let q = qr.thin_q();
            let p = q.matmul(&q.adjoint());
            prop_assert!(relative_distance_f(&p, &p.adjoint()) < 1e-14);
            prop_assert!(p.matmul(&p).sub(&p).frobenius_norm() < 1e-12);
            // I − P applied column by column equals project_complement.
            let mut comp = DenseMatrix::identity(m).sub(&p);
            for j in 0..m {
                let mut e = vec![C64::new(0.0, 0.0); m];
                e[j] = C64::new(1.0, 0.0);
                qr.project_complement(&mut e);
                for i in 0..m { comp[(i, j)] -= e[i]; }
            }
            prop_assert!(comp.frobenius_norm() < 1e-12);
        }
    }
}
