//! Global solvers, solution recovery, error indicators and error norms.

use num_traits::Zero;
use rayon::prelude::*;

use crate::assembly::{DofMap, ElementRecord, LsAssembly, NeAssembly, RowBlocked, SparseSymmetric};
use crate::basis::MasterSpace;
use crate::error::{DlsError, Result};
use crate::formulation::{FieldRole, FormTables, Formulation, ManufacturedCase};
use crate::linalg::{householder_qr, least_squares_qr, saddle_solve, DenseMatrix};
use crate::mesh::{Mesh, SpaceKind};
use crate::scalar::{norm2, RealScalar, Scalar, C64};

/// Cholesky factor of a Hermitian matrix stored by rows over its envelope:
/// row `i` holds `L[i, first[i]..=i]`.
#[derive(Debug, Clone)]
pub struct EnvelopeCholesky<T: Scalar> {
    first: Vec<usize>,
    rows: Vec<Vec<T>>,
}

impl<T: Scalar> EnvelopeCholesky<T> {
    pub fn factor(a: &SparseSymmetric<T>) -> Result<Self> {
        let n = a.dim();
        let mut first = Vec::with_capacity(n);
        let mut rows: Vec<Vec<T>> = Vec::with_capacity(n);
        for i in 0..n {
            let fi = a.row(i).map(|(j, _)| j).find(|&j| j <= i).unwrap_or(i);
            let mut row = vec![T::zero(); i - fi + 1];
            for (j, v) in a.row(i) {
                if j >= fi && j <= i {
                    row[j - fi] = v;
                }
            }
            for j in fi..i {
                let fj = first[j];
                let lj: &Vec<T> = &rows[j];
                let start = fi.max(fj);
                let mut s = row[j - fi];
                let (ri, rj) = (&row[start - fi..j - fi], &lj[start - fj..j - fj]);
                for (&x, &y) in ri.iter().zip(rj) {
                    s -= x * y.conj();
                }
                row[j - fi] = s / lj[j - fj];
            }
            let mut d = row[i - fi].re();
            for &x in &row[..i - fi] {
                d = d - x.modulus_sq();
            }
            if !(d > T::Real::zero()) {
                return Err(DlsError::NotPositiveDefinite { index: i });
            }
            row[i - fi] = T::from_real(num_traits::Float::sqrt(d));
            first.push(fi);
            rows.push(row);
        }
        Ok(Self { first, rows })
    }

    /// Stored entries of `L`.
    pub fn envelope_size(&self) -> usize {
        self.rows.iter().map(Vec::len).sum()
    }

    pub fn solve(&self, f: &[T]) -> Vec<T> {
        let n = self.rows.len();
        let mut y = f.to_vec();
        for i in 0..n {
            let (fi, row) = (self.first[i], &self.rows[i]);
            let mut s = y[i];
            for (k, &l) in row[..i - fi].iter().enumerate() {
                s -= l * y[fi + k];
            }
            y[i] = s / row[i - fi];
        }
        for i in (0..n).rev() {
            let (fi, row) = (self.first[i], &self.rows[i]);
            let xi = y[i] / row[i - fi].conj();
            y[i] = xi;
            for (k, &l) in row[..i - fi].iter().enumerate() {
                y[fi + k] -= l.conj() * xi;
            }
        }
        y
    }
}

/// Upper-triangular factor built by row-wise Givens rotations; row `g`
/// stores `R[g, g..g + len]`.
#[derive(Debug, Clone)]
struct GivensR<T: Scalar> {
    rows: Vec<Vec<T>>,
    rhs: Vec<T>,
    work: Vec<T>,
}

impl<T: Scalar> GivensR<T> {
    fn new(n: usize) -> Self {
        Self {
            rows: vec![Vec::new(); n],
            rhs: vec![T::zero(); n],
            work: vec![T::zero(); n],
        }
    }

    /// Rotates one sparse row (ascending columns) into `R`.
    fn add_row(&mut self, cols: &[usize], vals: &[T], mut z: T) {
        let Some(&lo) = cols.first() else { return };
        let mut hi = *cols.last().expect("nonempty");
        for (&c, &v) in cols.iter().zip(vals) {
            self.work[c] = v;
        }
        let mut g = lo;
        while g <= hi {
            let x = self.work[g];
            if x == T::zero() {
                g += 1;
                continue;
            }
            if self.rows[g].is_empty() {
                self.rows[g] = self.work[g..=hi].to_vec();
                self.rhs[g] = z;
                for w in &mut self.work[g..=hi] {
                    *w = T::zero();
                }
                return;
            }
            let row = &mut self.rows[g];
            let end = g + row.len() - 1;
            if hi > end {
                row.resize(hi - g + 1, T::zero());
            } else {
                hi = end;
            }
            let a = row[0];
            let (am, bm) = (a.modulus().as_f64(), x.modulus().as_f64());
            let r = am.hypot(bm);
            let phase = if am == 0.0 { T::one() } else { a.scale(T::Real::of_f64(1.0 / am)) };
            let c = T::Real::of_f64(am / r);
            let s = phase * x.conj().scale(T::Real::of_f64(1.0 / r));
            for (k, rv) in row.iter_mut().enumerate() {
                let w = self.work[g + k];
                let (rk, wk) = (*rv, w);
                *rv = rk.scale(c) + s * wk;
                self.work[g + k] = wk.scale(c) - s.conj() * rk;
            }
            self.work[g] = T::zero();
            let rz = self.rhs[g];
            self.rhs[g] = rz.scale(c) + s * z;
            z = z.scale(c) - s.conj() * rz;
            g += 1;
        }
    }

    fn back_substitute(mut self) -> Result<Vec<T>> {
        let n = self.rows.len();
        let diag: Vec<f64> = self
            .rows
            .iter()
            .map(|r| r.first().map_or(0.0, |v| v.modulus().as_f64()))
            .collect();
        let max = diag.iter().cloned().fold(0.0, f64::max);
        // The global row count would reject honest single-precision factors
        // at N ~ 1e4; sqrt(N)·ε tracks the accumulated rotation error instead.
        let threshold = (n as f64).sqrt() * T::machine_epsilon() * max;
        if let Some(column) = diag.iter().position(|&d| d <= threshold) {
            return Err(DlsError::RankDeficient {
                column,
                ratio: if max > 0.0 { diag[column] / max } else { 0.0 },
            });
        }
        let mut u = vec![T::zero(); n];
        for g in (0..n).rev() {
            let row = &self.rows[g];
            let mut s = self.rhs[g];
            for (k, &v) in row.iter().enumerate().skip(1) {
                s -= v * u[g + k];
            }
            u[g] = s / row[0];
        }
        self.rows.clear();
        Ok(u)
    }
}

/// Backend for the global least-squares solve.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum LsBackend {
    /// Element-local Householder compression, then row-sequential Givens
    /// rotations into a banded `R`.
    #[default]
    Givens,
    /// Densify and run Householder QR.
    DenseHouseholder,
}

/// `min ‖Bx − l‖₂` for a row-blocked matrix.
pub fn least_squares_rowblocked<T: Scalar>(b: &RowBlocked<T>, l: &[T], backend: LsBackend) -> Result<Vec<T>> {
    if l.len() != b.n_rows {
        return Err(DlsError::DimensionMismatch {
            context: "least_squares_rowblocked",
            expected: b.n_rows,
            found: l.len(),
        });
    }
    match backend {
        LsBackend::DenseHouseholder => least_squares_qr(&b.to_dense(), l),
        LsBackend::Givens => {
            let mut r = GivensR::new(b.n_cols);
            // Blocks are compressed independently, then rotated in order.
            let compressed: Vec<(Vec<usize>, DenseMatrix<T>, Vec<T>)> = b
                .blocks
                .par_iter()
                .map(|blk| {
                    let m = blk.values.rows();
                    let c = blk.cols.len();
                    let rhs = l[blk.row_offset..blk.row_offset + m].to_vec();
                    if m >= c && c > 0 {
                        let qr = householder_qr(&blk.values).expect("rows ≥ cols");
                        let mut z = rhs;
                        qr.apply_qt(&mut z);
                        z.truncate(c);
                        (blk.cols.clone(), qr.r(), z)
                    } else {
                        (blk.cols.clone(), blk.values.clone(), rhs)
                    }
                })
                .collect();
            for (cols, rows, z) in &compressed {
                for i in 0..rows.rows() {
                    let row = rows.row(i);
                    // Upper-triangular rows start at column i.
                    let start = row.iter().position(|v| *v != T::zero()).unwrap_or(row.len());
                    r.add_row(&cols[start..], &row[start..], z[i]);
                }
            }
            r.back_substitute()
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SolverTag {
    Ne,
    Qr,
}

impl SolverTag {
    pub fn name(self) -> &'static str {
        match self {
            SolverTag::Ne => "ne",
            SolverTag::Qr => "qr",
        }
    }
}

#[derive(Debug, Clone)]
pub struct Solution<T: Scalar> {
    pub solver: SolverTag,
    /// Raw trial coefficients, lift included and bubbles recovered.
    pub coefficients: Vec<T>,
    /// Global unknowns in the original (unscaled) basis.
    pub global: Vec<T>,
    /// Global unknowns as solved for, in the globally scaled basis.
    pub scaled: Vec<T>,
    /// Per-element local coefficients.
    pub local: Vec<Vec<T>>,
    /// Whitened residual `l̃ − B̃u`, rows element-major; empty for square
    /// (Galerkin) systems.
    pub residual: Vec<T>,
    /// `η_K = ‖l̃_K − B̃_K u_K‖₂`.
    pub indicators: Vec<f64>,
}

impl<T: Scalar> Solution<T> {
    pub fn residual_norm(&self) -> f64 {
        norm2(&self.residual)
    }

    pub fn eta_total(&self) -> f64 {
        self.indicators.iter().map(|e| e * e).sum::<f64>().sqrt()
    }
}

fn unscale<T: Scalar>(scaled: &[T], scaling: &Option<Vec<T::Real>>) -> Vec<T> {
    match scaling {
        None => scaled.to_vec(),
        Some(s) => scaled.iter().zip(s).map(|(&v, &si)| v.scale(si)).collect(),
    }
}

fn finish<T: Scalar>(
    solver: SolverTag,
    dofs: &DofMap,
    records: &[ElementRecord<T>],
    scaled: Vec<T>,
    scaling: &Option<Vec<T::Real>>,
) -> Result<Solution<T>> {
    let global = unscale(&scaled, scaling);
    let local: Vec<Vec<T>> = records
        .par_iter()
        .map(|r| r.local_solution(&global).map_err(|e| e.at_element(r.element)))
        .collect::<Result<_>>()?;
    let mut coefficients = vec![T::zero(); dofs.n_raw];
    for (k, u) in local.iter().enumerate() {
        for (&raw, &v) in dofs.local_to_raw[k].iter().zip(u) {
            coefficients[raw] = v;
        }
    }
    let mut residual = Vec::new();
    let mut indicators = Vec::new();
    for (r, u) in records.iter().zip(&local) {
        if let Some(res) = r.residual(u) {
            indicators.push(norm2(&res));
            residual.extend(res);
        }
    }
    Ok(Solution {
        solver,
        coefficients,
        global,
        scaled,
        local,
        residual,
        indicators,
    })
}

/// Solves the normal equation by envelope Cholesky.
pub fn solve_ne<T: Scalar>(ne: &NeAssembly<T>) -> Result<Solution<T>> {
    let scaled = if ne.a.dim() == 0 {
        Vec::new()
    } else {
        EnvelopeCholesky::factor(&ne.a)?.solve(&ne.f)
    };
    finish(SolverTag::Ne, &ne.dofs, &ne.records, scaled, &ne.scaling)
}

/// Solves the overdetermined system by QR.
pub fn solve_ls<T: Scalar>(ls: &LsAssembly<T>) -> Result<Solution<T>> {
    solve_ls_with(ls, LsBackend::Givens)
}

pub fn solve_ls_with<T: Scalar>(ls: &LsAssembly<T>, backend: LsBackend) -> Result<Solution<T>> {
    let scaled = if ls.b.n_cols == 0 {
        Vec::new()
    } else {
        least_squares_rowblocked(&ls.b, &ls.l, backend)?
    };
    finish(SolverTag::Qr, &ls.dofs, &ls.records, scaled, &ls.scaling)
}

/// Equality constraints `Cu = d` with penalty weight `α` (Gram `H = α⁻²I`).
#[derive(Debug, Clone)]
pub struct ConstraintSystem<T: Scalar> {
    pub c: DenseMatrix<T>,
    pub d: Vec<T>,
    pub alpha: f64,
}

impl<T: Scalar> ConstraintSystem<T> {
    pub fn check_rank(&self) -> Result<()> {
        if self.c.rows() == 0 {
            return Ok(());
        }
        if self.c.rows() > self.c.cols() || householder_qr(&self.c.adjoint())?.rank_deficiency().is_some() {
            return Err(DlsError::RankDeficient {
                column: self.c.rows().min(self.c.cols()),
                ratio: 0.0,
            });
        }
        Ok(())
    }
}

/// Method of weighting: least squares on `[αC; B̃]u ≈ [αd; l̃]`.
pub fn solve_weighted_constraints<T: Scalar>(
    bt: &DenseMatrix<T>,
    lt: &[T],
    cons: &ConstraintSystem<T>,
) -> Result<Vec<T>> {
    cons.check_rank()?;
    let a = T::from_f64(cons.alpha);
    let stacked = cons.c.scaled(a).vcat(bt);
    let mut rhs: Vec<T> = cons.d.iter().map(|&v| v * a).collect();
    rhs.extend_from_slice(lt);
    least_squares_qr(&stacked, &rhs)
}

/// `[A C*; C 0][u; w] = [f; d]`.
pub fn solve_saddle_constraints<T: Scalar>(
    a: &DenseMatrix<T>,
    f: &[T],
    cons: &ConstraintSystem<T>,
) -> Result<(Vec<T>, Vec<T>)> {
    saddle_solve(a, &cons.c, f, &cons.d)
}

/// `ρ = ‖B̃u − l̃‖₂ / (‖B̃‖₂‖u‖₂)` on the system as solved.
pub fn residual_rho<T: Scalar>(ls: &LsAssembly<T>, sol: &Solution<T>) -> Result<f64> {
    let un = norm2(&sol.scaled);
    if un == 0.0 {
        return Err(DlsError::ZeroSolution);
    }
    let bu = ls.b.mat_vec(&sol.scaled);
    let r: Vec<T> = bu.iter().zip(&ls.l).map(|(&a, &b)| a - b).collect();
    Ok(norm2(&r) / (spectral_norm(&ls.b) * un))
}

/// `‖B‖₂` by power iteration on `B*B`, in double precision.
pub fn spectral_norm<T: Scalar>(b: &RowBlocked<T>) -> f64 {
    let b64 = RowBlocked {
        n_rows: b.n_rows,
        n_cols: b.n_cols,
        blocks: b
            .blocks
            .iter()
            .map(|k| crate::assembly::RowBlock {
                element: k.element,
                row_offset: k.row_offset,
                cols: k.cols.clone(),
                values: k.values.cast::<C64>(),
            })
            .collect(),
    };
    let n = b.n_cols;
    if n == 0 {
        return 0.0;
    }
    let mut x: Vec<C64> = (0..n).map(|i| C64::new(1.0 + (i % 7) as f64 * 0.1, 0.0)).collect();
    let mut lambda = 0.0;
    for _ in 0..200 {
        let nx = norm2(&x);
        x.iter_mut().for_each(|v| *v /= nx);
        let y = b64.adjoint_mat_vec(&b64.mat_vec(&x));
        let next = norm2(&y);
        x = y;
        if (next - lambda).abs() <= 1e-6 * next {
            lambda = next;
            break;
        }
        lambda = next;
    }
    lambda.sqrt()
}

/// Error (or norm, when no exact solution is given) of one trial field.
#[derive(Debug, Clone, PartialEq)]
pub struct FieldError {
    pub name: &'static str,
    pub l2: f64,
    pub l2_exact: f64,
    /// `(‖∇e‖, ‖∇u‖)` for `H¹` fields or `(‖div e‖, ‖div σ‖)` for `H(div)` fields.
    pub derivative: Option<(f64, f64)>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ErrorNorms {
    pub fields: Vec<FieldError>,
}

impl ErrorNorms {
    pub fn field(&self, name: &str) -> Option<&FieldError> {
        self.fields.iter().find(|f| f.name == name)
    }

    /// `(Σ‖e‖²_{L²})^{1/2} / (Σ‖u‖²_{L²})^{1/2}` over all volume fields.
    pub fn l2_relative(&self) -> f64 {
        let e: f64 = self.fields.iter().map(|f| f.l2 * f.l2).sum();
        let u: f64 = self.fields.iter().map(|f| f.l2_exact * f.l2_exact).sum();
        if u == 0.0 {
            e.sqrt()
        } else {
            (e / u).sqrt()
        }
    }

    /// `‖e‖_U` with `H¹` and `H(div)` parts for conforming fields.
    pub fn u_norm(&self) -> f64 {
        self.fields
            .iter()
            .map(|f| f.l2 * f.l2 + f.derivative.map_or(0.0, |d| d.0 * d.0))
            .sum::<f64>()
            .sqrt()
    }

    pub fn u_norm_exact(&self) -> f64 {
        self.fields
            .iter()
            .map(|f| f.l2_exact * f.l2_exact + f.derivative.map_or(0.0, |d| d.1 * d.1))
            .sum::<f64>()
            .sqrt()
    }
}

/// Norms of `u_h − u` for every volume field of the formulation, by
/// quadrature two orders above the assembly rule. With `case = None` the
/// exact fields are zero and the result is the norm of `u_h`.
pub fn error_norms<T: Scalar>(
    mesh: &Mesh,
    form: &Formulation,
    dofs: &DofMap,
    coefficients: &[T],
    case: Option<&ManufacturedCase>,
) -> Result<ErrorNorms> {
    let tables = FormTables::with_order(form, mesh.h(), form.quad_order() + 2)?;
    let offsets = form.trial_offsets();
    let zero = C64::new(0.0, 0.0);
    let mut fields = Vec::new();
    for (ci, comp) in form.trial.iter().enumerate() {
        let space = match comp.kind {
            SpaceKind::H1Conforming => MasterSpace::W,
            SpaceKind::HdivConforming => MasterSpace::V,
            SpaceKind::L2Broken => MasterSpace::Y,
            _ => continue,
        };
        let table = tables.volume(space, comp.p);
        let (mut e2, mut u2, mut de2, mut du2) = (0.0, 0.0, 0.0, 0.0);
        for (k, el) in mesh.elements().iter().enumerate() {
            let raw = &dofs.local_to_raw[k][offsets[ci]..offsets[ci] + comp.local_dim()];
            let sg = &dofs.signs[k][offsets[ci]..offsets[ci] + comp.local_dim()];
            let c: Vec<C64> = raw
                .iter()
                .zip(sg)
                .map(|(&r, &s)| coefficients[r].to_c64() * f64::from(s))
                .collect();
            for (q, &(xi, eta)) in tables.rule.points.iter().enumerate() {
                let w = tables.rule.weights[q] * el.h * el.h;
                let (x, y) = el.map(xi, eta);
                match (space, comp.role) {
                    (MasterSpace::W, _) | (MasterSpace::Y, FieldRole::Scalar) => {
                        let uh: C64 = c.iter().enumerate().map(|(j, &cj)| cj * table.scalar(j, q)).sum();
                        let ue = case.map_or(zero, |cs| (cs.scalar)(x, y));
                        e2 += w * (uh - ue).norm_sqr();
                        u2 += w * ue.norm_sqr();
                        if space == MasterSpace::W {
                            let mut g = [zero; 2];
                            for (j, &cj) in c.iter().enumerate() {
                                let gj = table.gradient(j, q);
                                g[0] += cj * gj[0];
                                g[1] += cj * gj[1];
                            }
                            let ge = case.map_or([zero; 2], |cs| (cs.scalar_gradient)(x, y));
                            de2 += w * ((g[0] - ge[0]).norm_sqr() + (g[1] - ge[1]).norm_sqr());
                            du2 += w * (ge[0].norm_sqr() + ge[1].norm_sqr());
                        }
                    }
                    (MasterSpace::Y, role) => {
                        let comp_index = usize::from(role == FieldRole::VectorY);
                        let uh: C64 = c.iter().enumerate().map(|(j, &cj)| cj * table.scalar(j, q)).sum();
                        let ue = case.map_or(zero, |cs| (cs.vector)(x, y)[comp_index]);
                        e2 += w * (uh - ue).norm_sqr();
                        u2 += w * ue.norm_sqr();
                    }
                    (MasterSpace::V, _) => {
                        let mut s = [zero; 2];
                        let mut d = zero;
                        for (j, &cj) in c.iter().enumerate() {
                            let v = table.vector(j, q);
                            s[0] += cj * v[0];
                            s[1] += cj * v[1];
                            d += cj * table.divergence(j, q);
                        }
                        let se = case.map_or([zero; 2], |cs| (cs.vector)(x, y));
                        let dse = case.map_or(zero, |cs| (cs.vector_divergence)(x, y));
                        e2 += w * ((s[0] - se[0]).norm_sqr() + (s[1] - se[1]).norm_sqr());
                        u2 += w * (se[0].norm_sqr() + se[1].norm_sqr());
                        de2 += w * (d - dse).norm_sqr();
                        du2 += w * dse.norm_sqr();
                    }
                }
            }
        }
        fields.push(FieldError {
            name: comp.name,
            l2: e2.sqrt(),
            l2_exact: u2.sqrt(),
            derivative: (space != MasterSpace::Y).then(|| (de2.sqrt(), du2.sqrt())),
        });
    }
    Ok(ErrorNorms { fields })
}
