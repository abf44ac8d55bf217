//! Global systems: the accumulated normal equation and the row-blocked
//! overdetermined system, with global diagonal scaling and Matrix Market export.

use std::io::Write;

use num_traits::{Float, Zero};
use rayon::prelude::*;

use crate::element::{
    apply_dirichlet, apply_dirichlet_ne, compute_element, condense_ls, condense_ne, element_ne, whitened_element,
    CondensedLs, CondensedNe,
};
use crate::error::{DlsError, Result};
use crate::formulation::{boundary_lift, FormTables, Formulation, ManufacturedCase};
use crate::linalg::DenseMatrix;
use crate::mesh::{build_layout, local_bubble_mask, ConnectivityMap, DofLayout, Element, Mesh};
use crate::scalar::{RealScalar, Scalar, C64};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct AssemblyOptions {
    pub condense: bool,
    pub precondition_gram: bool,
    pub precondition_global: bool,
    pub parallel: bool,
}

impl Default for AssemblyOptions {
    fn default() -> Self {
        Self {
            condense: true,
            precondition_gram: true,
            precondition_global: true,
            parallel: true,
        }
    }
}

/// Trial DOF bookkeeping for one formulation on one mesh.
///
/// Raw indices concatenate the components' own numberings. Global indices
/// number the unknowns actually solved for (not fixed, not condensed) in
/// first-touch order over elements.
#[derive(Debug, Clone)]
pub struct DofMap {
    pub layouts: Vec<DofLayout>,
    pub connectivity: Vec<ConnectivityMap>,
    pub offsets: Vec<usize>,
    pub n_raw: usize,
    pub fixed: Vec<bool>,
    pub local_to_raw: Vec<Vec<usize>>,
    pub signs: Vec<Vec<i8>>,
    pub bubble_mask: Vec<bool>,
    pub condensed: bool,
    pub global_of_raw: Vec<Option<usize>>,
    pub raw_of_global: Vec<usize>,
}

/// Local trial indices of one element split by role.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct LocalPartition {
    /// Global unknowns, in local order.
    pub interface: Vec<usize>,
    /// Condensed bubbles (empty without condensation).
    pub bubbles: Vec<usize>,
    pub fixed: Vec<usize>,
}

impl DofMap {
    pub fn new(mesh: &Mesh, form: &Formulation, condense: bool) -> Result<Self> {
        let mut layouts = Vec::new();
        let mut connectivity = Vec::new();
        let mut offsets = Vec::new();
        let mut fixed = Vec::new();
        let mut bubble_mask = Vec::new();
        let mut n_raw = 0;
        for c in &form.trial {
            let (layout, conn) = build_layout(mesh, c.kind, c.p)?;
            offsets.push(n_raw);
            n_raw += layout.n_dofs;
            let mut f = vec![false; layout.n_dofs];
            if c.fixed_on_boundary {
                for &b in &layout.boundary {
                    f[b] = true;
                }
            }
            fixed.extend(f);
            bubble_mask.extend(local_bubble_mask(c.kind, c.p));
            layouts.push(layout);
            connectivity.push(conn);
        }
        let nk = mesh.num_elements();
        let mut local_to_raw = Vec::with_capacity(nk);
        let mut signs = Vec::with_capacity(nk);
        for k in 0..nk {
            let mut raw = Vec::with_capacity(form.trial_dim());
            let mut sg = Vec::with_capacity(form.trial_dim());
            for (ci, conn) in connectivity.iter().enumerate() {
                for d in conn.element(k) {
                    raw.push(offsets[ci] + d.global);
                    sg.push(d.sign);
                }
            }
            local_to_raw.push(raw);
            signs.push(sg);
        }
        let mut global_of_raw = vec![None; n_raw];
        let mut raw_of_global = Vec::new();
        for raw in &local_to_raw {
            for (j, &r) in raw.iter().enumerate() {
                if fixed[r] || (condense && bubble_mask[j]) || global_of_raw[r].is_some() {
                    continue;
                }
                global_of_raw[r] = Some(raw_of_global.len());
                raw_of_global.push(r);
            }
        }
        Ok(Self {
            layouts,
            connectivity,
            offsets,
            n_raw,
            fixed,
            local_to_raw,
            signs,
            bubble_mask,
            condensed: condense,
            global_of_raw,
            raw_of_global,
        })
    }

    pub fn n_global(&self) -> usize {
        self.raw_of_global.len()
    }

    pub fn n_fixed(&self) -> usize {
        self.fixed.iter().filter(|&&f| f).count()
    }

    pub fn partition(&self, k: usize) -> LocalPartition {
        let mut p = LocalPartition::default();
        for (j, &r) in self.local_to_raw[k].iter().enumerate() {
            if self.fixed[r] {
                p.fixed.push(j);
            } else if self.condensed && self.bubble_mask[j] {
                p.bubbles.push(j);
            } else {
                p.interface.push(j);
            }
        }
        p
    }

    /// Raw coefficient vector carrying the Dirichlet data of every fixed
    /// component, zero elsewhere.
    pub fn lift(&self, mesh: &Mesh, form: &Formulation, case: &ManufacturedCase) -> Vec<C64> {
        let mut out = vec![C64::new(0.0, 0.0); self.n_raw];
        for (ci, c) in form.trial.iter().enumerate() {
            if !c.fixed_on_boundary {
                continue;
            }
            let values = boundary_lift(c, &self.layouts[ci], mesh, case);
            out[self.offsets[ci]..self.offsets[ci] + values.len()].copy_from_slice(&values);
        }
        out
    }

    /// Trial component owning a raw index.
    pub fn component_of_raw(&self, raw: usize) -> usize {
        self.offsets.iter().rposition(|&o| o <= raw).unwrap_or(0)
    }
}

/// Hermitian sparse matrix in CSR form with both triangles stored.
#[derive(Debug, Clone, PartialEq)]
pub struct SparseSymmetric<T> {
    n: usize,
    row_ptr: Vec<usize>,
    col_idx: Vec<usize>,
    values: Vec<T>,
}

impl<T: Scalar> SparseSymmetric<T> {
    /// Builds from coordinate entries, summing duplicates.
    pub fn from_triplets(n: usize, mut entries: Vec<(usize, usize, T)>) -> Self {
        entries.sort_by_key(|&(i, j, _)| (i, j));
        let mut row_ptr = vec![0; n + 1];
        let mut col_idx = Vec::with_capacity(entries.len());
        let mut values: Vec<T> = Vec::with_capacity(entries.len());
        let mut last = None;
        for (i, j, v) in entries {
            if last == Some((i, j)) {
                *values.last_mut().expect("entry present") += v;
            } else {
                col_idx.push(j);
                values.push(v);
                row_ptr[i + 1] += 1;
                last = Some((i, j));
            }
        }
        for i in 0..n {
            row_ptr[i + 1] += row_ptr[i];
        }
        Self {
            n,
            row_ptr,
            col_idx,
            values,
        }
    }

    pub fn dim(&self) -> usize {
        self.n
    }

    pub fn nnz(&self) -> usize {
        self.values.len()
    }

    /// `(column, value)` pairs of row `i`, columns ascending.
    pub fn row(&self, i: usize) -> impl Iterator<Item = (usize, T)> + '_ {
        let r = self.row_ptr[i]..self.row_ptr[i + 1];
        self.col_idx[r.clone()].iter().copied().zip(self.values[r].iter().copied())
    }

    pub fn get(&self, i: usize, j: usize) -> T {
        let r = self.row_ptr[i]..self.row_ptr[i + 1];
        match self.col_idx[r.clone()].binary_search(&j) {
            Ok(k) => self.values[r.start + k],
            Err(_) => T::zero(),
        }
    }

    pub fn diag(&self) -> Vec<T> {
        (0..self.n).map(|i| self.get(i, i)).collect()
    }

    pub fn mat_vec(&self, x: &[T]) -> Vec<T> {
        (0..self.n)
            .map(|i| self.row(i).fold(T::zero(), |acc, (j, v)| acc + v * x[j]))
            .collect()
    }

    pub fn to_dense(&self) -> DenseMatrix<T> {
        let mut m = DenseMatrix::zeros(self.n, self.n);
        for i in 0..self.n {
            for (j, v) in self.row(i) {
                m[(i, j)] = v;
            }
        }
        m
    }

    pub fn is_hermitian(&self, rel_tol: f64) -> bool {
        let scale = self.values.iter().map(|v| v.modulus().as_f64()).fold(0.0, f64::max);
        (0..self.n).all(|i| {
            self.row(i)
                .all(|(j, v)| (v - self.get(j, i).conj()).modulus().as_f64() <= rel_tol * scale)
        })
    }

    fn scale_symmetric(&mut self, s: &[T::Real]) {
        for i in 0..self.n {
            for k in self.row_ptr[i]..self.row_ptr[i + 1] {
                let j = self.col_idx[k];
                self.values[k] = self.values[k].scale(s[i] * s[j]);
            }
        }
    }
}

/// One element's rows of the overdetermined system.
#[derive(Debug, Clone)]
pub struct RowBlock<T: Scalar> {
    pub element: usize,
    pub row_offset: usize,
    /// Global columns, ascending.
    pub cols: Vec<usize>,
    pub values: DenseMatrix<T>,
}

/// Rectangular matrix stored as disjoint dense row panels.
#[derive(Debug, Clone)]
pub struct RowBlocked<T: Scalar> {
    pub n_rows: usize,
    pub n_cols: usize,
    pub blocks: Vec<RowBlock<T>>,
}

impl<T: Scalar> RowBlocked<T> {
    pub fn mat_vec(&self, x: &[T]) -> Vec<T> {
        let mut out = vec![T::zero(); self.n_rows];
        for b in &self.blocks {
            let local: Vec<T> = b.cols.iter().map(|&c| x[c]).collect();
            let y = b.values.mat_vec(&local);
            out[b.row_offset..b.row_offset + y.len()].copy_from_slice(&y);
        }
        out
    }

    pub fn adjoint_mat_vec(&self, r: &[T]) -> Vec<T> {
        let mut out = vec![T::zero(); self.n_cols];
        for b in &self.blocks {
            let y = b.values.adjoint_mat_vec(&r[b.row_offset..b.row_offset + b.values.rows()]);
            for (&c, v) in b.cols.iter().zip(y) {
                out[c] += v;
            }
        }
        out
    }

    pub fn to_dense(&self) -> DenseMatrix<T> {
        let mut m = DenseMatrix::zeros(self.n_rows, self.n_cols);
        for b in &self.blocks {
            for i in 0..b.values.rows() {
                for (k, &c) in b.cols.iter().enumerate() {
                    m[(b.row_offset + i, c)] = b.values[(i, k)];
                }
            }
        }
        m
    }

    /// `B*B` accumulated block by block in double precision.
    pub fn gram_c64(&self) -> DenseMatrix<C64> {
        let mut m = DenseMatrix::zeros(self.n_cols, self.n_cols);
        for b in &self.blocks {
            let g = b.values.cast::<C64>().gram();
            for (p, &i) in b.cols.iter().enumerate() {
                for (q, &j) in b.cols.iter().enumerate() {
                    m[(i, j)] += g[(p, q)];
                }
            }
        }
        m
    }

    pub fn frobenius_norm(&self) -> f64 {
        self.blocks
            .iter()
            .map(|b| b.values.frobenius_norm().powi(2))
            .sum::<f64>()
            .sqrt()
    }

    /// `Σ_rows |B_ij|²` for every column `j`.
    pub fn column_norms_sq(&self) -> Vec<T::Real> {
        let mut out = vec![T::Real::zero(); self.n_cols];
        for b in &self.blocks {
            for i in 0..b.values.rows() {
                for (k, &c) in b.cols.iter().enumerate() {
                    out[c] = out[c] + b.values[(i, k)].modulus_sq();
                }
            }
        }
        out
    }

    fn scale_columns(&mut self, s: &[T::Real]) {
        for b in &mut self.blocks {
            for i in 0..b.values.rows() {
                for (k, &c) in b.cols.iter().enumerate() {
                    b.values[(i, k)] = b.values[(i, k)].scale(s[c]);
                }
            }
        }
    }
}

/// Local system retained for recovery and residual evaluation.
#[derive(Debug, Clone)]
pub enum LocalSystem<T: Scalar> {
    /// `B̃_K`, `l̃_K` over all local trial columns.
    Whitened { bt: DenseMatrix<T>, lt: Vec<T> },
    /// `A_K`, `f_K` of a square (Galerkin or reference) element.
    Square { a: DenseMatrix<T>, f: Vec<T> },
}

#[derive(Debug, Clone)]
pub enum Condensed<T: Scalar> {
    Ls(CondensedLs<T>),
    Ne(CondensedNe<T>),
}

#[derive(Debug, Clone)]
pub struct ElementRecord<T: Scalar> {
    pub element: usize,
    pub local: LocalSystem<T>,
    pub partition: LocalPartition,
    /// Global index of each `partition.interface` entry.
    pub globals: Vec<usize>,
    /// Lift coefficients over all local columns.
    pub lift: Vec<T>,
    pub condensed: Option<Condensed<T>>,
}

impl<T: Scalar> ElementRecord<T> {
    /// Local coefficients from global unknowns: lift plus interface values,
    /// with condensed bubbles recovered.
    pub fn local_solution(&self, u_global: &[T]) -> Result<Vec<T>> {
        let mut u = self.lift.clone();
        let ui: Vec<T> = self.globals.iter().map(|&g| u_global[g]).collect();
        for (&j, &v) in self.partition.interface.iter().zip(&ui) {
            u[j] += v;
        }
        let ub = match &self.condensed {
            None => Vec::new(),
            Some(Condensed::Ne(c)) => c.recover(&ui)?,
            Some(Condensed::Ls(c)) => {
                let LocalSystem::Whitened { bt, lt } = &self.local else {
                    unreachable!("least-squares condensation needs a whitened system")
                };
                // l̃ − B̃(lift + interface values).
                let shift = bt.mat_vec(&u);
                let r: Vec<T> = lt.iter().zip(&shift).map(|(&a, &b)| a - b).collect();
                c.recover(&r)?
            }
        };
        for (&j, v) in self.partition.bubbles.iter().zip(ub) {
            u[j] += v;
        }
        Ok(u)
    }

    /// `l̃_K − B̃_K u_K`, or `None` for square local systems.
    pub fn residual(&self, u_local: &[T]) -> Option<Vec<T>> {
        match &self.local {
            LocalSystem::Whitened { bt, lt } => {
                let y = bt.mat_vec(u_local);
                Some(lt.iter().zip(&y).map(|(&a, &b)| a - b).collect())
            }
            LocalSystem::Square { .. } => None,
        }
    }
}

/// Normal equation `A u = f` with the data needed to rebuild the solution.
#[derive(Debug, Clone)]
pub struct NeAssembly<T: Scalar> {
    pub a: SparseSymmetric<T>,
    pub f: Vec<T>,
    /// `s` with `u = s ∘ u_scaled`, when globally preconditioned.
    pub scaling: Option<Vec<T::Real>>,
    pub dofs: DofMap,
    pub records: Vec<ElementRecord<T>>,
}

/// Overdetermined system `min ‖B̃u − l̃‖` with the data needed to rebuild
/// the solution.
#[derive(Debug, Clone)]
pub struct LsAssembly<T: Scalar> {
    pub b: RowBlocked<T>,
    pub l: Vec<T>,
    pub scaling: Option<Vec<T::Real>>,
    pub dofs: DofMap,
    pub records: Vec<ElementRecord<T>>,
}

#[derive(Clone, Copy, PartialEq, Eq)]
enum Flavor {
    Ne,
    Ls,
}

struct Prepared<T: Scalar> {
    record: ElementRecord<T>,
    /// `A` (NE) or rows (LS) on the interface columns, and its right-hand side.
    matrix: DenseMatrix<T>,
    rhs: Vec<T>,
}

fn check_field<T: Scalar>(form: &Formulation) -> Result<()> {
    if form.kind.is_complex() && !T::IS_COMPLEX {
        return Err(DlsError::UnsupportedCombination(format!(
            "{} needs a complex scalar field",
            form.kind
        )));
    }
    Ok(())
}

fn prepare_element<T: Scalar>(
    k: usize,
    local: LocalSystem<T>,
    dofs: &DofMap,
    lift: &[C64],
    flavor: Flavor,
) -> Result<Prepared<T>> {
    let partition = dofs.partition(k);
    let lift_local: Vec<T> = dofs.local_to_raw[k].iter().map(|&r| T::from_c64(lift[r])).collect();
    // Non-fixed columns, with interface/bubble positions inside that list.
    let mut nonfixed: Vec<usize> = partition.interface.iter().chain(&partition.bubbles).copied().collect();
    nonfixed.sort_unstable();
    let pos = |list: &[usize]| -> Vec<usize> {
        list.iter()
            .map(|j| nonfixed.binary_search(j).expect("non-fixed index"))
            .collect()
    };
    let (ip, bp) = (pos(&partition.interface), pos(&partition.bubbles));
    let (matrix, rhs, condensed) = match (flavor, &local) {
        (Flavor::Ls, LocalSystem::Whitened { bt, lt }) => {
            let (bf, lf) = apply_dirichlet(bt, lt, &nonfixed, &lift_local);
            if partition.bubbles.is_empty() {
                (bf.select_columns(&ip), lf, None)
            } else {
                let c = condense_ls(&bf.select_columns(&ip), &bf.select_columns(&bp), &lf)?;
                (c.rows.clone(), c.rhs.clone(), Some(Condensed::Ls(c)))
            }
        }
        (Flavor::Ls, LocalSystem::Square { .. }) => {
            return Err(DlsError::UnsupportedCombination(
                "square element systems have no overdetermined form".into(),
            ))
        }
        (Flavor::Ne, _) => {
            let (a, f) = match &local {
                LocalSystem::Whitened { bt, lt } => element_ne(bt, lt),
                LocalSystem::Square { a, f } => (a.clone(), f.clone()),
            };
            let (af, ff) = apply_dirichlet_ne(&a, &f, &nonfixed, &lift_local);
            if partition.bubbles.is_empty() {
                (af.select(&ip, &ip), ip.iter().map(|&i| ff[i]).collect(), None)
            } else {
                let c = condense_ne(&af, &ff, &bp, &ip)?;
                (c.schur.clone(), c.rhs.clone(), Some(Condensed::Ne(c)))
            }
        }
    };
    let globals = partition
        .interface
        .iter()
        .map(|&j| dofs.global_of_raw[dofs.local_to_raw[k][j]].expect("interface DOF is global"))
        .collect();
    Ok(Prepared {
        record: ElementRecord {
            element: k,
            local,
            partition,
            globals,
            lift: lift_local,
            condensed,
        },
        matrix,
        rhs,
    })
}

fn map_elements<R: Send>(n: usize, parallel: bool, f: impl Fn(usize) -> Result<R> + Sync) -> Result<Vec<R>> {
    let run = |k| f(k).map_err(|e| e.at_element(k));
    if parallel {
        (0..n).into_par_iter().map(run).collect()
    } else {
        (0..n).map(run).collect()
    }
}

fn local_system<T: Scalar>(
    form: &Formulation,
    element: &Element,
    tables: &FormTables,
    case: &ManufacturedCase,
    signs: &[i8],
    opts: &AssemblyOptions,
) -> Result<LocalSystem<T>> {
    let sys = compute_element(form, element, tables, case, signs);
    if form.has_gram() {
        let (bt, lt) = whitened_element::<T>(&sys, opts.precondition_gram)?;
        Ok(LocalSystem::Whitened { bt, lt })
    } else {
        let s = sys.cast::<T>();
        Ok(LocalSystem::Square {
            a: s.stiffness,
            f: s.load,
        })
    }
}

fn finish_ne<T: Scalar>(
    prepared: Vec<Prepared<T>>,
    dofs: DofMap,
    opts: &AssemblyOptions,
) -> Result<NeAssembly<T>> {
    let n = dofs.n_global();
    let mut entries = Vec::new();
    let mut f = vec![T::zero(); n];
    let mut records = Vec::with_capacity(prepared.len());
    for p in prepared {
        let g = &p.record.globals;
        for (a, &i) in g.iter().enumerate() {
            f[i] += p.rhs[a];
            for (b, &j) in g.iter().enumerate() {
                entries.push((i, j, p.matrix[(a, b)]));
            }
        }
        records.push(p.record);
    }
    let mut a = SparseSymmetric::from_triplets(n, entries);
    let scaling = if opts.precondition_global {
        Some(precondition_global_ne(&mut a, &mut f)?)
    } else {
        None
    };
    Ok(NeAssembly {
        a,
        f,
        scaling,
        dofs,
        records,
    })
}

/// Accumulates `A = Σ_K A_K` and `f = Σ_K f_K` over the global unknowns.
pub fn assemble_ne<T: Scalar>(
    mesh: &Mesh,
    form: &Formulation,
    case: &ManufacturedCase,
    opts: &AssemblyOptions,
) -> Result<NeAssembly<T>> {
    let dofs = DofMap::new(mesh, form, opts.condense)?;
    let lift = dofs.lift(mesh, form, case);
    assemble_ne_with_lift(mesh, form, case, opts, dofs, &lift)
}

/// [`assemble_ne`] with a caller-supplied raw lift vector.
pub fn assemble_ne_with_lift<T: Scalar>(
    mesh: &Mesh,
    form: &Formulation,
    case: &ManufacturedCase,
    opts: &AssemblyOptions,
    dofs: DofMap,
    lift: &[C64],
) -> Result<NeAssembly<T>> {
    check_field::<T>(form)?;
    let tables = FormTables::new(form, mesh.h())?;
    let prepared = map_elements(mesh.num_elements(), opts.parallel, |k| {
        let local = local_system(form, &mesh.elements()[k], &tables, case, &dofs.signs[k], opts)?;
        prepare_element(k, local, &dofs, lift, Flavor::Ne)
    })?;
    finish_ne(prepared, dofs, opts)
}

/// Normal equation from caller-supplied square element matrices in the
/// formulation's local trial ordering (unsigned basis).
pub fn assemble_square_ne<T: Scalar>(
    mesh: &Mesh,
    form: &Formulation,
    case: &ManufacturedCase,
    opts: &AssemblyOptions,
    element_fn: impl Fn(&Element) -> (DenseMatrix<C64>, Vec<C64>) + Sync,
) -> Result<NeAssembly<T>> {
    check_field::<T>(form)?;
    let dofs = DofMap::new(mesh, form, opts.condense)?;
    let lift = dofs.lift(mesh, form, case);
    let prepared = map_elements(mesh.num_elements(), opts.parallel, |k| {
        let (mut a, mut f) = element_fn(&mesh.elements()[k]);
        let s = &dofs.signs[k];
        for i in 0..a.rows() {
            for j in 0..a.cols() {
                if s[i] * s[j] < 0 {
                    a[(i, j)] = -a[(i, j)];
                }
            }
            if s[i] < 0 {
                f[i] = -f[i];
            }
        }
        let local = LocalSystem::Square {
            a: a.cast(),
            f: f.iter().map(|&v| T::from_c64(v)).collect(),
        };
        prepare_element(k, local, &dofs, &lift, Flavor::Ne)
    })?;
    finish_ne(prepared, dofs, opts)
}

/// Stacks the whitened element rows `B̃_K`, `l̃_K` without accumulation.
pub fn assemble_overdetermined<T: Scalar>(
    mesh: &Mesh,
    form: &Formulation,
    case: &ManufacturedCase,
    opts: &AssemblyOptions,
) -> Result<LsAssembly<T>> {
    let dofs = DofMap::new(mesh, form, opts.condense)?;
    let lift = dofs.lift(mesh, form, case);
    assemble_overdetermined_with_lift(mesh, form, case, opts, dofs, &lift)
}

pub fn assemble_overdetermined_with_lift<T: Scalar>(
    mesh: &Mesh,
    form: &Formulation,
    case: &ManufacturedCase,
    opts: &AssemblyOptions,
    dofs: DofMap,
    lift: &[C64],
) -> Result<LsAssembly<T>> {
    check_field::<T>(form)?;
    if !form.has_gram() {
        return Err(DlsError::UnsupportedCombination(format!(
            "{} has no overdetermined form",
            form.kind
        )));
    }
    let tables = FormTables::new(form, mesh.h())?;
    let prepared = map_elements(mesh.num_elements(), opts.parallel, |k| {
        let local = local_system(form, &mesh.elements()[k], &tables, case, &dofs.signs[k], opts)?;
        prepare_element(k, local, &dofs, lift, Flavor::Ls)
    })?;
    let n_cols = dofs.n_global();
    let mut blocks = Vec::with_capacity(prepared.len());
    let mut l = Vec::new();
    let mut records = Vec::with_capacity(prepared.len());
    for p in prepared {
        let mut order: Vec<usize> = (0..p.record.globals.len()).collect();
        order.sort_by_key(|&a| p.record.globals[a]);
        blocks.push(RowBlock {
            element: p.record.element,
            row_offset: l.len(),
            cols: order.iter().map(|&a| p.record.globals[a]).collect(),
            values: p.matrix.select_columns(&order),
        });
        l.extend(p.rhs);
        records.push(p.record);
    }
    let mut b = RowBlocked {
        n_rows: l.len(),
        n_cols,
        blocks,
    };
    let scaling = if opts.precondition_global {
        Some(precondition_global_ls(&mut b)?)
    } else {
        None
    };
    Ok(LsAssembly {
        b,
        l,
        scaling,
        dofs,
        records,
    })
}

fn inverse_sqrt<R: RealScalar>(d: &[R]) -> Result<Vec<R>> {
    d.iter()
        .enumerate()
        .map(|(index, &v)| {
            if v > R::zero() {
                Ok(R::one() / Float::sqrt(v))
            } else {
                Err(DlsError::NonpositiveDiagonal { index })
            }
        })
        .collect()
}

/// `A ↦ D^{−1/2}AD^{−1/2}`, `f ↦ D^{−1/2}f` with `D = diag(A)`; returns
/// `s = diag(D^{−1/2})` so that `u = s ∘ u_scaled`.
pub fn precondition_global_ne<T: Scalar>(a: &mut SparseSymmetric<T>, f: &mut [T]) -> Result<Vec<T::Real>> {
    let d: Vec<T::Real> = a.diag().iter().map(|v| v.re()).collect();
    let s = inverse_sqrt(&d)?;
    a.scale_symmetric(&s);
    for (v, &si) in f.iter_mut().zip(&s) {
        *v = v.scale(si);
    }
    Ok(s)
}

/// `B̃ ↦ B̃D^{−1/2}` with `D` the squared column norms (`diag(B̃*B̃)`).
pub fn precondition_global_ls<T: Scalar>(b: &mut RowBlocked<T>) -> Result<Vec<T::Real>> {
    let s = inverse_sqrt(&b.column_norms_sq())?;
    b.scale_columns(&s);
    Ok(s)
}

fn field_name<T: Scalar>() -> &'static str {
    if T::IS_COMPLEX {
        "complex"
    } else {
        "real"
    }
}

fn write_value<T: Scalar>(w: &mut impl Write, v: T) -> std::io::Result<()> {
    let c = v.to_c64();
    if T::IS_COMPLEX {
        write!(w, " {:.16e} {:.16e}", c.re, c.im)
    } else {
        write!(w, " {:.16e}", c.re)
    }
}

/// Matrix Market coordinate export, both triangles, 1-based.
pub fn write_sparse_mtx<T: Scalar>(w: &mut impl Write, a: &SparseSymmetric<T>) -> Result<()> {
    writeln!(w, "%%MatrixMarket matrix coordinate {} general", field_name::<T>())?;
    writeln!(w, "{} {} {}", a.dim(), a.dim(), a.nnz())?;
    for i in 0..a.dim() {
        for (j, v) in a.row(i) {
            write!(w, "{} {}", i + 1, j + 1)?;
            write_value(w, v)?;
            writeln!(w)?;
        }
    }
    Ok(())
}

pub fn write_rowblocked_mtx<T: Scalar>(w: &mut impl Write, b: &RowBlocked<T>) -> Result<()> {
    let nnz: usize = b.blocks.iter().map(|k| k.values.rows() * k.cols.len()).sum();
    writeln!(w, "%%MatrixMarket matrix coordinate {} general", field_name::<T>())?;
    writeln!(w, "{} {} {}", b.n_rows, b.n_cols, nnz)?;
    for blk in &b.blocks {
        for i in 0..blk.values.rows() {
            for (k, &c) in blk.cols.iter().enumerate() {
                write!(w, "{} {}", blk.row_offset + i + 1, c + 1)?;
                write_value(w, blk.values[(i, k)])?;
                writeln!(w)?;
            }
        }
    }
    Ok(())
}

pub fn write_vector_mtx<T: Scalar>(w: &mut impl Write, v: &[T]) -> Result<()> {
    writeln!(w, "%%MatrixMarket matrix array {} general", field_name::<T>())?;
    writeln!(w, "{} 1", v.len())?;
    for &x in v {
        let c = x.to_c64();
        if T::IS_COMPLEX {
            writeln!(w, "{:.16e} {:.16e}", c.re, c.im)?;
        } else {
            writeln!(w, "{:.16e}", c.re)?;
        }
    }
    Ok(())
}
