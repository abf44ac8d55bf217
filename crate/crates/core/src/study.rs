//! Refinement studies: convergence, conditioning, round-off failure,
//! near-resonance acoustics and the FOSLS comparison.

use std::fmt::Write as _;
use std::fs::{self, File};
use std::io::BufWriter;
use std::path::{Path, PathBuf};
use std::str::FromStr;
use std::time::Instant;

use crate::assembly::{
    assemble_ne, assemble_overdetermined, assemble_square_ne, write_rowblocked_mtx, write_sparse_mtx,
    write_vector_mtx, AssemblyOptions, LsAssembly, NeAssembly, RowBlocked, SparseSymmetric,
};
use crate::error::{DlsError, Result};
use crate::formulation::{
    fosls_reference_element, make_case, make_formulation, FormTables, Formulation, FormulationKind,
    ManufacturedCase,
};
use crate::linalg::condition_number_hermitian;
use crate::mesh::uniform_mesh;
use crate::scalar::{Scalar, C32, C64};
use crate::solve::{error_norms, residual_rho, solve_ls, solve_ne, Solution};

/// Largest system for which dense condition numbers are computed.
pub const COND_LIMIT: usize = 5000;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum StudyKind {
    Converge,
    Condition,
    Failure,
    Acoustics,
    CompareFosls,
}

impl StudyKind {
    pub fn name(self) -> &'static str {
        match self {
            StudyKind::Converge => "converge",
            StudyKind::Condition => "condition",
            StudyKind::Failure => "failure",
            StudyKind::Acoustics => "acoustics",
            StudyKind::CompareFosls => "compare-fosls",
        }
    }

    /// Dense condition numbers are only worth their cost where they are the
    /// quantity being studied.
    pub fn reports_conditioning(self) -> bool {
        matches!(self, StudyKind::Condition | StudyKind::Acoustics)
    }

    fn default_case(self) -> &'static str {
        match self {
            StudyKind::Converge | StudyKind::Condition => "poisson-sine",
            StudyKind::Failure => "poisson-quartic",
            StudyKind::Acoustics => "acoustics-resonance",
            StudyKind::CompareFosls => "poisson-alpha-sine",
        }
    }
}

impl FromStr for StudyKind {
    type Err = DlsError;
    fn from_str(s: &str) -> Result<Self> {
        [
            StudyKind::Converge,
            StudyKind::Condition,
            StudyKind::Failure,
            StudyKind::Acoustics,
            StudyKind::CompareFosls,
        ]
        .into_iter()
        .find(|k| k.name() == s)
        .ok_or_else(|| DlsError::InvalidConfig {
            field: "study",
            message: format!("unknown study '{s}'"),
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Precision {
    Single,
    Double,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SolverSet {
    pub ne: bool,
    pub qr: bool,
}

impl SolverSet {
    pub const BOTH: SolverSet = SolverSet { ne: true, qr: true };
}

#[derive(Debug, Clone)]
pub struct StudyConfig {
    pub study: StudyKind,
    pub formulation: FormulationKind,
    pub case: Option<String>,
    pub p: usize,
    pub dp: usize,
    /// Enrichment levels for `compare-fosls`.
    pub dp_list: Vec<usize>,
    pub refinements: usize,
    /// Elements per side of the coarsest mesh.
    pub start: Option<usize>,
    pub precision: Precision,
    pub solvers: SolverSet,
    pub condense: bool,
    pub precondition_gram: bool,
    pub precondition_global: bool,
    pub dump_matrices: bool,
    pub out: Option<PathBuf>,
    /// Frequency override for the acoustics case.
    pub omega: Option<f64>,
}

impl StudyConfig {
    pub fn new(study: StudyKind, formulation: FormulationKind, p: usize, dp: usize, refinements: usize) -> Self {
        Self {
            study,
            formulation,
            case: None,
            p,
            dp,
            dp_list: vec![dp],
            refinements,
            start: None,
            precision: Precision::Double,
            solvers: SolverSet::BOTH,
            condense: true,
            precondition_gram: true,
            precondition_global: true,
            dump_matrices: false,
            out: None,
            omega: None,
        }
    }

    /// Applies the study's forced settings and checks the rest.
    pub fn validate(mut self) -> Result<Self> {
        let bad = |field, message: &str| DlsError::InvalidConfig {
            field,
            message: message.to_string(),
        };
        if self.refinements == 0 {
            return Err(bad("refinements", "must be at least 1"));
        }
        if self.p == 0 {
            return Err(bad("p", "must be at least 1"));
        }
        if self.start == Some(0) {
            return Err(bad("start", "must be at least 1"));
        }
        if !self.solvers.ne && !self.solvers.qr {
            return Err(bad("solver", "select ne, qr or both"));
        }
        match self.study {
            StudyKind::Acoustics => self.formulation = FormulationKind::AcousticsUltraweak,
            StudyKind::Failure => self.solvers = SolverSet::BOTH,
            StudyKind::CompareFosls => {
                self.formulation = FormulationKind::FoslsStrong;
                if self.dp_list.is_empty() {
                    return Err(bad("dp-list", "must not be empty"));
                }
            }
            _ => {}
        }
        let case = self.case_name().to_string();
        let acoustic_case = case.starts_with("acoustics");
        if acoustic_case != self.formulation.is_complex() {
            return Err(bad(
                "case",
                &format!("case '{case}' does not match formulation '{}'", self.formulation),
            ));
        }
        make_case(&case)?;
        if self.formulation == FormulationKind::BubnovGalerkin && self.solvers.qr {
            return Err(bad("solver", "bubnov-galerkin has no overdetermined system; use --solver ne"));
        }
        if self.dump_matrices && self.out.is_none() {
            return Err(bad("out", "--dump-matrices needs an output directory"));
        }
        Ok(self)
    }

    pub fn case_name(&self) -> &str {
        self.case.as_deref().unwrap_or(self.study.default_case())
    }

    pub fn make_case(&self) -> Result<ManufacturedCase> {
        let case = make_case(self.case_name())?;
        Ok(match self.omega {
            Some(w) if case.is_complex() => ManufacturedCase::acoustics(w),
            _ => case,
        })
    }

    pub fn start(&self) -> usize {
        self.start.unwrap_or(match self.study {
            StudyKind::Failure => 1,
            _ => 2,
        })
    }

    pub fn meshes(&self) -> Vec<usize> {
        (0..self.refinements).map(|r| self.start() << r).collect()
    }

    fn options(&self) -> AssemblyOptions {
        AssemblyOptions {
            condense: self.condense,
            precondition_gram: self.precondition_gram,
            precondition_global: self.precondition_global,
            parallel: true,
        }
    }
}

/// One refinement level of a study.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct StudyRow {
    pub n: usize,
    pub h: f64,
    pub n_dofs: usize,
    pub m_rows: Option<usize>,
    pub cond_a: Option<f64>,
    pub cond_btilde: Option<f64>,
    pub err_ne: Option<f64>,
    pub err_qr: Option<f64>,
    pub rho: Option<f64>,
    pub eta_total: Option<f64>,
    pub wall_ms: f64,
}

pub const CSV_HEADER: &str = "n,h,N,M,cond_A,cond_Btilde,err_ne,err_qr,rho,eta_total,wall_ms";

fn opt(v: Option<f64>) -> String {
    v.map(|x| format!("{x:.10e}")).unwrap_or_default()
}

impl StudyRow {
    pub fn csv(&self) -> String {
        format!(
            "{},{:.10e},{},{},{},{},{},{},{},{},{:.3}",
            self.n,
            self.h,
            self.n_dofs,
            self.m_rows.map(|m| m.to_string()).unwrap_or_default(),
            opt(self.cond_a),
            opt(self.cond_btilde),
            opt(self.err_ne),
            opt(self.err_qr),
            opt(self.rho),
            opt(self.eta_total),
            self.wall_ms
        )
    }
}

/// A solver that did not complete at some refinement.
#[derive(Debug, Clone)]
pub struct SolverFailure {
    pub n: usize,
    pub solver: &'static str,
    pub error: String,
}

#[derive(Debug, Clone, Default)]
pub struct StudyReport {
    pub rows: Vec<StudyRow>,
    pub failures: Vec<SolverFailure>,
    pub comparison: Vec<FoslsComparisonRow>,
}

impl StudyReport {
    pub fn csv(&self) -> String {
        let mut s = String::new();
        if self.comparison.is_empty() {
            s.push_str(CSV_HEADER);
            s.push('\n');
            for r in &self.rows {
                s.push_str(&r.csv());
                s.push('\n');
            }
        } else {
            s.push_str(COMPARISON_HEADER);
            s.push('\n');
            for r in &self.comparison {
                let _ = writeln!(
                    s,
                    "{},{:.10e},{},{},{:.10e},{:.10e}",
                    r.n, r.h, r.n_dofs, r.dp, r.solution_distance, r.matrix_distance
                );
            }
        }
        s
    }
}

/// Smallest eigenvalue ratio of a Hermitian matrix, computed in double.
fn cond_sparse<T: Scalar>(a: &SparseSymmetric<T>) -> Option<f64> {
    (a.dim() > 0 && a.dim() <= COND_LIMIT)
        .then(|| condition_number_hermitian(&a.to_dense()).ok())
        .flatten()
}

/// `sqrt(cond(B̃*B̃))`; the Gram is formed in double and kept real when it can be.
fn cond_rowblocked<T: Scalar>(b: &RowBlocked<T>) -> Option<f64> {
    if b.n_cols == 0 || b.n_cols > COND_LIMIT {
        return None;
    }
    let g = b.gram_c64();
    let c = if T::IS_COMPLEX {
        condition_number_hermitian(&g)
    } else {
        condition_number_hermitian(&g.map(|z: C64| z.re))
    };
    c.ok().map(f64::sqrt)
}

fn dump<T: Scalar>(
    dir: &Path,
    n: usize,
    ne: Option<&NeAssembly<T>>,
    ls: Option<&LsAssembly<T>>,
) -> Result<()> {
    fs::create_dir_all(dir)?;
    if let Some(ne) = ne {
        write_sparse_mtx(&mut BufWriter::new(File::create(dir.join(format!("A_{n}.mtx")))?), &ne.a)?;
    }
    if let Some(ls) = ls {
        write_rowblocked_mtx(&mut BufWriter::new(File::create(dir.join(format!("Btilde_{n}.mtx")))?), &ls.b)?;
        write_vector_mtx(&mut BufWriter::new(File::create(dir.join(format!("l_{n}.mtx")))?), &ls.l)?;
    }
    Ok(())
}

fn refinement<T: Scalar>(
    cfg: &StudyConfig,
    form: &Formulation,
    case: &ManufacturedCase,
    n: usize,
    failures: &mut Vec<SolverFailure>,
) -> Result<StudyRow> {
    let t0 = Instant::now();
    let mesh = uniform_mesh(n)?;
    let opts = cfg.options();
    let mut row = StudyRow {
        n,
        h: mesh.h(),
        ..StudyRow::default()
    };
    let mut fail = |solver, e: DlsError| {
        log::warn!("n = {n}: {solver} failed: {e}");
        failures.push(SolverFailure {
            n,
            solver,
            error: e.to_string(),
        });
    };
    let rel_error = |sol: &Solution<T>, dofs| -> Result<f64> {
        Ok(error_norms(&mesh, form, dofs, &sol.coefficients, Some(case))?.l2_relative())
    };

    let ne = if cfg.solvers.ne || cfg.study == StudyKind::Condition {
        Some(assemble_ne::<T>(&mesh, form, case, &opts)?)
    } else {
        None
    };
    let ls = if cfg.solvers.qr {
        Some(assemble_overdetermined::<T>(&mesh, form, case, &opts)?)
    } else {
        None
    };
    log::debug!("n = {n}: assembled in {:.0} ms", t0.elapsed().as_secs_f64() * 1e3);
    if let Some(ne) = &ne {
        row.n_dofs = ne.a.dim();
        if cfg.study.reports_conditioning() {
            row.cond_a = cond_sparse(&ne.a);
        }
        log::debug!("n = {n}: cond_A done at {:.0} ms", t0.elapsed().as_secs_f64() * 1e3);
        if cfg.solvers.ne {
            match solve_ne(ne) {
                Ok(sol) => {
                    row.err_ne = Some(rel_error(&sol, &ne.dofs)?);
                    if !sol.indicators.is_empty() {
                        row.eta_total = Some(sol.eta_total());
                    }
                }
                Err(e) => fail("ne", e),
            }
        }
    }
    log::debug!("n = {n}: ne done at {:.0} ms", t0.elapsed().as_secs_f64() * 1e3);
    if let Some(ls) = &ls {
        row.n_dofs = ls.b.n_cols;
        row.m_rows = Some(ls.b.n_rows);
        if cfg.study.reports_conditioning() {
            row.cond_btilde = cond_rowblocked(&ls.b);
        }
        log::debug!("n = {n}: cond_Btilde done at {:.0} ms", t0.elapsed().as_secs_f64() * 1e3);
        match solve_ls(ls) {
            Ok(sol) => {
                row.err_qr = Some(rel_error(&sol, &ls.dofs)?);
                row.eta_total = Some(sol.eta_total());
                row.rho = Some(residual_rho(ls, &sol).unwrap_or(f64::INFINITY));
            }
            Err(e) => fail("qr", e),
        }
    }
    if cfg.dump_matrices {
        if let Some(dir) = &cfg.out {
            dump(dir, n, ne.as_ref(), ls.as_ref())?;
        }
    }
    row.wall_ms = t0.elapsed().as_secs_f64() * 1e3;
    Ok(row)
}

/// Runs every refinement of a study and writes `<out>/<study>.csv` when an
/// output directory is configured.
pub fn run_study(cfg: &StudyConfig) -> Result<StudyReport> {
    let cfg = cfg.clone().validate()?;
    let case = cfg.make_case()?;
    let mut report = StudyReport::default();
    if cfg.study == StudyKind::CompareFosls {
        report.comparison = compare_fosls(&case, cfg.p, &cfg.dp_list, &cfg.meshes())?;
    } else {
        let form = make_formulation(cfg.formulation, cfg.p, cfg.dp, case.parameters())?;
        for n in cfg.meshes() {
            let row = match (cfg.precision, form.kind.is_complex()) {
                (Precision::Double, false) => refinement::<f64>(&cfg, &form, &case, n, &mut report.failures),
                (Precision::Single, false) => refinement::<f32>(&cfg, &form, &case, n, &mut report.failures),
                (Precision::Double, true) => refinement::<C64>(&cfg, &form, &case, n, &mut report.failures),
                (Precision::Single, true) => refinement::<C32>(&cfg, &form, &case, n, &mut report.failures),
            }?;
            log::info!("{}", row.csv());
            report.rows.push(row);
        }
    }
    if let Some(dir) = &cfg.out {
        fs::create_dir_all(dir)?;
        fs::write(dir.join(format!("{}.csv", cfg.study.name())), report.csv())?;
    }
    Ok(report)
}

pub const COMPARISON_HEADER: &str = "n,h,N,dp,solution_distance,matrix_distance";

/// Distance between the FOSLS solution and the discrete least-squares
/// solution of the strong formulation at one mesh and enrichment.
#[derive(Debug, Clone, PartialEq)]
pub struct FoslsComparisonRow {
    pub n: usize,
    pub h: f64,
    pub n_dofs: usize,
    pub dp: usize,
    /// `‖u_LS − u_DLS‖_U / ‖u_LS‖_U`.
    pub solution_distance: f64,
    /// `‖A_LS − A‖_F / ‖A_LS‖_F`.
    pub matrix_distance: f64,
}

fn sparse_relative_distance(a: &SparseSymmetric<f64>, b: &SparseSymmetric<f64>) -> f64 {
    let mut diff = 0.0;
    let mut base = 0.0;
    for i in 0..a.dim() {
        let mut ra = a.row(i).peekable();
        let mut rb = b.row(i).peekable();
        loop {
            let (x, y) = match (ra.peek().copied(), rb.peek().copied()) {
                (None, None) => break,
                (Some((ja, va)), Some((jb, vb))) if ja == jb => {
                    ra.next();
                    rb.next();
                    (va, vb)
                }
                (Some((ja, va)), Some((jb, _))) if ja < jb => {
                    ra.next();
                    (va, 0.0)
                }
                (Some((_, va)), None) => {
                    ra.next();
                    (va, 0.0)
                }
                (_, Some((_, vb))) => {
                    rb.next();
                    (0.0, vb)
                }
            };
            diff += (x - y) * (x - y);
            base += x * x;
        }
    }
    (diff / base).sqrt()
}

/// Compares the least-squares functional minimizer with the discrete
/// least-squares solution of the strong formulation, without condensation
/// or global scaling so the two matrices share one numbering and basis.
pub fn compare_fosls(
    case: &ManufacturedCase,
    p: usize,
    dp_list: &[usize],
    meshes: &[usize],
) -> Result<Vec<FoslsComparisonRow>> {
    let opts = AssemblyOptions {
        condense: false,
        precondition_global: false,
        ..AssemblyOptions::default()
    };
    let mut rows = Vec::new();
    for &n in meshes {
        let mesh = uniform_mesh(n)?;
        let reference_form = make_formulation(FormulationKind::FoslsStrong, p, 0, case.parameters())?;
        let ref_tables = FormTables::with_order(&reference_form, mesh.h(), p + 6)?;
        let reference = assemble_square_ne::<f64>(&mesh, &reference_form, case, &opts, |el| {
            fosls_reference_element(&reference_form, el, &ref_tables, case.source.as_ref())
        })?;
        let u_ref = solve_ne(&reference)?;
        let ref_norm = error_norms(&mesh, &reference_form, &reference.dofs, &u_ref.coefficients, None)?.u_norm();
        for &dp in dp_list {
            let form = make_formulation(FormulationKind::FoslsStrong, p, dp, case.parameters())?;
            let dls = assemble_ne::<f64>(&mesh, &form, case, &opts)?;
            let u = solve_ne(&dls)?;
            let diff: Vec<f64> = u.coefficients.iter().zip(&u_ref.coefficients).map(|(a, b)| a - b).collect();
            let dist = error_norms(&mesh, &form, &dls.dofs, &diff, None)?.u_norm();
            rows.push(FoslsComparisonRow {
                n,
                h: mesh.h(),
                n_dofs: dls.a.dim(),
                dp,
                solution_distance: dist / ref_norm,
                matrix_distance: sparse_relative_distance(&reference.a, &dls.a),
            });
        }
    }
    Ok(rows)
}

/// Least-squares slope of `log y` against `log x`.
pub fn loglog_slope(x: &[f64], y: &[f64]) -> f64 {
    let lx: Vec<f64> = x.iter().map(|v| v.ln()).collect();
    let ly: Vec<f64> = y.iter().map(|v| v.ln()).collect();
    let n = lx.len() as f64;
    let mx = lx.iter().sum::<f64>() / n;
    let my = ly.iter().sum::<f64>() / n;
    let sxy: f64 = lx.iter().zip(&ly).map(|(a, b)| (a - mx) * (b - my)).sum();
    let sxx: f64 = lx.iter().map(|a| (a - mx) * (a - mx)).sum();
    sxy / sxx
}
