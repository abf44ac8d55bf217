//! Variational formulations, their element forms, and manufactured solutions.
//!
//! Forms are integrated in `Complex64` on the physical element; the element
//! kernel rounds them to the working precision afterwards.

use std::f64::consts::PI;
use std::fmt;
use std::str::FromStr;
use std::sync::Arc;

use crate::basis::{eval_basis, gauss_rule, pullback, BasisTable, MasterSpace, QuadratureRule};
use crate::error::{DlsError, Result};
use crate::linalg::DenseMatrix;
use crate::mesh::{DofLayout, Element, Mesh, Side, SpaceKind};
use crate::scalar::C64;

pub type ScalarField = Arc<dyn Fn(f64, f64) -> C64 + Send + Sync>;
pub type VectorField = Arc<dyn Fn(f64, f64) -> [C64; 2] + Send + Sync>;
pub type RealField = Arc<dyn Fn(f64, f64) -> f64 + Send + Sync>;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum FormulationKind {
    FoslsStrong,
    PrimalDpg,
    UltraweakDpg,
    BubnovGalerkin,
    AcousticsUltraweak,
}

impl FormulationKind {
    pub const ALL: [FormulationKind; 5] = [
        FormulationKind::FoslsStrong,
        FormulationKind::PrimalDpg,
        FormulationKind::UltraweakDpg,
        FormulationKind::BubnovGalerkin,
        FormulationKind::AcousticsUltraweak,
    ];

    pub fn name(self) -> &'static str {
        match self {
            FormulationKind::FoslsStrong => "fosls-strong",
            FormulationKind::PrimalDpg => "primal-dpg",
            FormulationKind::UltraweakDpg => "ultraweak-dpg",
            FormulationKind::BubnovGalerkin => "bubnov-galerkin",
            FormulationKind::AcousticsUltraweak => "acoustics-ultraweak",
        }
    }

    pub fn is_complex(self) -> bool {
        self == FormulationKind::AcousticsUltraweak
    }

    /// Whether the test space is element-local (block-diagonal Gram).
    pub fn is_broken(self) -> bool {
        matches!(
            self,
            FormulationKind::PrimalDpg
                | FormulationKind::UltraweakDpg
                | FormulationKind::AcousticsUltraweak
        )
    }
}

impl fmt::Display for FormulationKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for FormulationKind {
    type Err = DlsError;
    fn from_str(s: &str) -> Result<Self> {
        FormulationKind::ALL
            .into_iter()
            .find(|k| k.name() == s)
            .ok_or_else(|| DlsError::UnknownFormulation(s.to_string()))
    }
}

/// What a trial component approximates, for lifts and error norms.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FieldRole {
    /// `u` (Poisson) or `p` (acoustics).
    Scalar,
    /// `σ = ∇u` or the velocity, as one `H(div)` field.
    Vector,
    VectorX,
    VectorY,
    /// Skeleton trace of the scalar field.
    ScalarTrace,
    /// Normal trace of the vector field, relative to the global edge normal.
    NormalFlux,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Component {
    pub name: &'static str,
    pub kind: SpaceKind,
    pub p: usize,
    pub role: FieldRole,
    /// Boundary DOFs carry Dirichlet data and are eliminated.
    pub fixed_on_boundary: bool,
}

impl Component {
    pub fn local_dim(&self) -> usize {
        self.kind.local_dim(self.p)
    }
}

/// Coefficients entering the bilinear form.
#[derive(Clone, Default)]
pub struct Parameters {
    /// Reaction coefficient `α(x, y)`; absent means zero.
    pub alpha: Option<RealField>,
    pub omega: f64,
}

impl fmt::Debug for Parameters {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("Parameters")
            .field("alpha", &self.alpha.as_ref().map(|_| "<fn>"))
            .field("omega", &self.omega)
            .finish()
    }
}

#[derive(Debug, Clone)]
pub struct Formulation {
    pub kind: FormulationKind,
    pub p: usize,
    pub dp: usize,
    pub trial: Vec<Component>,
    pub test: Vec<Component>,
    pub params: Parameters,
}

pub fn make_formulation(
    kind: FormulationKind,
    p: usize,
    dp: usize,
    params: Parameters,
) -> Result<Formulation> {
    if p == 0 {
        return Err(DlsError::UnsupportedOrder { p });
    }
    let c = |name, kind, p, role, fixed| Component {
        name,
        kind,
        p,
        role,
        fixed_on_boundary: fixed,
    };
    let pt = p + dp;
    let (trial, test) = match kind {
        FormulationKind::FoslsStrong => (
            vec![
                c("u", SpaceKind::H1Conforming, p, FieldRole::Scalar, true),
                c("sigma", SpaceKind::HdivConforming, p, FieldRole::Vector, false),
            ],
            vec![
                c("v", SpaceKind::L2Broken, pt, FieldRole::Scalar, false),
                c("tau_x", SpaceKind::L2Broken, pt, FieldRole::VectorX, false),
                c("tau_y", SpaceKind::L2Broken, pt, FieldRole::VectorY, false),
            ],
        ),
        FormulationKind::PrimalDpg => (
            vec![
                c("u", SpaceKind::H1Conforming, p, FieldRole::Scalar, true),
                c("sigma_n", SpaceKind::TraceMinusHalf, p, FieldRole::NormalFlux, false),
            ],
            vec![c("v", SpaceKind::H1BrokenTest, pt, FieldRole::Scalar, false)],
        ),
        FormulationKind::UltraweakDpg | FormulationKind::AcousticsUltraweak => {
            let acoustic = kind == FormulationKind::AcousticsUltraweak;
            let names = if acoustic {
                ["p", "u_x", "u_y", "p_hat", "u_n"]
            } else {
                ["u", "sigma_x", "sigma_y", "u_hat", "sigma_n"]
            };
            (
                vec![
                    c(names[0], SpaceKind::L2Broken, p, FieldRole::Scalar, false),
                    c(names[1], SpaceKind::L2Broken, p, FieldRole::VectorX, false),
                    c(names[2], SpaceKind::L2Broken, p, FieldRole::VectorY, false),
                    c(names[3], SpaceKind::TraceHalf, p, FieldRole::ScalarTrace, !acoustic),
                    c(names[4], SpaceKind::TraceMinusHalf, p, FieldRole::NormalFlux, acoustic),
                ],
                vec![
                    c("v", SpaceKind::H1BrokenTest, pt, FieldRole::Scalar, false),
                    c("tau", SpaceKind::HdivBrokenTest, pt, FieldRole::Vector, false),
                ],
            )
        }
        FormulationKind::BubnovGalerkin => {
            let u = c("u", SpaceKind::H1Conforming, p, FieldRole::Scalar, true);
            (vec![u.clone()], vec![u])
        }
    };
    let dp = if kind == FormulationKind::BubnovGalerkin { 0 } else { dp };
    Ok(Formulation {
        kind,
        p,
        dp,
        trial,
        test,
        params,
    })
}

impl Formulation {
    pub fn trial_dim(&self) -> usize {
        self.trial.iter().map(Component::local_dim).sum()
    }

    pub fn test_dim(&self) -> usize {
        self.test.iter().map(Component::local_dim).sum()
    }

    /// Start of each trial component in the local trial vector.
    pub fn trial_offsets(&self) -> Vec<usize> {
        offsets(&self.trial)
    }

    pub fn test_offsets(&self) -> Vec<usize> {
        offsets(&self.test)
    }

    /// Gauss points per direction for the element forms.
    pub fn quad_order(&self) -> usize {
        self.p + self.dp + 2
    }

    /// `false` for Bubnov-Galerkin, whose test space is the trial space and
    /// which has no separate test Gram matrix.
    pub fn has_gram(&self) -> bool {
        self.kind != FormulationKind::BubnovGalerkin
    }
}

fn offsets(components: &[Component]) -> Vec<usize> {
    let mut out = Vec::with_capacity(components.len());
    let mut acc = 0;
    for c in components {
        out.push(acc);
        acc += c.local_dim();
    }
    out
}

/// Master tables for one formulation, pulled back to elements of side `h`.
#[derive(Debug, Clone)]
pub struct FormTables {
    pub h: f64,
    pub rule: QuadratureRule,
    volume: Vec<(MasterSpace, usize, BasisTable)>,
    sides: Vec<Vec<(MasterSpace, usize, BasisTable)>>,
}

impl FormTables {
    pub fn new(form: &Formulation, h: f64) -> Result<Self> {
        Self::with_order(form, h, form.quad_order())
    }

    pub fn with_order(form: &Formulation, h: f64, q: usize) -> Result<Self> {
        let rule = gauss_rule(q);
        let el = Element {
            id: 0,
            i: 0,
            j: 0,
            origin: (0.0, 0.0),
            h,
        };
        let mut wanted: Vec<(MasterSpace, usize)> = Vec::new();
        for c in form.trial.iter().chain(&form.test) {
            let space = match c.kind {
                SpaceKind::H1Conforming | SpaceKind::H1BrokenTest | SpaceKind::TraceHalf => {
                    MasterSpace::W
                }
                SpaceKind::HdivConforming | SpaceKind::HdivBrokenTest => MasterSpace::V,
                SpaceKind::L2Broken => MasterSpace::Y,
                SpaceKind::TraceMinusHalf => continue,
            };
            if !wanted.contains(&(space, c.p)) {
                wanted.push((space, c.p));
            }
        }
        let mut volume = Vec::new();
        let mut sides = vec![Vec::new(); 4];
        for &(space, p) in &wanted {
            let t = eval_basis(space, p, &rule.points)?;
            volume.push((space, p, pullback(&el, &t)));
            for (s, side) in Side::ALL.iter().enumerate() {
                let pts: Vec<(f64, f64)> = rule.edge_points.iter().map(|&t| side.point(t)).collect();
                let t = eval_basis(space, p, &pts)?;
                sides[s].push((space, p, pullback(&el, &t)));
            }
        }
        Ok(Self {
            h,
            rule,
            volume,
            sides,
        })
    }

    pub fn volume(&self, space: MasterSpace, p: usize) -> &BasisTable {
        find(&self.volume, space, p)
    }

    pub fn side(&self, side: usize, space: MasterSpace, p: usize) -> &BasisTable {
        find(&self.sides[side], space, p)
    }

    /// Orthonormal edge functions `ψ_j(t)` at the edge points.
    pub fn flux_values(&self, p: usize) -> Vec<Vec<f64>> {
        let mut out = vec![vec![0.0; self.rule.edge_points.len()]; p];
        for (k, &t) in self.rule.edge_points.iter().enumerate() {
            for (j, v) in crate::basis::psi(p, t).into_iter().enumerate() {
                out[j][k] = v;
            }
        }
        out
    }
}

fn find(list: &[(MasterSpace, usize, BasisTable)], space: MasterSpace, p: usize) -> &BasisTable {
    &list
        .iter()
        .find(|(s, q, _)| *s == space && *q == p)
        .expect("table not precomputed")
        .2
}

/// Element contributions before any scaling: `G_K` (absent for
/// Bubnov-Galerkin), `B_K` with `B_ij = b(u_j, v_i)`, and `l_K`.
#[derive(Debug, Clone)]
pub struct ElementForms {
    pub gram: Option<DenseMatrix<C64>>,
    pub stiffness: DenseMatrix<C64>,
    pub load: Vec<C64>,
}

/// Integrates `b`, `ℓ` and the test inner product over one element, using
/// unsigned local trial functions (connectivity signs are applied later).
pub fn eval_forms(
    form: &Formulation,
    element: &Element,
    tables: &FormTables,
    source: &(dyn Fn(f64, f64) -> C64 + Send + Sync),
) -> ElementForms {
    let (p, pt) = (form.p, form.p + form.dp);
    let rule = &tables.rule;
    let h = element.h;
    let wv: Vec<f64> = rule.weights.iter().map(|w| w * h * h).collect();
    let we: Vec<f64> = rule.edge_weights.iter().map(|w| w * h).collect();
    let points: Vec<(f64, f64)> = rule.points.iter().map(|&(a, b)| element.map(a, b)).collect();
    let fvals: Vec<C64> = points.iter().map(|&(x, y)| source(x, y)).collect();
    let alpha: Option<Vec<f64>> = form
        .params
        .alpha
        .as_ref()
        .map(|a| points.iter().map(|&(x, y)| a(x, y)).collect());
    let nq = wv.len();
    let ne = we.len();
    let mut b = DenseMatrix::<C64>::zeros(form.test_dim(), form.trial_dim());
    let mut l = vec![C64::new(0.0, 0.0); form.test_dim()];
    let re = |x: f64| C64::new(x, 0.0);

    let gram = match form.kind {
        FormulationKind::FoslsStrong => {
            let w = tables.volume(MasterSpace::W, p);
            let v = tables.volume(MasterSpace::V, p);
            let y = tables.volume(MasterSpace::Y, pt);
            let (nw, ny) = (w.dim(), y.dim());
            for k in 0..nq {
                for i in 0..ny {
                    let yw = y.scalar(i, k) * wv[k];
                    if let Some(a) = &alpha {
                        for j in 0..nw {
                            b[(i, j)] += re(a[k] * w.scalar(j, k) * yw);
                        }
                    }
                    for j in 0..nw {
                        let g = w.gradient(j, k);
                        b[(ny + i, j)] -= re(g[0] * yw);
                        b[(2 * ny + i, j)] -= re(g[1] * yw);
                    }
                    for j in 0..v.dim() {
                        let s = v.vector(j, k);
                        b[(i, nw + j)] -= re(v.divergence(j, k) * yw);
                        b[(ny + i, nw + j)] += re(s[0] * yw);
                        b[(2 * ny + i, nw + j)] += re(s[1] * yw);
                    }
                    l[i] += fvals[k] * yw;
                }
            }
            let mut g = DenseMatrix::zeros(3 * ny, 3 * ny);
            for i in 0..ny {
                for j in 0..ny {
                    let m: f64 = (0..nq).map(|k| wv[k] * y.scalar(i, k) * y.scalar(j, k)).sum();
                    for blk in 0..3 {
                        g[(blk * ny + i, blk * ny + j)] = re(m);
                    }
                }
            }
            Some(g)
        }
        FormulationKind::PrimalDpg => {
            let w = tables.volume(MasterSpace::W, p);
            let t = tables.volume(MasterSpace::W, pt);
            let (nw, nt) = (w.dim(), t.dim());
            for k in 0..nq {
                for i in 0..nt {
                    let gv = t.gradient(i, k);
                    for j in 0..nw {
                        let gu = w.gradient(j, k);
                        b[(i, j)] += re(wv[k] * (gu[0] * gv[0] + gu[1] * gv[1]));
                    }
                    l[i] += fvals[k] * (t.scalar(i, k) * wv[k]);
                }
            }
            let psi = tables.flux_values(p);
            for s in 0..4 {
                let ts = tables.side(s, MasterSpace::W, pt);
                for i in 0..nt {
                    for (j, pj) in psi.iter().enumerate() {
                        // Flux basis ψ_j/h against ds = h dt.
                        let val: f64 = (0..ne).map(|k| we[k] / h * pj[k] * ts.scalar(i, k)).sum();
                        b[(i, nw + s * p + j)] -= re(val);
                    }
                }
            }
            Some(h1_gram(t, &wv))
        }
        FormulationKind::UltraweakDpg | FormulationKind::AcousticsUltraweak => {
            let acoustic = form.kind == FormulationKind::AcousticsUltraweak;
            let omega = form.params.omega;
            let iw = C64::new(0.0, omega);
            let y = tables.volume(MasterSpace::Y, p);
            let tw = tables.volume(MasterSpace::W, pt);
            let tv = tables.volume(MasterSpace::V, pt);
            let (ny, nw, nv) = (y.dim(), tw.dim(), tv.dim());
            let trace_off = 3 * ny;
            let flux_off = trace_off + SpaceKind::TraceHalf.local_dim(p);
            for k in 0..nq {
                for j in 0..ny {
                    let yw = y.scalar(j, k) * wv[k];
                    for i in 0..nw {
                        let q = tw.scalar(i, k);
                        let gq = tw.gradient(i, k);
                        if acoustic {
                            b[(i, j)] += iw * (yw * q);
                            b[(i, ny + j)] -= re(yw * gq[0]);
                            b[(i, 2 * ny + j)] -= re(yw * gq[1]);
                        } else {
                            b[(i, ny + j)] += re(yw * gq[0]);
                            b[(i, 2 * ny + j)] += re(yw * gq[1]);
                        }
                    }
                    for i in 0..nv {
                        let tau = tv.vector(i, k);
                        let dt = tv.divergence(i, k);
                        if acoustic {
                            b[(nw + i, j)] -= re(yw * dt);
                            b[(nw + i, ny + j)] += iw * (yw * tau[0]);
                            b[(nw + i, 2 * ny + j)] += iw * (yw * tau[1]);
                        } else {
                            b[(nw + i, j)] += re(yw * dt);
                            b[(nw + i, ny + j)] += re(yw * tau[0]);
                            b[(nw + i, 2 * ny + j)] += re(yw * tau[1]);
                        }
                    }
                }
                for i in 0..nw {
                    l[i] += fvals[k] * (tw.scalar(i, k) * wv[k]);
                }
            }
            // ⟨flux, v⟩ is −∮ for Poisson and +∮ for acoustics; likewise ⟨trace, τ·n⟩.
            let edge_sign = if acoustic { 1.0 } else { -1.0 };
            let psi = tables.flux_values(p);
            let ntrace = SpaceKind::TraceHalf.local_dim(p);
            for (s, side) in Side::ALL.iter().enumerate() {
                let n = side.normal();
                let sw = tables.side(s, MasterSpace::W, pt);
                let sv = tables.side(s, MasterSpace::V, pt);
                let su = tables.side(s, MasterSpace::W, p);
                for i in 0..nw {
                    for (j, pj) in psi.iter().enumerate() {
                        let val: f64 = (0..ne).map(|k| we[k] / h * pj[k] * sw.scalar(i, k)).sum();
                        b[(i, flux_off + s * p + j)] += re(edge_sign * val);
                    }
                }
                for i in 0..nv {
                    for j in 0..ntrace {
                        let val: f64 = (0..ne)
                            .map(|k| {
                                let tau = sv.vector(i, k);
                                we[k] * su.scalar(j, k) * (tau[0] * n.0 + tau[1] * n.1)
                            })
                            .sum();
                        if val != 0.0 {
                            b[(nw + i, trace_off + j)] += re(edge_sign * val);
                        }
                    }
                }
            }
            let gw = h1_gram(tw, &wv);
            let gv = hdiv_gram(tv, &wv);
            let mut g = DenseMatrix::zeros(nw + nv, nw + nv);
            for i in 0..nw {
                for j in 0..nw {
                    g[(i, j)] = gw[(i, j)];
                }
            }
            for i in 0..nv {
                for j in 0..nv {
                    g[(nw + i, nw + j)] = gv[(i, j)];
                }
            }
            Some(g)
        }
        FormulationKind::BubnovGalerkin => {
            let w = tables.volume(MasterSpace::W, p);
            let nw = w.dim();
            for k in 0..nq {
                for i in 0..nw {
                    let gv = w.gradient(i, k);
                    let v = w.scalar(i, k);
                    for j in 0..nw {
                        let gu = w.gradient(j, k);
                        let mut val = gu[0] * gv[0] + gu[1] * gv[1];
                        if let Some(a) = &alpha {
                            val += a[k] * w.scalar(j, k) * v;
                        }
                        b[(i, j)] += re(wv[k] * val);
                    }
                    l[i] += fvals[k] * (v * wv[k]);
                }
            }
            None
        }
    };
    ElementForms {
        gram,
        stiffness: b,
        load: l,
    }
}

fn h1_gram(t: &BasisTable, wv: &[f64]) -> DenseMatrix<C64> {
    let n = t.dim();
    DenseMatrix::from_fn(n, n, |i, j| {
        let v: f64 = (0..wv.len())
            .map(|k| {
                let (gi, gj) = (t.gradient(i, k), t.gradient(j, k));
                wv[k] * (t.scalar(i, k) * t.scalar(j, k) + gi[0] * gj[0] + gi[1] * gj[1])
            })
            .sum();
        C64::new(v, 0.0)
    })
}

fn hdiv_gram(t: &BasisTable, wv: &[f64]) -> DenseMatrix<C64> {
    let n = t.dim();
    DenseMatrix::from_fn(n, n, |i, j| {
        let v: f64 = (0..wv.len())
            .map(|k| {
                let (a, b) = (t.vector(i, k), t.vector(j, k));
                wv[k] * (a[0] * b[0] + a[1] * b[1] + t.divergence(i, k) * t.divergence(j, k))
            })
            .sum();
        C64::new(v, 0.0)
    })
}

/// First-order least-squares functional of the strong form on one element:
/// `∫ (αu − div σ)(αu' − div σ') + (σ − ∇u)·(σ' − ∇u')` and its load.
pub fn fosls_reference_element(
    form: &Formulation,
    element: &Element,
    tables: &FormTables,
    source: &(dyn Fn(f64, f64) -> C64 + Send + Sync),
) -> (DenseMatrix<C64>, Vec<C64>) {
    let p = form.p;
    let w = tables.volume(MasterSpace::W, p);
    let v = tables.volume(MasterSpace::V, p);
    let (nw, nv) = (w.dim(), v.dim());
    let n = nw + nv;
    let h = element.h;
    let mut a = DenseMatrix::<C64>::zeros(n, n);
    let mut f = vec![C64::new(0.0, 0.0); n];
    for (k, &(xi, eta)) in tables.rule.points.iter().enumerate() {
        let wk = tables.rule.weights[k] * h * h;
        let (x, y) = element.map(xi, eta);
        let alpha = form.params.alpha.as_ref().map_or(0.0, |al| al(x, y));
        // Residual components (scalar, x, y) of each trial function.
        let ops: Vec<[f64; 3]> = (0..n)
            .map(|j| {
                if j < nw {
                    let g = w.gradient(j, k);
                    [alpha * w.scalar(j, k), -g[0], -g[1]]
                } else {
                    let s = v.vector(j - nw, k);
                    [-v.divergence(j - nw, k), s[0], s[1]]
                }
            })
            .collect();
        let fk = source(x, y);
        for i in 0..n {
            for j in 0..n {
                let val = ops[i][0] * ops[j][0] + ops[i][1] * ops[j][1] + ops[i][2] * ops[j][2];
                a[(i, j)] += C64::new(wk * val, 0.0);
            }
            f[i] += fk * (wk * ops[i][0]);
        }
    }
    (a, f)
}

/// Exact solution, data and coefficients of a test problem.
#[derive(Clone)]
pub struct ManufacturedCase {
    pub name: String,
    /// `u` (Poisson) or the pressure `p` (acoustics).
    pub scalar: ScalarField,
    pub scalar_gradient: VectorField,
    /// `σ = ∇u` (Poisson) or the velocity (acoustics).
    pub vector: VectorField,
    pub vector_divergence: ScalarField,
    /// Right-hand side `f` of the scalar equation.
    pub source: ScalarField,
    pub alpha: Option<RealField>,
    pub omega: Option<f64>,
}

impl fmt::Debug for ManufacturedCase {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("ManufacturedCase")
            .field("name", &self.name)
            .field("alpha", &self.alpha.is_some())
            .field("omega", &self.omega)
            .finish()
    }
}

pub const CASE_NAMES: [&str; 5] = [
    "poisson-sine",
    "poisson-sine10",
    "poisson-quartic",
    "poisson-alpha-sine",
    "acoustics-resonance",
];

/// Frequency used by the acoustics case.
pub const RESONANCE_OMEGA: f64 = 0.5001 * 2.0 * PI;

fn real(f: impl Fn(f64, f64) -> f64 + Send + Sync + 'static) -> ScalarField {
    Arc::new(move |x, y| C64::new(f(x, y), 0.0))
}

fn real2(f: impl Fn(f64, f64) -> [f64; 2] + Send + Sync + 'static) -> VectorField {
    Arc::new(move |x, y| {
        let v = f(x, y);
        [C64::new(v[0], 0.0), C64::new(v[1], 0.0)]
    })
}

impl ManufacturedCase {
    /// Poisson problem `−Δu + αu = f` from `u`, `∇u` and `Δu`.
    pub fn poisson(
        name: impl Into<String>,
        u: impl Fn(f64, f64) -> f64 + Send + Sync + 'static,
        grad: impl Fn(f64, f64) -> [f64; 2] + Send + Sync + 'static,
        laplacian: impl Fn(f64, f64) -> f64 + Send + Sync + 'static,
        alpha: Option<RealField>,
    ) -> Self {
        let u: Arc<dyn Fn(f64, f64) -> f64 + Send + Sync> = Arc::new(u);
        let lap: Arc<dyn Fn(f64, f64) -> f64 + Send + Sync> = Arc::new(laplacian);
        let grad: Arc<dyn Fn(f64, f64) -> [f64; 2] + Send + Sync> = Arc::new(grad);
        let source = {
            let (u, lap, alpha) = (u.clone(), lap.clone(), alpha.clone());
            real(move |x, y| -lap(x, y) + alpha.as_ref().map_or(0.0, |a| a(x, y)) * u(x, y))
        };
        Self {
            name: name.into(),
            scalar: {
                let u = u.clone();
                real(move |x, y| u(x, y))
            },
            scalar_gradient: {
                let g = grad.clone();
                real2(move |x, y| g(x, y))
            },
            vector: real2(move |x, y| grad(x, y)),
            vector_divergence: real(move |x, y| lap(x, y)),
            source,
            alpha,
            omega: None,
        }
    }

    /// `iωp + div u = f`, `iωu + ∇p = 0` with `p = cos(πx)cos(πy)`.
    pub fn acoustics(omega: f64) -> Self {
        let i = C64::new(0.0, 1.0);
        let p = |x: f64, y: f64| (PI * x).cos() * (PI * y).cos();
        let grad = |x: f64, y: f64| {
            [
                -PI * (PI * x).sin() * (PI * y).cos(),
                -PI * (PI * x).cos() * (PI * y).sin(),
            ]
        };
        Self {
            name: "acoustics-resonance".into(),
            scalar: real(p),
            scalar_gradient: real2(grad),
            vector: Arc::new(move |x, y| {
                let g = grad(x, y);
                [i * g[0] / omega, i * g[1] / omega]
            }),
            vector_divergence: Arc::new(move |x, y| i * (-2.0 * PI * PI * p(x, y)) / omega),
            source: Arc::new(move |x, y| i * p(x, y) * (omega - 2.0 * PI * PI / omega)),
            alpha: None,
            omega: Some(omega),
        }
    }

    pub fn parameters(&self) -> Parameters {
        Parameters {
            alpha: self.alpha.clone(),
            omega: self.omega.unwrap_or(0.0),
        }
    }

    pub fn is_complex(&self) -> bool {
        self.omega.is_some()
    }
}

pub fn make_case(name: &str) -> Result<ManufacturedCase> {
    let s = |k: f64| {
        move |x: f64, y: f64| (k * PI * x).sin() * (k * PI * y).sin()
    };
    let sg = |k: f64| {
        move |x: f64, y: f64| {
            [
                k * PI * (k * PI * x).cos() * (k * PI * y).sin(),
                k * PI * (k * PI * x).sin() * (k * PI * y).cos(),
            ]
        }
    };
    let sl = |k: f64| move |x: f64, y: f64| -2.0 * k * k * PI * PI * (k * PI * x).sin() * (k * PI * y).sin();
    match name {
        "poisson-sine" => Ok(ManufacturedCase::poisson(name, s(1.0), sg(1.0), sl(1.0), None)),
        "poisson-sine10" => Ok(ManufacturedCase::poisson(name, s(10.0), sg(10.0), sl(10.0), None)),
        "poisson-alpha-sine" => {
            let alpha: RealField = Arc::new(s(1.0));
            Ok(ManufacturedCase::poisson(name, s(1.0), sg(1.0), sl(1.0), Some(alpha)))
        }
        "poisson-quartic" => {
            let a = |t: f64| t * t * (1.0 - t) * (1.0 - t);
            let da = |t: f64| 2.0 * t * (1.0 - t) * (1.0 - 2.0 * t);
            let dda = |t: f64| 2.0 - 12.0 * t + 12.0 * t * t;
            Ok(ManufacturedCase::poisson(
                name,
                move |x, y| a(x) * a(y),
                move |x, y| [da(x) * a(y), a(x) * da(y)],
                move |x, y| dda(x) * a(y) + a(x) * dda(y),
                None,
            ))
        }
        "acoustics-resonance" => Ok(ManufacturedCase::acoustics(RESONANCE_OMEGA)),
        _ => Err(DlsError::UnknownCase(name.to_string())),
    }
}

/// Dirichlet data of one trial component as global coefficients on its
/// boundary DOFs (zero elsewhere).
///
/// Scalar traces take vertex values plus the edge-wise `L²` projection of the
/// remainder onto the edge bubbles; normal fluxes take the `L²` projection of
/// `vector·n` onto the edge functions.
pub fn boundary_lift(
    component: &Component,
    layout: &DofLayout,
    mesh: &Mesh,
    case: &ManufacturedCase,
) -> Vec<C64> {
    let mut out = vec![C64::new(0.0, 0.0); layout.n_dofs];
    let p = component.p;
    let h = mesh.h();
    let (ts, ws) = crate::basis::gauss_1d(2 * p + 6);
    let edge_point = |e: &crate::mesh::Edge, t: f64| {
        let (x0, y0) = mesh.vertices()[e.vertices[0]];
        match e.direction {
            crate::mesh::EdgeDirection::Horizontal => (x0 + h * t, y0),
            crate::mesh::EdgeDirection::Vertical => (x0, y0 + h * t),
        }
    };
    match component.kind {
        SpaceKind::H1Conforming | SpaceKind::TraceHalf => {
            let g = &case.scalar;
            for v in 0..mesh.num_vertices() {
                if mesh.is_boundary_vertex(v) {
                    let (x, y) = mesh.vertices()[v];
                    out[v] = g(x, y);
                }
            }
            if p < 2 {
                return out;
            }
            let nb = p - 1;
            // Bubble mass matrix on [0,1] is the same for every edge.
            let tab: Vec<(Vec<f64>, Vec<f64>)> = ts.iter().map(|&t| crate::basis::phi(p, t)).collect();
            let mass = DenseMatrix::<f64>::from_fn(nb, nb, |a, b| {
                (0..ts.len()).map(|k| ws[k] * tab[k].0[a + 2] * tab[k].0[b + 2]).sum()
            });
            let base = mesh.num_vertices();
            for e in mesh.edges().iter().filter(|e| e.is_boundary()) {
                let (g0, g1) = (out[e.vertices[0]], out[e.vertices[1]]);
                let rhs: Vec<C64> = (0..nb)
                    .map(|a| {
                        (0..ts.len())
                            .map(|k| {
                                let (x, y) = edge_point(e, ts[k]);
                                let rem = g(x, y) - g0 * tab[k].0[0] - g1 * tab[k].0[1];
                                rem * (ws[k] * tab[k].0[a + 2])
                            })
                            .sum()
                    })
                    .collect();
                let c = crate::linalg::solve_spd(&mass.cast::<C64>(), &rhs)
                    .expect("edge bubble mass matrix is positive definite");
                for (a, v) in c.into_iter().enumerate() {
                    out[base + e.id * nb + a] = v;
                }
            }
        }
        SpaceKind::TraceMinusHalf => {
            for e in mesh.edges().iter().filter(|e| e.is_boundary()) {
                let normal = match e.direction {
                    crate::mesh::EdgeDirection::Horizontal => [0.0, 1.0],
                    crate::mesh::EdgeDirection::Vertical => [1.0, 0.0],
                };
                for j in 0..p {
                    let c: C64 = (0..ts.len())
                        .map(|k| {
                            let (x, y) = edge_point(e, ts[k]);
                            let s = (case.vector)(x, y);
                            let psi = crate::basis::psi(p, ts[k])[j];
                            (s[0] * normal[0] + s[1] * normal[1]) * (ws[k] * psi * h)
                        })
                        .sum();
                    out[e.id * p + j] = c;
                }
            }
        }
        SpaceKind::HdivConforming => {
            // Not used as a fixed component by any formulation here.
        }
        SpaceKind::L2Broken | SpaceKind::H1BrokenTest | SpaceKind::HdivBrokenTest => {}
    }
    out
}
