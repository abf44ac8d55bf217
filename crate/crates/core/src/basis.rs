//! Master-square exact-sequence bases and tensor Gauss-Legendre quadrature.
//!
//! `W^p = Q^{p,p}` uses integrated Legendre (hierarchical) functions,
//! `V^p = Q^{p,p−1} × Q^{p−1,p}` pairs them with orthonormal Legendre
//! polynomials, and `Y^p = Q^{p−1,p−1}` is the orthonormal tensor Legendre
//! basis, so `div V^p = Y^p` holds exactly.

use crate::error::{DlsError, Result};
use crate::mesh::{Element, Side};

/// Legendre polynomials `P_0..=P_n` at `s ∈ [−1, 1]`.
pub fn legendre(n: usize, s: f64) -> Vec<f64> {
    let mut out = Vec::with_capacity(n + 1);
    out.push(1.0);
    if n >= 1 {
        out.push(s);
    }
    for k in 1..n {
        let kf = k as f64;
        let next = ((2.0 * kf + 1.0) * s * out[k] - kf * out[k - 1]) / (kf + 1.0);
        out.push(next);
    }
    out
}

/// Hierarchical 1D functions `φ_0..=φ_p` on `[0,1]` and their derivatives.
///
/// `φ_0 = 1 − t`, `φ_1 = t`; for `k ≥ 2` `φ_k' = P_{k−1}(2t − 1)`, vanishing at both ends.
pub fn phi(p: usize, t: f64) -> (Vec<f64>, Vec<f64>) {
    let s = 2.0 * t - 1.0;
    let leg = legendre(p.max(1), s);
    let mut v = vec![1.0 - t, t];
    let mut d = vec![-1.0, 1.0];
    for k in 2..=p {
        v.push((leg[k] - leg[k - 2]) / (2.0 * (2.0 * k as f64 - 1.0)));
        d.push(leg[k - 1]);
    }
    v.truncate(p + 1);
    d.truncate(p + 1);
    (v, d)
}

/// Orthonormal Legendre `ψ_0..ψ_{p−1}` on `[0,1]`.
pub fn psi(p: usize, t: f64) -> Vec<f64> {
    if p == 0 {
        return Vec::new();
    }
    let leg = legendre(p - 1, 2.0 * t - 1.0);
    leg.iter()
        .enumerate()
        .map(|(j, &v)| (2.0 * j as f64 + 1.0).sqrt() * v)
        .collect()
}

/// Gauss-Legendre nodes and weights on `(0,1)`, `q` points.
pub fn gauss_1d(q: usize) -> (Vec<f64>, Vec<f64>) {
    assert!(q >= 1);
    let mut x = vec![0.0; q];
    let mut w = vec![0.0; q];
    for i in 0..q.div_ceil(2) {
        // Chebyshev-like initial guess, then Newton on P_q.
        let mut s = (std::f64::consts::PI * (i as f64 + 0.75) / (q as f64 + 0.5)).cos();
        for _ in 0..100 {
            let leg = legendre(q, s);
            let dp = q as f64 * (s * leg[q] - leg[q - 1]) / (s * s - 1.0);
            let ds = leg[q] / dp;
            s -= ds;
            if ds.abs() < 1e-16 {
                break;
            }
        }
        let leg = legendre(q, s);
        let dp = q as f64 * (s * leg[q] - leg[q - 1]) / (s * s - 1.0);
        let weight = 2.0 / ((1.0 - s * s) * dp * dp);
        x[i] = 0.5 * (1.0 - s);
        x[q - 1 - i] = 0.5 * (1.0 + s);
        w[i] = 0.5 * weight;
        w[q - 1 - i] = 0.5 * weight;
    }
    if q % 2 == 1 {
        x[q / 2] = 0.5;
    }
    (x, w)
}

/// Tensor rule on the master square plus the matching 1D edge rule.
#[derive(Debug, Clone, PartialEq)]
pub struct QuadratureRule {
    pub q: usize,
    pub points: Vec<(f64, f64)>,
    pub weights: Vec<f64>,
    pub edge_points: Vec<f64>,
    pub edge_weights: Vec<f64>,
}

pub fn gauss_rule(q: usize) -> QuadratureRule {
    let (x, w) = gauss_1d(q);
    let mut points = Vec::with_capacity(q * q);
    let mut weights = Vec::with_capacity(q * q);
    for (i, &xi) in x.iter().enumerate() {
        for (j, &eta) in x.iter().enumerate() {
            points.push((xi, eta));
            weights.push(w[i] * w[j]);
        }
    }
    QuadratureRule {
        q,
        points,
        weights,
        edge_points: x,
        edge_weights: w,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum MasterSpace {
    W,
    V,
    Y,
}

impl MasterSpace {
    pub fn dim(self, p: usize) -> usize {
        match self {
            MasterSpace::W => (p + 1) * (p + 1),
            MasterSpace::V => 2 * p * (p + 1),
            MasterSpace::Y => p * p,
        }
    }
}

/// Basis values at a set of points. `values[i][k]` is a 2-vector; scalar
/// spaces use the first slot.
#[derive(Debug, Clone, PartialEq)]
pub struct BasisTable {
    pub space: MasterSpace,
    pub p: usize,
    pub values: Vec<Vec<[f64; 2]>>,
    pub gradients: Option<Vec<Vec<[f64; 2]>>>,
    pub divergences: Option<Vec<Vec<f64>>>,
}

impl BasisTable {
    pub fn dim(&self) -> usize {
        self.values.len()
    }

    pub fn num_points(&self) -> usize {
        self.values.first().map_or(0, Vec::len)
    }

    #[inline]
    pub fn scalar(&self, i: usize, k: usize) -> f64 {
        self.values[i][k][0]
    }

    #[inline]
    pub fn vector(&self, i: usize, k: usize) -> [f64; 2] {
        self.values[i][k]
    }

    #[inline]
    pub fn gradient(&self, i: usize, k: usize) -> [f64; 2] {
        self.gradients.as_ref().expect("gradient table")[i][k]
    }

    #[inline]
    pub fn divergence(&self, i: usize, k: usize) -> f64 {
        self.divergences.as_ref().expect("divergence table")[i][k]
    }
}

/// 1D index pairs `(a, b)` of the `W^p` functions `φ_a(ξ)φ_b(η)` in local order:
/// vertices `ll, lr, ur, ul`; edge bubbles bottom, right, top, left; interior `k`-major.
pub fn w_index_pairs(p: usize) -> Vec<(usize, usize)> {
    let mut out = vec![(0, 0), (1, 0), (1, 1), (0, 1)];
    for k in 2..=p {
        out.push((k, 0));
    }
    for k in 2..=p {
        out.push((1, k));
    }
    for k in 2..=p {
        out.push((k, 1));
    }
    for k in 2..=p {
        out.push((0, k));
    }
    for k in 2..=p {
        for l in 2..=p {
            out.push((k, l));
        }
    }
    out
}

pub fn eval_basis(space: MasterSpace, p: usize, points: &[(f64, f64)]) -> Result<BasisTable> {
    if p == 0 {
        return Err(DlsError::UnsupportedOrder { p });
    }
    let dim = space.dim(p);
    let np = points.len();
    let mut values = vec![vec![[0.0; 2]; np]; dim];
    let mut gradients = None;
    let mut divergences = None;
    match space {
        MasterSpace::W => {
            let pairs = w_index_pairs(p);
            let mut grads = vec![vec![[0.0; 2]; np]; dim];
            for (k, &(xi, eta)) in points.iter().enumerate() {
                let (fx, dx) = phi(p, xi);
                let (fy, dy) = phi(p, eta);
                for (i, &(a, b)) in pairs.iter().enumerate() {
                    values[i][k][0] = fx[a] * fy[b];
                    grads[i][k] = [dx[a] * fy[b], fx[a] * dy[b]];
                }
            }
            gradients = Some(grads);
        }
        MasterSpace::V => {
            let mut divs = vec![vec![0.0; np]; dim];
            for (k, &(xi, eta)) in points.iter().enumerate() {
                let (fx, dx) = phi(p, xi);
                let (fy, dy) = phi(p, eta);
                let (px, py) = (psi(p, xi), psi(p, eta));
                let mut idx = 0;
                for i in 0..=p {
                    for j in 0..p {
                        values[idx][k] = [fx[i] * py[j], 0.0];
                        divs[idx][k] = dx[i] * py[j];
                        idx += 1;
                    }
                }
                for i in 0..p {
                    for j in 0..=p {
                        values[idx][k] = [0.0, px[i] * fy[j]];
                        divs[idx][k] = px[i] * dy[j];
                        idx += 1;
                    }
                }
            }
            divergences = Some(divs);
        }
        MasterSpace::Y => {
            for (k, &(xi, eta)) in points.iter().enumerate() {
                let (px, py) = (psi(p, xi), psi(p, eta));
                for i in 0..p {
                    for j in 0..p {
                        values[i * p + j][k][0] = px[i] * py[j];
                    }
                }
            }
        }
    }
    Ok(BasisTable {
        space,
        p,
        values,
        gradients,
        divergences,
    })
}

/// Edge trace spaces restricted to one side, evaluated at edge parameters.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TraceSpace {
    /// Trace of `W^p`, local order as in the trace layout (vertices, then edge bubbles).
    EdgeTraceW,
    /// Normal trace of `V^p`: `ψ_0..ψ_{p−1}` per edge.
    NormalTraceV,
}

/// Values `[local dof][point]` of the trace basis on `side`. For
/// [`TraceSpace::EdgeTraceW`] all `4 + 4(p−1)` element-local functions are
/// returned (zero off the side); for [`TraceSpace::NormalTraceV`] only the
/// `p` functions of that side.
pub fn eval_trace(space: TraceSpace, p: usize, side: Side, ts: &[f64]) -> Result<Vec<Vec<f64>>> {
    if p == 0 {
        return Err(DlsError::UnsupportedOrder { p });
    }
    match space {
        TraceSpace::EdgeTraceW => {
            let pts: Vec<(f64, f64)> = ts.iter().map(|&t| side.point(t)).collect();
            let w = eval_basis(MasterSpace::W, p, &pts)?;
            let n = 4 + 4 * (p - 1);
            Ok((0..n).map(|i| (0..ts.len()).map(|k| w.scalar(i, k)).collect()).collect())
        }
        TraceSpace::NormalTraceV => {
            let mut out = vec![vec![0.0; ts.len()]; p];
            for (k, &t) in ts.iter().enumerate() {
                for (j, v) in psi(p, t).into_iter().enumerate() {
                    out[j][k] = v;
                }
            }
            Ok(out)
        }
    }
}

/// Maps a master table to the physical element: `H¹` gradients scale by `1/h`,
/// `H(div)` values by `1/h` and divergences by `1/h²` (Piola), `L²` values unchanged.
pub fn pullback(element: &Element, table: &BasisTable) -> BasisTable {
    let h = element.h;
    let mut out = table.clone();
    match table.space {
        MasterSpace::W => {
            for g in out.gradients.iter_mut().flatten().flatten() {
                g[0] /= h;
                g[1] /= h;
            }
        }
        MasterSpace::V => {
            for v in out.values.iter_mut().flatten() {
                v[0] /= h;
                v[1] /= h;
            }
            for d in out.divergences.iter_mut().flatten().flatten() {
                *d /= h * h;
            }
        }
        MasterSpace::Y => {}
    }
    out
}

/// Physical quadrature weights: volume weights scale by `h²`, edge weights by `h`.
pub fn physical_weights(element: &Element, rule: &QuadratureRule) -> (Vec<f64>, Vec<f64>) {
    let h = element.h;
    (
        rule.weights.iter().map(|w| w * h * h).collect(),
        rule.edge_weights.iter().map(|w| w * h).collect(),
    )
}
