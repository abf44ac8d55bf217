//! Uniform quadrilateral meshes of the unit square and per-space DOF layouts.
//!
//! Elements are numbered row-major (`id = j·n + i`), vertices likewise on the
//! `(n+1)×(n+1)` grid. Horizontal edges come first (`j·n + i`, `j = 0..=n`),
//! then vertical edges (`n(n+1) + j(n+1) + i`). Every edge is oriented from
//! its lower endpoint, so its tangent is `+x` or `+y` and its normal is `+y`
//! (horizontal) or `+x` (vertical).

use crate::error::{DlsError, Result};

/// Local edge order within an element.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Side {
    Bottom,
    Right,
    Top,
    Left,
}

impl Side {
    pub const ALL: [Side; 4] = [Side::Bottom, Side::Right, Side::Top, Side::Left];

    /// Sign of the global edge normal relative to the element's outward normal.
    pub fn outward_sign(self) -> f64 {
        match self {
            Side::Bottom | Side::Left => -1.0,
            Side::Right | Side::Top => 1.0,
        }
    }

    /// Outward unit normal on the master square.
    pub fn normal(self) -> (f64, f64) {
        match self {
            Side::Bottom => (0.0, -1.0),
            Side::Right => (1.0, 0.0),
            Side::Top => (0.0, 1.0),
            Side::Left => (-1.0, 0.0),
        }
    }

    /// Master-square point at edge parameter `t ∈ [0,1]`, `t` running along `+x`/`+y`.
    pub fn point(self, t: f64) -> (f64, f64) {
        match self {
            Side::Bottom => (t, 0.0),
            Side::Right => (1.0, t),
            Side::Top => (t, 1.0),
            Side::Left => (0.0, t),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum EdgeDirection {
    Horizontal,
    Vertical,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Edge {
    pub id: usize,
    pub direction: EdgeDirection,
    /// Lower and upper vertex ids.
    pub vertices: [usize; 2],
    /// Adjacent elements: the one on the `−normal` side first.
    pub elements: Vec<usize>,
}

impl Edge {
    pub fn is_boundary(&self) -> bool {
        self.elements.len() == 1
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Element {
    pub id: usize,
    pub i: usize,
    pub j: usize,
    pub origin: (f64, f64),
    pub h: f64,
}

impl Element {
    /// Physical point of master coordinates `(ξ, η)`.
    pub fn map(&self, xi: f64, eta: f64) -> (f64, f64) {
        (self.origin.0 + self.h * xi, self.origin.1 + self.h * eta)
    }

    pub fn contains(&self, other: &Element) -> bool {
        let tol = 1e-12;
        other.origin.0 >= self.origin.0 - tol
            && other.origin.1 >= self.origin.1 - tol
            && other.origin.0 + other.h <= self.origin.0 + self.h + tol
            && other.origin.1 + other.h <= self.origin.1 + self.h + tol
    }
}

/// Edge of an element with its orientation sign (`+1` if the global normal
/// points outward).
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ElementEdge {
    pub edge: usize,
    pub side: Side,
    pub sign: i8,
}

#[derive(Debug, Clone)]
pub struct Mesh {
    n: usize,
    elements: Vec<Element>,
    edges: Vec<Edge>,
    vertices: Vec<(f64, f64)>,
}

/// Uniform `n×n` mesh of `(0,1)²`.
pub fn uniform_mesh(n: usize) -> Result<Mesh> {
    if n == 0 {
        return Err(DlsError::InvalidConfig {
            field: "n",
            message: "mesh needs at least one subdivision".into(),
        });
    }
    let h = 1.0 / n as f64;
    let elements = (0..n * n)
        .map(|id| {
            let (i, j) = (id % n, id / n);
            Element {
                id,
                i,
                j,
                origin: (i as f64 * h, j as f64 * h),
                h,
            }
        })
        .collect();
    let vertices = (0..(n + 1) * (n + 1))
        .map(|v| ((v % (n + 1)) as f64 * h, (v / (n + 1)) as f64 * h))
        .collect();
    let mut edges = Vec::with_capacity(2 * n * (n + 1));
    for j in 0..=n {
        for i in 0..n {
            let mut elements = Vec::new();
            if j > 0 {
                elements.push((j - 1) * n + i);
            }
            if j < n {
                elements.push(j * n + i);
            }
            let v0 = j * (n + 1) + i;
            edges.push(Edge {
                id: edges.len(),
                direction: EdgeDirection::Horizontal,
                vertices: [v0, v0 + 1],
                elements,
            });
        }
    }
    for j in 0..n {
        for i in 0..=n {
            let mut elements = Vec::new();
            if i > 0 {
                elements.push(j * n + i - 1);
            }
            if i < n {
                elements.push(j * n + i);
            }
            let v0 = j * (n + 1) + i;
            edges.push(Edge {
                id: edges.len(),
                direction: EdgeDirection::Vertical,
                vertices: [v0, v0 + n + 1],
                elements,
            });
        }
    }
    Ok(Mesh {
        n,
        elements,
        edges,
        vertices,
    })
}

impl Mesh {
    pub fn n(&self) -> usize {
        self.n
    }

    pub fn h(&self) -> f64 {
        1.0 / self.n as f64
    }

    pub fn elements(&self) -> &[Element] {
        &self.elements
    }

    pub fn edges(&self) -> &[Edge] {
        &self.edges
    }

    pub fn vertices(&self) -> &[(f64, f64)] {
        &self.vertices
    }

    pub fn num_elements(&self) -> usize {
        self.elements.len()
    }

    pub fn num_vertices(&self) -> usize {
        self.vertices.len()
    }

    pub fn num_edges(&self) -> usize {
        self.edges.len()
    }

    pub fn boundary_edge_count(&self) -> usize {
        self.edges.iter().filter(|e| e.is_boundary()).count()
    }

    pub fn interior_edge_count(&self) -> usize {
        self.num_edges() - self.boundary_edge_count()
    }

    /// Vertex ids in local order `ll, lr, ur, ul`.
    pub fn element_vertices(&self, k: usize) -> [usize; 4] {
        let n = self.n;
        let (i, j) = (k % n, k / n);
        let ll = j * (n + 1) + i;
        [ll, ll + 1, ll + n + 2, ll + n + 1]
    }

    /// Edges in local order bottom, right, top, left.
    pub fn element_edges(&self, k: usize) -> [ElementEdge; 4] {
        let n = self.n;
        let (i, j) = (k % n, k / n);
        let horizontal = |jj: usize| jj * n + i;
        let vertical = |ii: usize| n * (n + 1) + j * (n + 1) + ii;
        let ids = [horizontal(j), vertical(i + 1), horizontal(j + 1), vertical(i)];
        let mut out = [ElementEdge {
            edge: 0,
            side: Side::Bottom,
            sign: 1,
        }; 4];
        for (slot, (&edge, side)) in out.iter_mut().zip(ids.iter().zip(Side::ALL)) {
            *slot = ElementEdge {
                edge,
                side,
                sign: side.outward_sign() as i8,
            };
        }
        out
    }

    pub fn is_boundary_vertex(&self, v: usize) -> bool {
        let n = self.n;
        let (i, j) = (v % (n + 1), v / (n + 1));
        i == 0 || j == 0 || i == n || j == n
    }
}

/// Function spaces that can be laid out on a mesh.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum SpaceKind {
    H1Conforming,
    HdivConforming,
    L2Broken,
    /// Trace of `H¹` on the skeleton (`û`).
    TraceHalf,
    /// Normal trace of `H(div)` on the skeleton (`σ̂_n`).
    TraceMinusHalf,
    H1BrokenTest,
    HdivBrokenTest,
}

impl SpaceKind {
    /// Local dimension on one element.
    pub fn local_dim(self, p: usize) -> usize {
        match self {
            SpaceKind::H1Conforming | SpaceKind::H1BrokenTest => (p + 1) * (p + 1),
            SpaceKind::HdivConforming | SpaceKind::HdivBrokenTest => 2 * p * (p + 1),
            SpaceKind::L2Broken => p * p,
            SpaceKind::TraceHalf => 4 + 4 * (p - 1),
            SpaceKind::TraceMinusHalf => 4 * p,
        }
    }

    pub fn is_broken(self) -> bool {
        matches!(
            self,
            SpaceKind::L2Broken | SpaceKind::H1BrokenTest | SpaceKind::HdivBrokenTest
        )
    }
}

/// Global DOF reference of a local basis function.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct DofRef {
    pub global: usize,
    pub sign: i8,
}

#[derive(Debug, Clone, PartialEq)]
pub struct DofLayout {
    pub kind: SpaceKind,
    pub p: usize,
    pub per_vertex: usize,
    pub per_edge: usize,
    pub per_interior: usize,
    pub n_dofs: usize,
    /// Sorted global indices of DOFs on `∂Ω`.
    pub boundary: Vec<usize>,
}

impl DofLayout {
    pub fn is_boundary(&self, dof: usize) -> bool {
        self.boundary.binary_search(&dof).is_ok()
    }
}

/// `Con_K`: per element, local index → global DOF.
#[derive(Debug, Clone, PartialEq)]
pub struct ConnectivityMap {
    pub elements: Vec<Vec<DofRef>>,
}

impl ConnectivityMap {
    pub fn element(&self, k: usize) -> &[DofRef] {
        &self.elements[k]
    }
}

/// Which local DOFs of a space are supported in a single element.
pub fn local_bubble_mask(kind: SpaceKind, p: usize) -> Vec<bool> {
    match kind {
        SpaceKind::H1Conforming => {
            let mut m = vec![false; 4 + 4 * (p - 1)];
            m.resize((p + 1) * (p + 1), true);
            m
        }
        SpaceKind::HdivConforming => {
            let mut m = Vec::with_capacity(2 * p * (p + 1));
            for i in 0..=p {
                for _ in 0..p {
                    m.push(i >= 2);
                }
            }
            for _ in 0..p {
                for j in 0..=p {
                    m.push(j >= 2);
                }
            }
            m
        }
        SpaceKind::L2Broken | SpaceKind::H1BrokenTest | SpaceKind::HdivBrokenTest => {
            vec![true; kind.local_dim(p)]
        }
        SpaceKind::TraceHalf | SpaceKind::TraceMinusHalf => vec![false; kind.local_dim(p)],
    }
}

fn plus(global: usize) -> DofRef {
    DofRef { global, sign: 1 }
}

/// DOF layout and connectivity of `kind` at order `p` on `mesh`.
pub fn build_layout(mesh: &Mesh, kind: SpaceKind, p: usize) -> Result<(DofLayout, ConnectivityMap)> {
    if p == 0 {
        return Err(DlsError::UnsupportedOrder { p });
    }
    let nv = mesh.num_vertices();
    let ne = mesh.num_edges();
    let nk = mesh.num_elements();
    let (per_vertex, per_edge, per_interior) = match kind {
        SpaceKind::H1Conforming => (1, p - 1, (p - 1) * (p - 1)),
        SpaceKind::HdivConforming => (0, p, 2 * p * (p - 1)),
        SpaceKind::TraceHalf => (1, p - 1, 0),
        SpaceKind::TraceMinusHalf => (0, p, 0),
        SpaceKind::L2Broken | SpaceKind::H1BrokenTest | SpaceKind::HdivBrokenTest => {
            (0, 0, kind.local_dim(p))
        }
    };
    let edge_base = nv * per_vertex;
    let interior_base = edge_base + ne * per_edge;
    let n_dofs = interior_base + nk * per_interior;

    let mut elements = Vec::with_capacity(nk);
    for k in 0..nk {
        let verts = mesh.element_vertices(k);
        let edges = mesh.element_edges(k);
        let interior = |l: usize| plus(interior_base + k * per_interior + l);
        let on_edge = |side: usize, l: usize| edge_base + edges[side].edge * per_edge + l;
        let mut dofs = Vec::with_capacity(kind.local_dim(p));
        match kind {
            SpaceKind::H1Conforming | SpaceKind::TraceHalf => {
                dofs.extend(verts.iter().map(|&v| plus(v)));
                for side in 0..4 {
                    dofs.extend((0..p - 1).map(|l| plus(on_edge(side, l))));
                }
                dofs.extend((0..per_interior).map(interior));
            }
            SpaceKind::HdivConforming => {
                // x-components φ_i(ξ)ψ_j(η): i = 0 left edge, i = 1 right edge.
                let mut next = 0;
                for i in 0..=p {
                    for j in 0..p {
                        dofs.push(match i {
                            0 => plus(on_edge(3, j)),
                            1 => plus(on_edge(1, j)),
                            _ => {
                                next += 1;
                                interior(next - 1)
                            }
                        });
                    }
                }
                // y-components ψ_i(ξ)φ_j(η): j = 0 bottom edge, j = 1 top edge.
                for i in 0..p {
                    for j in 0..=p {
                        dofs.push(match j {
                            0 => plus(on_edge(0, i)),
                            1 => plus(on_edge(2, i)),
                            _ => {
                                next += 1;
                                interior(next - 1)
                            }
                        });
                    }
                }
            }
            SpaceKind::TraceMinusHalf => {
                for (side, e) in edges.iter().enumerate() {
                    dofs.extend((0..p).map(|l| DofRef {
                        global: on_edge(side, l),
                        sign: e.sign,
                    }));
                }
            }
            SpaceKind::L2Broken | SpaceKind::H1BrokenTest | SpaceKind::HdivBrokenTest => {
                dofs.extend((0..per_interior).map(interior));
            }
        }
        debug_assert_eq!(dofs.len(), kind.local_dim(p));
        elements.push(dofs);
    }

    let mut boundary = Vec::new();
    if !kind.is_broken() {
        if per_vertex > 0 {
            boundary.extend((0..nv).filter(|&v| mesh.is_boundary_vertex(v)));
        }
        for e in mesh.edges().iter().filter(|e| e.is_boundary()) {
            boundary.extend((0..per_edge).map(|l| edge_base + e.id * per_edge + l));
        }
        boundary.sort_unstable();
    }

    Ok((
        DofLayout {
            kind,
            p,
            per_vertex,
            per_edge,
            per_interior,
            n_dofs,
            boundary,
        },
        ConnectivityMap { elements },
    ))
}
