//! Discontinuous P1/P2 spaces and the element-local operators acting on them:
//! elementwise means, nodal averaging into the conforming space, the local
//! L2 projection, and the maps between P2 and linears anchored at the
//! quadrature simplex.
//!
//! Local P2 node order: vertices `0, 1, 2`, then the midpoint of local edge
//! `i` (opposite vertex `i`) as node `3 + i`.

use nalgebra::{Point2, SMatrix, SVector, Vector2};

use crate::error::{Error, Result};
use crate::mesh::{ElementGeometry, Mesh};
use crate::quadrature::{simplex_barycentric, LINE_GL4, SHRINK_DEG2, TRI_DEG6};
use crate::topology::Topology;

/// Barycentric coordinates of the local Lagrange nodes.
pub const P2_NODES: [[f64; 3]; 6] = [
    [1.0, 0.0, 0.0],
    [0.0, 1.0, 0.0],
    [0.0, 0.0, 1.0],
    [0.0, 0.5, 0.5],
    [0.5, 0.0, 0.5],
    [0.5, 0.5, 0.0],
];

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Space {
    pub degree: u8,
    pub num_elements: usize,
}

impl Space {
    pub fn new(degree: u8, num_elements: usize) -> Result<Space> {
        if degree != 1 && degree != 2 {
            return Err(Error::Config(format!("unsupported polynomial degree {degree}")));
        }
        Ok(Space { degree, num_elements })
    }

    pub fn dofs_per_element(&self) -> usize {
        if self.degree == 1 {
            3
        } else {
            6
        }
    }

    pub fn num_dofs(&self) -> usize {
        self.dofs_per_element() * self.num_elements
    }

    pub fn offset(&self, t: usize) -> usize {
        t * self.dofs_per_element()
    }

    pub fn element_dofs(&self, t: usize) -> std::ops::Range<usize> {
        let n = self.dofs_per_element();
        t * n..(t + 1) * n
    }
}

/// Local basis values at barycentric `l`; only the first
/// `dofs_per_element` entries are meaningful.
pub fn basis_values(degree: u8, l: [f64; 3]) -> [f64; 6] {
    if degree == 1 {
        [l[0], l[1], l[2], 0.0, 0.0, 0.0]
    } else {
        [
            l[0] * (2.0 * l[0] - 1.0),
            l[1] * (2.0 * l[1] - 1.0),
            l[2] * (2.0 * l[2] - 1.0),
            4.0 * l[1] * l[2],
            4.0 * l[2] * l[0],
            4.0 * l[0] * l[1],
        ]
    }
}

/// Local basis gradients at barycentric `l` given the barycentric gradients.
pub fn basis_gradients(degree: u8, l: [f64; 3], dl: &[Vector2<f64>; 3]) -> [Vector2<f64>; 6] {
    let z = Vector2::zeros();
    if degree == 1 {
        [dl[0], dl[1], dl[2], z, z, z]
    } else {
        let mid = |j: usize, k: usize| (dl[j] * l[k] + dl[k] * l[j]) * 4.0;
        [
            dl[0] * (4.0 * l[0] - 1.0),
            dl[1] * (4.0 * l[1] - 1.0),
            dl[2] * (4.0 * l[2] - 1.0),
            mid(1, 2),
            mid(2, 0),
            mid(0, 1),
        ]
    }
}

/// Discrete function in a fully discontinuous Lagrange space.
#[derive(Debug, Clone, PartialEq)]
pub struct DgFunction {
    pub space: Space,
    pub coeffs: Vec<f64>,
}

impl DgFunction {
    pub fn zeros(space: Space) -> DgFunction {
        DgFunction {
            space,
            coeffs: vec![0.0; space.num_dofs()],
        }
    }

    pub fn from_coeffs(space: Space, coeffs: Vec<f64>) -> Result<DgFunction> {
        if coeffs.len() != space.num_dofs() {
            return Err(Error::Config(format!(
                "coefficient vector has length {}, space needs {}",
                coeffs.len(),
                space.num_dofs()
            )));
        }
        Ok(DgFunction { space, coeffs })
    }

    /// Nodal interpolant of `f`, element by element.
    pub fn interpolate<F: Fn(Point2<f64>) -> f64>(mesh: &Mesh, space: Space, f: F) -> DgFunction {
        let n = space.dofs_per_element();
        let mut coeffs = Vec::with_capacity(space.num_dofs());
        for t in 0..mesh.num_elements() {
            let g = mesh.geometry(t);
            coeffs.extend(P2_NODES[..n].iter().map(|&l| f(g.point(l))));
        }
        DgFunction { space, coeffs }
    }

    pub fn local(&self, t: usize) -> &[f64] {
        &self.coeffs[self.space.element_dofs(t)]
    }

    pub fn eval_bary(&self, t: usize, l: [f64; 3]) -> f64 {
        let phi = basis_values(self.space.degree, l);
        self.local(t).iter().zip(phi).map(|(c, p)| c * p).sum()
    }

    /// Value at a point of element `t`; containment is not checked.
    pub fn eval(&self, geom: &ElementGeometry, t: usize, p: &Point2<f64>) -> f64 {
        self.eval_bary(t, geom.barycentric(p))
    }

    /// Value and gradient at barycentric `l` of element `t`.
    pub fn eval_grad_bary(&self, geom: &ElementGeometry, t: usize, l: [f64; 3]) -> (f64, Vector2<f64>) {
        let deg = self.space.degree;
        let phi = basis_values(deg, l);
        let dphi = basis_gradients(deg, l, &geom.barycentric_gradients());
        let mut v = 0.0;
        let mut g = Vector2::zeros();
        for (i, c) in self.local(t).iter().enumerate() {
            v += c * phi[i];
            g += dphi[i] * *c;
        }
        (v, g)
    }

    pub fn eval_grad(&self, geom: &ElementGeometry, t: usize, p: &Point2<f64>) -> (f64, Vector2<f64>) {
        self.eval_grad_bary(geom, t, geom.barycentric(p))
    }

    /// Exact elementwise Laplacian (zero for P1).
    pub fn laplacian(&self, geom: &ElementGeometry, t: usize) -> f64 {
        if self.space.degree == 1 {
            return 0.0;
        }
        let dl = geom.barycentric_gradients();
        let c = self.local(t);
        // Hessians of lambda_i * lambda_j are dl_i dl_j^T + dl_j dl_i^T
        let d = |i: usize, j: usize| dl[i].dot(&dl[j]);
        let mut lap = 0.0;
        for i in 0..3 {
            lap += c[i] * 4.0 * d(i, i);
        }
        for i in 0..3 {
            let (j, k) = ((i + 1) % 3, (i + 2) % 3);
            lap += c[3 + i] * 8.0 * d(j, k);
        }
        lap
    }

    /// Values at the six P2 node positions of element `t` (P1 midpoints are averages).
    pub fn nodal_values(&self, t: usize) -> [f64; 6] {
        let c = self.local(t);
        if self.space.degree == 2 {
            [c[0], c[1], c[2], c[3], c[4], c[5]]
        } else {
            [c[0], c[1], c[2], 0.5 * (c[1] + c[2]), 0.5 * (c[2] + c[0]), 0.5 * (c[0] + c[1])]
        }
    }

    /// Elementwise means `Q_h`, exact for both degrees.
    pub fn means(&self) -> PiecewiseConstant {
        let values = (0..self.space.num_elements)
            .map(|t| {
                let c = self.local(t);
                if self.space.degree == 1 {
                    (c[0] + c[1] + c[2]) / 3.0
                } else {
                    // vertex functions of P2 have zero mean
                    (c[3] + c[4] + c[5]) / 3.0
                }
            })
            .collect();
        PiecewiseConstant(values)
    }
}

/// One value per element.
#[derive(Debug, Clone, PartialEq)]
pub struct PiecewiseConstant(pub Vec<f64>);

/// Linear per element, stored as values at the three vertices of the
/// element's degree-2 quadrature simplex.
#[derive(Debug, Clone, PartialEq)]
pub struct PiecewiseLinear(pub Vec<[f64; 3]>);

impl PiecewiseLinear {
    /// Value at barycentric `l` (with respect to the element).
    pub fn eval_bary(&self, t: usize, l: [f64; 3]) -> f64 {
        let b = SHRINK_DEG2;
        let off = (1.0 - b) / 3.0;
        let v = self.0[t];
        (0..3).map(|i| v[i] * (l[i] - off) / b).sum()
    }

    /// Exact elementwise mean: the simplex vertices are centroid symmetric.
    pub fn means(&self) -> PiecewiseConstant {
        PiecewiseConstant(self.0.iter().map(|v| (v[0] + v[1] + v[2]) / 3.0).collect())
    }
}

/// Elementwise means of a general field via the degree-6 rule.
pub fn q_h<F: Fn(Point2<f64>) -> f64>(mesh: &Mesh, f: F) -> PiecewiseConstant {
    let values = (0..mesh.num_elements())
        .map(|t| {
            let g = mesh.geometry(t);
            TRI_DEG6.iter().map(|&(l, w)| w * f(g.point(l))).sum()
        })
        .collect();
    PiecewiseConstant(values)
}

/// Conforming nodal values produced by [`enrich_e_h`].
#[derive(Debug, Clone, PartialEq)]
pub struct ConformingNodal {
    pub degree: u8,
    pub vertex_values: Vec<f64>,
    /// Midpoint values indexed by topology edge (empty for P1).
    pub edge_values: Vec<f64>,
}

impl ConformingNodal {
    /// The enriched function written back into the discontinuous space.
    pub fn to_dg(&self, mesh: &Mesh, topo: &Topology) -> DgFunction {
        let space = Space {
            degree: self.degree,
            num_elements: mesh.num_elements(),
        };
        let mut out = DgFunction::zeros(space);
        for (t, el) in mesh.elements.iter().enumerate() {
            let off = space.offset(t);
            for i in 0..3 {
                out.coeffs[off + i] = self.vertex_values[el.vertices[i]];
            }
            if self.degree == 2 {
                for i in 0..3 {
                    out.coeffs[off + 3 + i] = self.edge_values[topo.element_edges[t][i]];
                }
            }
        }
        out
    }
}

/// Averaging operator into the conforming space with zero boundary values:
/// every interior node receives the mean of the adjacent element traces.
pub fn enrich_e_h(mesh: &Mesh, topo: &Topology, u: &DgFunction) -> ConformingNodal {
    let mut on_boundary = vec![false; mesh.num_vertices()];
    for e in topo.edges.iter().filter(|e| !e.interior) {
        on_boundary[e.vertices[0]] = true;
        on_boundary[e.vertices[1]] = true;
    }
    let mut vertex_values = vec![0.0; mesh.num_vertices()];
    for (p, patch) in topo.vertex_patches.iter().enumerate() {
        if on_boundary[p] || patch.is_empty() {
            continue;
        }
        let sum: f64 = patch
            .iter()
            .map(|&t| {
                let i = mesh.elements[t].vertices.iter().position(|&v| v == p).unwrap();
                u.local(t)[i]
            })
            .sum();
        vertex_values[p] = sum / patch.len() as f64;
    }
    let mut edge_values = Vec::new();
    if u.space.degree == 2 {
        edge_values = topo
            .edges
            .iter()
            .map(|e| {
                if !e.interior {
                    return 0.0;
                }
                let a = u.local(e.elements[0])[3 + e.local[0]];
                let b = u.local(e.elements[1])[3 + e.local[1]];
                0.5 * (a + b)
            })
            .collect();
    }
    ConformingNodal {
        degree: u.space.degree,
        vertex_values,
        edge_values,
    }
}

fn local_mass() -> SMatrix<f64, 6, 6> {
    // reference mass matrix divided by |T|; identical on every element
    let mut m = SMatrix::<f64, 6, 6>::zeros();
    for &(l, w) in &TRI_DEG6 {
        let phi = basis_values(2, l);
        for i in 0..6 {
            for j in 0..6 {
                m[(i, j)] += w * phi[i] * phi[j];
            }
        }
    }
    m
}

/// Elementwise L2 projection onto P2 (degree-6 moments of `v`).
pub fn local_project_pi_h<F: Fn(Point2<f64>) -> f64>(mesh: &Mesh, v: F) -> Result<DgFunction> {
    let space = Space::new(2, mesh.num_elements())?;
    let mass = local_mass();
    let mut coeffs = Vec::with_capacity(space.num_dofs());
    for t in 0..mesh.num_elements() {
        let g = mesh.geometry(t);
        if !(g.area > 0.0) {
            return Err(Error::DegenerateElement(t));
        }
        let mut rhs = SVector::<f64, 6>::zeros();
        for &(l, w) in &TRI_DEG6 {
            let phi = basis_values(2, l);
            let fv = v(g.point(l));
            for i in 0..6 {
                rhs[i] += w * fv * phi[i];
            }
        }
        let c = mass.lu().solve(&rhs).ok_or(Error::DegenerateElement(t))?;
        coeffs.extend(c.iter());
    }
    Ok(DgFunction { space, coeffs })
}

/// Barycentric coordinates of the quadrature-layout nodes: the three
/// degree-2 quadrature-simplex vertices followed by the midpoints of the
/// simplex edges opposite each of them.
pub fn quadrature_layout_nodes() -> [[f64; 3]; 6] {
    let r = [0, 1, 2].map(|i| simplex_barycentric(SHRINK_DEG2, i));
    let mid = |a: [f64; 3], b: [f64; 3]| [0.5 * (a[0] + b[0]), 0.5 * (a[1] + b[1]), 0.5 * (a[2] + b[2])];
    [r[0], r[1], r[2], mid(r[1], r[2]), mid(r[2], r[0]), mid(r[0], r[1])]
}

/// Standard-basis coefficients of the Lagrange basis attached to the
/// quadrature layout: column `k` holds `psi_k`. The layout is an affine
/// shrink of the element, so the table is element independent.
pub fn quadrature_layout_basis() -> SMatrix<f64, 6, 6> {
    let nodes = quadrature_layout_nodes();
    let mut eval = SMatrix::<f64, 6, 6>::zeros();
    for (k, l) in nodes.iter().enumerate() {
        let phi = basis_values(2, *l);
        for j in 0..6 {
            eval[(k, j)] = phi[j];
        }
    }
    eval.try_inverse().expect("quadrature layout is unisolvent")
}

/// Restriction of a P2 function to the linear matching it at the
/// quadrature-simplex vertices.
pub fn pi_tilde_inverse(u: &DgFunction) -> Result<PiecewiseLinear> {
    if u.space.degree != 2 {
        return Err(Error::Config("pi_tilde_inverse expects a P2 function".into()));
    }
    let r = [0, 1, 2].map(|i| simplex_barycentric(SHRINK_DEG2, i));
    Ok(PiecewiseLinear(
        (0..u.space.num_elements)
            .map(|t| r.map(|l| u.eval_bary(t, l)))
            .collect(),
    ))
}

/// `Pi~_h`: the P2 function taking the linear's values at the quadrature
/// vertices and vanishing at the quadrature-layout midpoints.
pub fn pi_tilde(v: &PiecewiseLinear) -> DgFunction {
    let psi = quadrature_layout_basis();
    let space = Space {
        degree: 2,
        num_elements: v.0.len(),
    };
    let mut coeffs = Vec::with_capacity(space.num_dofs());
    for vals in &v.0 {
        for j in 0..6 {
            coeffs.push((0..3).map(|k| psi[(j, k)] * vals[k]).sum());
        }
    }
    DgFunction { space, coeffs }
}

/// Barycentric coordinates, inside element `t`, of the point at parameter
/// `s` along local edge `i`, measured from the edge's smaller global vertex.
/// Both neighbours of an edge therefore agree on the physical point.
pub fn edge_gauss_barycentric(mesh: &Mesh, t: usize, i: usize, s: f64) -> [f64; 3] {
    let el = &mesh.elements[t];
    let (a, b) = el.edge(i);
    let (ia, ib) = ((i + 1) % 3, (i + 2) % 3);
    let mut l = [0.0; 3];
    if a < b {
        l[ia] = 1.0 - s;
        l[ib] = s;
    } else {
        l[ib] = 1.0 - s;
        l[ia] = s;
    }
    l
}

/// Gauss points on an edge as `(parameter, weight)` pairs on `[0, 1]`.
pub fn edge_rule() -> &'static [(f64, f64); 4] {
    &LINE_GL4
}
