//! Interior penalty operator, load vector and obstacle constraint systems.
//!
//! The operator is `A[i][j] = A_h(phi_j, phi_i)` with
//! `A_h(w, v) = sum_T (grad w, grad v)_T - sum_e ({grad w}, [v])_e
//!  - theta sum_e ({grad v}, [w])_e + sum_e eta/h_e ([w], [v])_e`.
//! On an interior edge the jump is taken in the direction of the edge normal
//! (out of the lower-numbered element); on a boundary edge the single trace
//! is used for both jump and average.

use nalgebra::{Point2, Vector2};
use serde::Serialize;

use crate::error::{Error, Result};
use crate::fespace::{basis_gradients, basis_values, edge_gauss_barycentric, Space};
use crate::mesh::Mesh;
use crate::quadrature::{quadrature_nodes, simplex_barycentric, LINE_GL4, SHRINK_DEG2, TRI_DEG6};
use crate::sparse::CsrMatrix;
use crate::topology::Topology;

pub type SparseOperator = CsrMatrix;

/// Interior penalty variant; the value is the symmetrisation parameter theta.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum Method {
    Sipg,
    Iipg,
    Nipg,
}

impl Method {
    pub fn theta(self) -> f64 {
        match self {
            Method::Sipg => 1.0,
            Method::Iipg => 0.0,
            Method::Nipg => -1.0,
        }
    }

    pub fn default_penalty(self) -> f64 {
        match self {
            Method::Sipg => 45.0,
            Method::Iipg => 30.0,
            Method::Nipg => 20.0,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Method::Sipg => "sipg",
            Method::Iipg => "iipg",
            Method::Nipg => "nipg",
        }
    }
}

/// Which discrete admissible set is used.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum ConstraintKind {
    /// Elementwise means above the obstacle means.
    Integral,
    /// Point values above the obstacle at the quadrature-simplex vertices.
    Quadrature,
}

impl ConstraintKind {
    /// The index `t` in `{1, 2}`.
    pub fn index(self) -> u8 {
        match self {
            ConstraintKind::Integral => 1,
            ConstraintKind::Quadrature => 2,
        }
    }

    pub fn rows_per_element(self) -> usize {
        match self {
            ConstraintKind::Integral => 1,
            ConstraintKind::Quadrature => 3,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct MethodConfig {
    pub method: Method,
    pub penalty: f64,
    pub degree: u8,
    pub constraint: ConstraintKind,
}

impl MethodConfig {
    pub fn new(method: Method, degree: u8, constraint: ConstraintKind) -> MethodConfig {
        MethodConfig {
            method,
            penalty: method.default_penalty(),
            degree,
            constraint,
        }
    }

    pub fn with_penalty(mut self, penalty: f64) -> MethodConfig {
        self.penalty = penalty;
        self
    }

    pub fn theta(&self) -> f64 {
        self.method.theta()
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.penalty > 0.0) || !self.penalty.is_finite() {
            return Err(Error::Config(format!("penalty must be positive, got {}", self.penalty)));
        }
        if self.degree != 1 && self.degree != 2 {
            return Err(Error::Config(format!("degree must be 1 or 2, got {}", self.degree)));
        }
        if self.constraint == ConstraintKind::Quadrature && self.degree != 2 {
            return Err(Error::Config("quadrature-point constraints require degree 2".into()));
        }
        Ok(())
    }
}

/// Local jump and normal-average data of one element's basis on an edge.
struct Trace {
    jump: [f64; 6],
    avg: [f64; 6],
}

fn edge_traces(
    mesh: &Mesh,
    space: Space,
    edge: &crate::topology::Edge,
    s: f64,
) -> Vec<Trace> {
    let n = edge.normal;
    let deg = space.degree;
    let sides: &[(usize, usize, f64)] = if edge.interior {
        &[(edge.elements[0], edge.local[0], 1.0), (edge.elements[1], edge.local[1], -1.0)]
    } else {
        &[(edge.elements[0], edge.local[0], 1.0)]
    };
    let half = if edge.interior { 0.5 } else { 1.0 };
    sides
        .iter()
        .map(|&(t, i, sign)| {
            let l = edge_gauss_barycentric(mesh, t, i, s);
            let phi = basis_values(deg, l);
            let dphi = basis_gradients(deg, l, &mesh.geometry(t).barycentric_gradients());
            let mut jump = [0.0; 6];
            let mut avg = [0.0; 6];
            for a in 0..space.dofs_per_element() {
                jump[a] = sign * phi[a];
                avg[a] = half * dphi[a].dot(&n);
            }
            Trace {
                jump,
                avg,
            }
        })
        .collect()
}

/// Assembles `a_h + b_h` for the given method and penalty.
pub fn assemble_operator(mesh: &Mesh, topo: &Topology, space: Space, cfg: &MethodConfig) -> CsrMatrix {
    let nloc = space.dofs_per_element();
    let theta = cfg.theta();
    let mut trip = Vec::with_capacity(space.num_elements * nloc * nloc * 4);

    for t in 0..mesh.num_elements() {
        let g = mesh.geometry(t);
        let dl = g.barycentric_gradients();
        let mut k = [[0.0; 6]; 6];
        for &(l, w) in &TRI_DEG6 {
            let dphi = basis_gradients(space.degree, l, &dl);
            for i in 0..nloc {
                for j in 0..nloc {
                    k[i][j] += w * dphi[i].dot(&dphi[j]);
                }
            }
        }
        let off = space.offset(t);
        for i in 0..nloc {
            for j in 0..nloc {
                trip.push((off + i, off + j, k[i][j] * g.area));
            }
        }
    }

    for edge in &topo.edges {
        let sigma = cfg.penalty / edge.length;
        let sides = if edge.interior { 2 } else { 1 };
        let mut block = vec![[[0.0; 6]; 6]; sides * sides];
        for &(s, w) in &LINE_GL4 {
            let tr = edge_traces(mesh, space, edge, s);
            let w = w * edge.length;
            for (p, tp) in tr.iter().enumerate() {
                for (q, tq) in tr.iter().enumerate() {
                    let b = &mut block[p * sides + q];
                    // row: test function from side p, column: trial function from side q
                    for i in 0..nloc {
                        for j in 0..nloc {
                            b[i][j] += w
                                * (-tq.avg[j] * tp.jump[i] - theta * tp.avg[i] * tq.jump[j]
                                    + sigma * tq.jump[j] * tp.jump[i]);
                        }
                    }
                }
            }
        }
        let offsets: Vec<usize> = if edge.interior {
            vec![space.offset(edge.elements[0]), space.offset(edge.elements[1])]
        } else {
            vec![space.offset(edge.elements[0])]
        };
        for p in 0..sides {
            for q in 0..sides {
                let b = &block[p * sides + q];
                for i in 0..nloc {
                    for j in 0..nloc {
                        trip.push((offsets[p] + i, offsets[q] + j, b[i][j]));
                    }
                }
            }
        }
    }
    CsrMatrix::from_triplets(space.num_dofs(), space.num_dofs(), trip)
}

/// Load vector `(f, phi_i)` with the degree-6 rule.
pub fn assemble_load<F: Fn(Point2<f64>) -> f64>(mesh: &Mesh, space: Space, f: F) -> Vec<f64> {
    let nloc = space.dofs_per_element();
    let mut load = vec![0.0; space.num_dofs()];
    for t in 0..mesh.num_elements() {
        let g = mesh.geometry(t);
        let off = space.offset(t);
        for &(l, w) in &TRI_DEG6 {
            let fv = f(g.point(l)) * w * g.area;
            let phi = basis_values(space.degree, l);
            for i in 0..nloc {
                load[off + i] += fv * phi[i];
            }
        }
    }
    load
}

/// Adds the weakly imposed Dirichlet data `g` to the load:
/// `-theta (grad v . n, g)_e + eta/h_e (g, v)_e` on boundary edges.
pub fn add_dirichlet_load<G: Fn(Point2<f64>) -> f64>(
    mesh: &Mesh,
    topo: &Topology,
    space: Space,
    cfg: &MethodConfig,
    g: G,
    load: &mut [f64],
) {
    let nloc = space.dofs_per_element();
    let theta = cfg.theta();
    for edge in topo.edges.iter().filter(|e| !e.interior) {
        let sigma = cfg.penalty / edge.length;
        let off = space.offset(edge.elements[0]);
        for &(s, w) in &LINE_GL4 {
            let gv = g(edge.point(mesh, s));
            if gv == 0.0 {
                continue;
            }
            let tr = &edge_traces(mesh, space, edge, s)[0];
            for i in 0..nloc {
                load[off + i] += w * edge.length * gv * (-theta * tr.avg[i] + sigma * tr.jump[i]);
            }
        }
    }
}

/// Sparse constraint operator `B v >= c` realising one of the discrete
/// admissible sets.
#[derive(Debug, Clone)]
pub struct ConstraintSystem {
    pub kind: ConstraintKind,
    pub b: CsrMatrix,
    pub c: Vec<f64>,
    pub row_element: Vec<usize>,
    /// Quadrature-simplex vertex of each row (always 0 for integral rows).
    pub row_vertex: Vec<u8>,
}

impl ConstraintSystem {
    pub fn num_rows(&self) -> usize {
        self.c.len()
    }

    /// `B v - c`.
    pub fn slack(&self, v: &[f64]) -> Vec<f64> {
        let mut r = self.b.matvec(v);
        for (ri, ci) in r.iter_mut().zip(&self.c) {
            *ri -= ci;
        }
        r
    }
}

/// Constraint rows: elementwise means (integral kind) or point evaluations
/// at the degree-2 quadrature-simplex vertices (quadrature kind).
pub fn build_constraints<F: Fn(Point2<f64>) -> f64>(
    mesh: &Mesh,
    space: Space,
    kind: ConstraintKind,
    chi: F,
) -> Result<ConstraintSystem> {
    let ne = mesh.num_elements();
    let nloc = space.dofs_per_element();
    let mut trip = Vec::new();
    let mut c = Vec::with_capacity(ne * kind.rows_per_element());
    let mut row_element = Vec::with_capacity(c.capacity());
    let mut row_vertex = Vec::with_capacity(c.capacity());
    match kind {
        ConstraintKind::Integral => {
            let means = crate::fespace::q_h(mesh, &chi);
            let weights: &[f64] = if space.degree == 1 {
                &[1.0 / 3.0; 3]
            } else {
                &[0.0, 0.0, 0.0, 1.0 / 3.0, 1.0 / 3.0, 1.0 / 3.0]
            };
            for t in 0..ne {
                let off = space.offset(t);
                for (i, &w) in weights.iter().enumerate() {
                    if w != 0.0 {
                        trip.push((t, off + i, w));
                    }
                }
                c.push(means.0[t]);
                row_element.push(t);
                row_vertex.push(0);
            }
        }
        ConstraintKind::Quadrature => {
            if space.degree != 2 {
                return Err(Error::Config("quadrature-point constraints require degree 2".into()));
            }
            for t in 0..ne {
                let q = quadrature_nodes(mesh, t, 2);
                let off = space.offset(t);
                for i in 0..3 {
                    let row = c.len();
                    let phi = basis_values(2, simplex_barycentric(SHRINK_DEG2, i));
                    for (j, &v) in phi.iter().enumerate().take(nloc) {
                        trip.push((row, off + j, v));
                    }
                    c.push(chi(q.points[i]));
                    row_element.push(t);
                    row_vertex.push(i as u8);
                }
            }
        }
    }
    Ok(ConstraintSystem {
        kind,
        b: CsrMatrix::from_triplets(c.len(), space.num_dofs(), trip),
        c,
        row_element,
        row_vertex,
    })
}

/// Gradient jump helper shared with the estimator: `grad u+ . n - grad u- . n`.
pub fn normal_jump(g0: Vector2<f64>, g1: Vector2<f64>, n: Vector2<f64>) -> f64 {
    (g0 - g1).dot(&n)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fespace::DgFunction;
    use crate::mesh::{build_rect_mesh, Element};
    use crate::sparse::dot;

    fn reference() -> Mesh {
        Mesh {
            vertices: vec![Point2::new(0.0, 0.0), Point2::new(1.0, 0.0), Point2::new(0.0, 1.0)],
            elements: vec![Element { vertices: [0, 1, 2], refinement_edge: 0, generation: 0, boundary: [true; 3] }],
        }
    }

    #[test]
    fn config_validation() {
        assert!(MethodConfig::new(Method::Sipg, 1, ConstraintKind::Integral).validate().is_ok());
        assert!(MethodConfig::new(Method::Sipg, 1, ConstraintKind::Quadrature).validate().is_err());
        assert!(MethodConfig::new(Method::Nipg, 2, ConstraintKind::Integral).with_penalty(0.0).validate().is_err());
        assert!(MethodConfig::new(Method::Nipg, 3, ConstraintKind::Integral).validate().is_err());
        assert_eq!(MethodConfig::new(Method::Nipg, 2, ConstraintKind::Integral).penalty, 20.0);
    }

    #[test]
    fn constants_only_see_the_boundary_penalty() {
        let m = reference();
        let topo = Topology::build(&m).unwrap();
        for deg in [1, 2] {
            let space = Space::new(deg, 1).unwrap();
            let cfg = MethodConfig::new(Method::Sipg, deg, ConstraintKind::Integral);
            let a = assemble_operator(&m, &topo, space, &cfg);
            let one = vec![1.0; space.num_dofs()];
            let form = dot(&one, &a.matvec(&one));
            assert!((form - 3.0 * cfg.penalty).abs() < 1e-10, "{form}");
        }
    }

    #[test]
    fn sipg_is_symmetric_and_nipg_is_not() {
        let m = build_rect_mesh(0.0, 1.0, 0.0, 1.0, 2, 2).unwrap().refine_nvb([0, 5]).unwrap();
        let topo = Topology::build(&m).unwrap();
        for deg in [1, 2] {
            let space = Space::new(deg, m.num_elements()).unwrap();
            let sipg = assemble_operator(&m, &topo, space, &MethodConfig::new(Method::Sipg, deg, ConstraintKind::Integral));
            assert!(sipg.asymmetry() < 1e-12);
            let nipg = assemble_operator(&m, &topo, space, &MethodConfig::new(Method::Nipg, deg, ConstraintKind::Integral));
            assert!(nipg.asymmetry() > 1e-3);
        }
    }

    #[test]
    fn theta_enters_linearly() {
        // A(theta) = K + P + G + theta G^T
        let m = build_rect_mesh(0.0, 1.0, 0.0, 1.0, 2, 1).unwrap();
        let topo = Topology::build(&m).unwrap();
        let space = Space::new(2, m.num_elements()).unwrap();
        let eta = 25.0;
        let mk = |meth| assemble_operator(&m, &topo, space, &MethodConfig::new(meth, 2, ConstraintKind::Integral).with_penalty(eta));
        let (s, i, n) = (mk(Method::Sipg), mk(Method::Iipg), mk(Method::Nipg));
        let it = i.transpose();
        let d = |mat: &CsrMatrix, r, c| mat.get(r, c);
        for r in 0..space.num_dofs() {
            for c in 0..space.num_dofs() {
                assert!((d(&s, r, c) + d(&n, r, c) - 2.0 * d(&i, r, c)).abs() < 1e-10);
                let cons = d(&s, r, c) - d(&i, r, c);
                let sym_part = d(&i, r, c) - d(&it, r, c);
                let cons_t = d(&s, c, r) - d(&i, c, r);
                assert!((cons - cons_t + sym_part).abs() < 1e-10);
            }
        }
    }

    #[test]
    fn sipg_is_coercive_on_random_vectors() {
        use rand::{Rng, SeedableRng};
        let m = build_rect_mesh(-1.5, 1.5, -1.5, 1.5, 4, 4).unwrap();
        let topo = Topology::build(&m).unwrap();
        let mut rng = rand::rngs::StdRng::seed_from_u64(7);
        for deg in [1, 2] {
            let space = Space::new(deg, m.num_elements()).unwrap();
            let a = assemble_operator(&m, &topo, space, &MethodConfig::new(Method::Sipg, deg, ConstraintKind::Integral));
            for _ in 0..100 {
                let v: Vec<f64> = (0..space.num_dofs()).map(|_| rng.random_range(-1.0..1.0)).collect();
                assert!(dot(&v, &a.matvec(&v)) > 0.0);
            }
        }
    }

    #[test]
    fn load_examples() {
        let m = reference();
        let space = Space::new(1, 1).unwrap();
        assert!(assemble_load(&m, space, |_| 0.0).iter().all(|&v| v == 0.0));
        for v in assemble_load(&m, space, |_| -2.0) {
            assert!((v + 1.0 / 3.0).abs() < 1e-14);
        }
    }

    #[test]
    fn constraint_rows() {
        let m = build_rect_mesh(0.0, 1.0, 0.0, 1.0, 2, 2).unwrap();
        for (deg, kind) in [(1, ConstraintKind::Integral), (2, ConstraintKind::Integral), (2, ConstraintKind::Quadrature)] {
            let space = Space::new(deg, m.num_elements()).unwrap();
            let k = build_constraints(&m, space, kind, |_| 0.0).unwrap();
            assert_eq!(k.num_rows(), m.num_elements() * kind.rows_per_element());
            assert!(k.c.iter().all(|&c| c == 0.0));
            for r in k.b.matvec(&vec![1.0; space.num_dofs()]) {
                assert!((r - 1.0).abs() < 1e-14);
            }
        }
        let space = Space::new(2, m.num_elements()).unwrap();
        let k = build_constraints(&m, space, ConstraintKind::Quadrature, |p| p.x).unwrap();
        let x = DgFunction::interpolate(&m, space, |p| p.x);
        for (bv, c) in k.b.matvec(&x.coeffs).iter().zip(&k.c) {
            assert!((bv - c).abs() < 1e-14);
        }
        assert!(build_constraints(&m, Space::new(1, 8).unwrap(), ConstraintKind::Quadrature, |_| 0.0).is_err());
    }
}
