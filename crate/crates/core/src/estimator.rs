//! Supremum-norm a posteriori estimator.

use nalgebra::Point2;
use serde::Serialize;

use crate::assembly::ConstraintKind;
use crate::error::{Error, Result};
use crate::fespace::{edge_gauss_barycentric, DgFunction};
use crate::mesh::Mesh;
use crate::multiplier::MultiplierField;
use crate::quadrature::lattice;
use crate::topology::Topology;

/// Exact `max |q|` on `[0, 1]` for the quadratic through `(0, v[0])`,
/// `(1/2, v[1])`, `(1, v[2])`.
pub fn poly_linf_max_edge(v: [f64; 3]) -> f64 {
    let b = 4.0 * v[1] - 3.0 * v[0] - v[2];
    let a = 2.0 * v[0] - 4.0 * v[1] + 2.0 * v[2];
    let mut m = v[0].abs().max(v[2].abs());
    if a != 0.0 {
        let s = -b / (2.0 * a);
        if s > 0.0 && s < 1.0 {
            m = m.max((v[0] + b * s + a * s * s).abs());
        }
    }
    m
}

/// Exact `max |p|` over a triangle of a quadratic given by its six P2 nodal
/// values (vertices, then midpoints of the edges opposite each vertex).
pub fn poly_linf_max(v: [f64; 6]) -> f64 {
    let mut m = poly_linf_max_edge([v[0], v[5], v[1]])
        .max(poly_linf_max_edge([v[1], v[3], v[2]]))
        .max(poly_linf_max_edge([v[2], v[4], v[0]]));
    // monomial form in the reference coordinates (xi, eta) = (l1, l2)
    let c0 = v[0];
    let c1 = -3.0 * v[0] + 4.0 * v[5] - v[1];
    let c3 = 2.0 * v[0] - 4.0 * v[5] + 2.0 * v[1];
    let c2 = -3.0 * v[0] + 4.0 * v[4] - v[2];
    let c5 = 2.0 * v[0] - 4.0 * v[4] + 2.0 * v[2];
    let c4 = 4.0 * (v[3] - c0 - 0.5 * c1 - 0.5 * c2 - 0.25 * c3 - 0.25 * c5);
    let det = 4.0 * c3 * c5 - c4 * c4;
    if det.abs() > 1e-14 * (c3.abs() + c4.abs() + c5.abs()).powi(2) {
        let xi = (-c1 * 2.0 * c5 + c2 * c4) / det;
        let eta = (-c2 * 2.0 * c3 + c1 * c4) / det;
        if xi > 0.0 && eta > 0.0 && xi + eta < 1.0 {
            let p = c0 + c1 * xi + c2 * eta + c3 * xi * xi + c4 * xi * eta + c5 * eta * eta;
            m = m.max(p.abs());
        }
    }
    m
}

/// `max |field|` over the degree-`m` barycentric lattice of element `t`.
/// A lower bound of the true supremum for non-polynomial fields.
pub fn field_linf_max<F: Fn(Point2<f64>) -> f64>(mesh: &Mesh, t: usize, field: F, m: usize) -> f64 {
    let g = mesh.geometry(t);
    lattice(m).into_iter().map(|l| field(g.point(l)).abs()).fold(0.0, f64::max)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct EstimatorConfig {
    pub lattice: usize,
    /// Elements with `int_T B_h sigma < -neg_tol` carry the `(u - chi)^+`
    /// term. The integral is in load units, where recovery roundoff is not
    /// amplified by `1/|T|`.
    pub neg_tol: f64,
    /// Samples per boundary edge for the jump against inhomogeneous data.
    pub boundary_samples: usize,
}

impl Default for EstimatorConfig {
    fn default() -> Self {
        EstimatorConfig {
            lattice: 6,
            neg_tol: 1e-9,
            boundary_samples: 12,
        }
    }
}

/// Problem data entering the estimator.
pub struct EstimatorData<'a> {
    pub f: &'a dyn Fn(Point2<f64>) -> f64,
    pub chi: &'a dyn Fn(Point2<f64>) -> f64,
    /// Dirichlet data; `None` means homogeneous.
    pub g: Option<&'a dyn Fn(Point2<f64>) -> f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EstimatorBreakdown {
    pub t: u8,
    pub e1: Vec<f64>,
    pub e2: Vec<f64>,
    pub e3: Vec<f64>,
    pub e4: Vec<f64>,
    pub osc: Vec<f64>,
    pub obsplus: Vec<f64>,
    pub obsneg: Vec<f64>,
    /// Global maxima of `e1..e4` and `osc`.
    pub eta: [f64; 5],
    pub h_min: f64,
    pub eta_h: f64,
    pub indicators: Vec<f64>,
}

fn max_of(v: &[f64]) -> f64 {
    v.iter().copied().fold(0.0, f64::max)
}

pub fn log_factor(h_min: f64) -> f64 {
    h_min.ln().abs().max(1.0)
}

/// Composite estimate and per-element marking indicators:
/// `eta_h = L (eta1 + eta2 + eta3 + (t-1) eta4) + max obsplus + max obsneg`,
/// `eta_T = L (e1 + e2 + e3 + (t-1) e4) + obsplus + obsneg`,
/// with `L = max(|ln h_min|, 1)`.
pub fn global_estimate(b: &EstimatorBreakdown) -> (f64, Vec<f64>) {
    let l = log_factor(b.h_min);
    let w4 = f64::from(b.t) - 1.0;
    let eta = [max_of(&b.e1), max_of(&b.e2), max_of(&b.e3), max_of(&b.e4)];
    let eta_h = l * (eta[0] + eta[1] + eta[2] + w4 * eta[3]) + max_of(&b.obsplus) + max_of(&b.obsneg);
    let ind = (0..b.e1.len())
        .map(|t| l * (b.e1[t] + b.e2[t] + b.e3[t] + w4 * b.e4[t]) + b.obsplus[t] + b.obsneg[t])
        .collect();
    (eta_h, ind)
}

/// Evaluates every per-element term and the global quantities.
pub fn element_indicators(
    mesh: &Mesh,
    topo: &Topology,
    u: &DgFunction,
    sigma: &MultiplierField,
    data: &EstimatorData,
    cfg: &EstimatorConfig,
) -> Result<EstimatorBreakdown> {
    let t_kind = sigma.kind.index();
    if sigma.kind == ConstraintKind::Quadrature && u.space.degree != 2 {
        return Err(Error::Config("quadrature multiplier requires a degree-2 solution".into()));
    }
    if sigma.reduced.0.len() != mesh.num_elements() || u.space.num_elements != mesh.num_elements() {
        return Err(Error::Config("estimator inputs do not match the mesh".into()));
    }
    let ne = mesh.num_elements();
    let pts = lattice(cfg.lattice);
    let mut b = EstimatorBreakdown {
        t: t_kind,
        e1: vec![0.0; ne],
        e2: vec![0.0; ne],
        e3: vec![0.0; ne],
        e4: vec![0.0; ne],
        osc: vec![0.0; ne],
        obsplus: vec![0.0; ne],
        obsneg: vec![0.0; ne],
        eta: [0.0; 5],
        h_min: mesh.h_min(),
        eta_h: 0.0,
        indicators: Vec::new(),
    };

    for t in 0..ne {
        let g = mesh.geometry(t);
        let h2 = g.h * g.h;
        let lap = u.laplacian(&g, t);
        let gate = sigma.reduced.0[t] * g.area < -cfg.neg_tol;
        let (mut r1, mut fmax, mut fmin, mut plus, mut neg) = (0.0f64, f64::NEG_INFINITY, f64::INFINITY, 0.0f64, 0.0f64);
        for &l in &pts {
            let x = g.point(l);
            let fv = (data.f)(x);
            let uv = u.eval_bary(t, l);
            let cv = (data.chi)(x);
            r1 = r1.max((lap + fv - sigma.eval_bary(t, l)).abs());
            fmax = fmax.max(fv);
            fmin = fmin.min(fv);
            plus = plus.max(cv - uv);
            if gate {
                neg = neg.max(uv - cv);
            }
        }
        b.e1[t] = h2 * r1;
        b.osc[t] = h2 * (fmax - fmin) / 2.0;
        b.obsplus[t] = plus.max(0.0);
        b.obsneg[t] = neg.max(0.0);
        if let Some(s2) = &sigma.sigma2 {
            let mean = sigma.reduced.0[t];
            let dev = (0..3)
                .map(|i| {
                    let mut l = [0.0; 3];
                    l[i] = 1.0;
                    (s2.eval_bary(t, l) - mean).abs()
                })
                .fold(0.0, f64::max);
            b.e4[t] = h2 * dev;
        }
    }

    for edge in &topo.edges {
        let [t0, t1] = edge.elements;
        let (l0, l1) = (edge.local[0], edge.local[1]);
        if edge.interior {
            let g0 = mesh.geometry(t0);
            let g1 = mesh.geometry(t1);
            let at = |s: f64| {
                let a = u.eval_grad_bary(&g0, t0, edge_gauss_barycentric(mesh, t0, l0, s));
                let c = u.eval_grad_bary(&g1, t1, edge_gauss_barycentric(mesh, t1, l1, s));
                (a.0 - c.0, (a.1 - c.1).dot(&edge.normal))
            };
            let samples = [at(0.0), at(0.5), at(1.0)];
            // the normal derivative jump is at most linear along the edge
            let grad = samples.iter().map(|s| s.1.abs()).fold(0.0, f64::max) * edge.length;
            let jump = poly_linf_max_edge(samples.map(|s| s.0));
            for t in [t0, t1] {
                b.e2[t] = b.e2[t].max(grad);
                b.e3[t] = b.e3[t].max(jump);
            }
        } else {
            let trace = |s: f64| u.eval_bary(t0, edge_gauss_barycentric(mesh, t0, l0, s));
            let jump = match data.g {
                None => poly_linf_max_edge([trace(0.0), trace(0.5), trace(1.0)]),
                Some(gf) => {
                    let n = cfg.boundary_samples.max(2);
                    (0..=n)
                        .map(|i| {
                            let s = i as f64 / n as f64;
                            (trace(s) - gf(edge.point(mesh, s))).abs()
                        })
                        .fold(0.0, f64::max)
                }
            };
            b.e3[t0] = b.e3[t0].max(jump);
        }
    }

    b.eta = [max_of(&b.e1), max_of(&b.e2), max_of(&b.e3), max_of(&b.e4), max_of(&b.osc)];
    let (eta_h, ind) = global_estimate(&b);
    b.eta_h = eta_h;
    b.indicators = ind;
    Ok(b)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fespace::{PiecewiseConstant, PiecewiseLinear, Space, P2_NODES};
    use crate::mesh::{build_rect_mesh, Element};
    use proptest::prelude::*;

    fn reference() -> Mesh {
        Mesh {
            vertices: vec![Point2::new(0.0, 0.0), Point2::new(1.0, 0.0), Point2::new(0.0, 1.0)],
            elements: vec![Element { vertices: [0, 1, 2], refinement_edge: 0, generation: 0, boundary: [true; 3] }],
        }
    }

    fn nodal(p: impl Fn(f64, f64) -> f64) -> [f64; 6] {
        P2_NODES.map(|l| p(l[1], l[2]))
    }

    #[test]
    fn poly_examples() {
        assert_eq!(poly_linf_max(nodal(|x, _| x)), 1.0);
        assert!((poly_linf_max_edge([0.0, 0.25, 0.0]) - 0.25).abs() < 1e-15);
        assert!((poly_linf_max(nodal(|x, _| x - 1.0 / 3.0)) - 2.0 / 3.0).abs() < 1e-15);
        // interior critical point of a paraboloid
        let bump = nodal(|x, y| 1.0 - 2.0 * ((x - 1.0 / 3.0).powi(2) + (y - 1.0 / 3.0).powi(2)));
        assert!((poly_linf_max(bump) - 1.0).abs() < 1e-14);
    }

    proptest! {
        #[test]
        fn poly_max_dominates_dense_sampling(c in prop::array::uniform6(-1.0f64..1.0)) {
            let p = |x: f64, y: f64| c[0] + c[1] * x + c[2] * y + c[3] * x * x + c[4] * x * y + c[5] * y * y;
            let exact = poly_linf_max(nodal(p));
            let mut sampled = 0.0f64;
            for l in lattice(60) {
                sampled = sampled.max(p(l[1], l[2]).abs());
            }
            prop_assert!(exact >= sampled - 1e-12);
            prop_assert!(exact <= sampled + 1e-3);
        }
    }

    #[test]
    fn field_examples() {
        let m = reference();
        assert_eq!(field_linf_max(&m, 0, |_| -3.5, 6), 3.5);
        assert_eq!(field_linf_max(&m, 0, |p| p.x, 2), 1.0);
        let quartic = |p: Point2<f64>| 10.0 - 6.0 * (p.x * p.x - 1.0).powi(2) - 20.0 * p.y * p.y;
        let mesh = build_rect_mesh(-2.0, 2.0, -1.0, 1.0, 4, 2).unwrap();
        for t in 0..mesh.num_elements() {
            let a = field_linf_max(&mesh, t, quartic, 6);
            let b = field_linf_max(&mesh, t, quartic, 12);
            assert!((a - b).abs() <= 0.01 * b);
        }
    }

    fn zero_sigma(ne: usize) -> MultiplierField {
        MultiplierField::from_sigma1(PiecewiseConstant(vec![0.0; ne]))
    }

    #[test]
    fn zero_configuration() {
        let m = build_rect_mesh(0.0, 1.0, 0.0, 1.0, 2, 2).unwrap();
        let topo = Topology::build(&m).unwrap();
        let u = DgFunction::zeros(Space::new(2, m.num_elements()).unwrap());
        let data = EstimatorData { f: &|_| 0.0, chi: &|_| -1.0, g: None };
        let b = element_indicators(&m, &topo, &u, &zero_sigma(m.num_elements()), &data, &EstimatorConfig::default()).unwrap();
        assert_eq!(b.eta_h, 0.0);
        assert!(b.indicators.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn indicator_jump() {
        let m = build_rect_mesh(0.0, 1.0, 0.0, 1.0, 2, 2).unwrap();
        let topo = Topology::build(&m).unwrap();
        let space = Space::new(1, m.num_elements()).unwrap();
        let mut u = DgFunction::zeros(space);
        for c in &mut u.coeffs[space.element_dofs(3)] {
            *c = 1.0;
        }
        let data = EstimatorData { f: &|_| 0.0, chi: &|_| -1.0, g: None };
        let b = element_indicators(&m, &topo, &u, &zero_sigma(m.num_elements()), &data, &EstimatorConfig::default()).unwrap();
        assert_eq!(b.e3[3], 1.0);
        for e in &topo.edges {
            if e.elements.contains(&3) {
                let other = if e.elements[0] == 3 { e.elements[1] } else { e.elements[0] };
                assert_eq!(b.e3[other], 1.0);
            }
        }
        assert_eq!(b.e2[3], 0.0);
    }

    #[test]
    fn oscillation_of_a_linear() {
        let m = reference();
        let topo = Topology::build(&m).unwrap();
        let u = DgFunction::zeros(Space::new(1, 1).unwrap());
        let data = EstimatorData { f: &|p| p.x, chi: &|_| -1.0, g: None };
        let b = element_indicators(&m, &topo, &u, &zero_sigma(1), &data, &EstimatorConfig::default()).unwrap();
        assert!((b.osc[0] - 1.0).abs() < 1e-14);
        assert!((b.eta[4] - 1.0).abs() < 1e-14);
    }

    #[test]
    fn p2_laplacian_matches_second_differences() {
        let m = reference();
        let g = m.geometry(0);
        let u = DgFunction::interpolate(&m, Space::new(2, 1).unwrap(), |p| 3.0 * p.x * p.x - p.x * p.y + 0.5 * p.y * p.y);
        let lap = u.laplacian(&g, 0);
        let d = 1e-3;
        for c in [Point2::new(0.2, 0.2), Point2::new(0.5, 0.25), Point2::new(0.1, 0.6)] {
            let v = |dx: f64, dy: f64| u.eval(&g, 0, &Point2::new(c.x + dx, c.y + dy));
            let fd = (v(d, 0.0) + v(-d, 0.0) + v(0.0, d) + v(0.0, -d) - 4.0 * v(0.0, 0.0)) / (d * d);
            assert!((fd - lap).abs() < 1e-6 && (lap - 7.0).abs() < 1e-10);
        }
    }

    #[test]
    fn composite_formula() {
        let b = EstimatorBreakdown {
            t: 1,
            e1: vec![0.1, 0.0],
            e2: vec![0.0, 0.2],
            e3: vec![0.05, 0.0],
            e4: vec![0.0, 0.0],
            osc: vec![0.0; 2],
            obsplus: vec![0.01, 0.0],
            obsneg: vec![0.0; 2],
            eta: [0.0; 5],
            h_min: 1.0 / 16.0,
            eta_h: 0.0,
            indicators: vec![],
        };
        let (eta_h, ind) = global_estimate(&b);
        assert!((eta_h - 0.98041).abs() < 1e-5, "{eta_h}");
        assert!((ind[0] - (16.0f64.ln() * 0.15 + 0.01)).abs() < 1e-14);
        let mut b2 = b.clone();
        b2.t = 2;
        b2.e4 = vec![0.0, 0.3];
        assert!(global_estimate(&b2).0 > eta_h);
        assert_eq!(log_factor(1.0), 1.0);
    }

    #[test]
    fn e4_and_gated_obstacle_term() {
        let m = reference();
        let topo = Topology::build(&m).unwrap();
        let u = DgFunction::zeros(Space::new(2, 1).unwrap());
        let sigma = MultiplierField::from_sigma2(PiecewiseLinear(vec![[-3.0, 0.0, 0.0]]));
        let data = EstimatorData { f: &|_| 0.0, chi: &|_| -0.5, g: None };
        let b = element_indicators(&m, &topo, &u, &sigma, &data, &EstimatorConfig::default()).unwrap();
        // sigma is linear with value -3 at the first simplex vertex, so -5 at vertex 0
        assert!((b.e4[0] - 2.0 * 4.0).abs() < 1e-12);
        assert!((b.obsneg[0] - 0.5).abs() < 1e-14);
        assert_eq!(b.obsplus[0], 0.0);
        // the gate acts on the integral of B_h sigma; |T| = 1/2 here
        for (s, gated) in [(-1.5e-9, false), (-3e-9, true)] {
            let sigma = MultiplierField::from_sigma1(PiecewiseConstant(vec![s]));
            let p1 = DgFunction::zeros(Space::new(1, 1).unwrap());
            let b = element_indicators(&m, &topo, &p1, &sigma, &data, &EstimatorConfig::default()).unwrap();
            assert_eq!(b.obsneg[0] > 0.0, gated);
        }
        let p1 = DgFunction::zeros(Space::new(1, 1).unwrap());
        assert!(element_indicators(&m, &topo, &p1, &sigma, &data, &EstimatorConfig::default()).is_err());
    }
}
