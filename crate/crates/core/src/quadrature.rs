//! Integration rules on triangles and edges, and the quadrature simplex
//! whose vertices carry the nodal obstacle constraints.

use nalgebra::Point2;

use crate::mesh::Mesh;

/// Symmetric 12-point rule exact for degree 6 (Dunavant). Barycentric
/// points with weights normalised to sum to one.
pub const TRI_DEG6: [([f64; 3], f64); 12] = {
    const A1: f64 = 0.249_286_745_170_910;
    const B1: f64 = 0.501_426_509_658_179;
    const W1: f64 = 0.116_786_275_726_379;
    const A2: f64 = 0.063_089_014_491_502;
    const B2: f64 = 0.873_821_971_016_996;
    const W2: f64 = 0.050_844_906_370_207;
    const C1: f64 = 0.053_145_049_844_817;
    const C2: f64 = 0.310_352_451_033_784;
    const C3: f64 = 0.636_502_499_121_399;
    const W3: f64 = 0.082_851_075_618_374;
    [
        ([B1, A1, A1], W1),
        ([A1, B1, A1], W1),
        ([A1, A1, B1], W1),
        ([B2, A2, A2], W2),
        ([A2, B2, A2], W2),
        ([A2, A2, B2], W2),
        ([C1, C2, C3], W3),
        ([C1, C3, C2], W3),
        ([C2, C1, C3], W3),
        ([C2, C3, C1], W3),
        ([C3, C1, C2], W3),
        ([C3, C2, C1], W3),
    ]
};

/// 4-point Gauss-Legendre on `[0, 1]` (exact for degree 7), weights sum to one.
pub const LINE_GL4: [(f64, f64); 4] = {
    const X1: f64 = 0.339_981_043_584_856_3;
    const X2: f64 = 0.861_136_311_594_052_6;
    const W1: f64 = 0.652_145_154_862_546_1;
    const W2: f64 = 0.347_854_845_137_453_9;
    [
        (0.5 - 0.5 * X2, 0.5 * W2),
        (0.5 - 0.5 * X1, 0.5 * W1),
        (0.5 + 0.5 * X1, 0.5 * W1),
        (0.5 + 0.5 * X2, 0.5 * W2),
    ]
};

/// Shrink factor `b = 1 / sqrt(d + 2)` of the degree-2 quadrature simplex in 2D.
pub const SHRINK_DEG2: f64 = 0.5;

/// The `d + 1` point rule `|T|/3 * sum p(r_i)` on one element.
#[derive(Debug, Clone)]
pub struct QuadratureSimplex {
    pub element: usize,
    pub points: [Point2<f64>; 3],
    /// Barycentric coordinates of each point with respect to the element.
    pub barycentric: [[f64; 3]; 3],
    pub shrink: f64,
    pub order: u8,
    pub weight: f64,
}

/// Barycentric coordinates of quadrature-simplex vertex `i` for shrink `b`.
pub fn simplex_barycentric(b: f64, i: usize) -> [f64; 3] {
    let mut l = [(1.0 - b) / 3.0; 3];
    l[i] += b;
    l
}

/// Quadrature simplex of order `s` (1: element vertices, 2: shrunk towards
/// the centroid by `b = 1/2`). Panics for other orders.
pub fn quadrature_nodes(mesh: &Mesh, t: usize, s: u8) -> QuadratureSimplex {
    let b = match s {
        1 => 1.0,
        2 => SHRINK_DEG2,
        _ => panic!("quadrature simplex order must be 1 or 2, got {s}"),
    };
    let g = mesh.geometry(t);
    let barycentric = [0, 1, 2].map(|i| simplex_barycentric(b, i));
    let points = barycentric.map(|l| g.point(l));
    QuadratureSimplex {
        element: t,
        points,
        barycentric,
        shrink: b,
        order: s,
        weight: g.area / 3.0,
    }
}

impl QuadratureSimplex {
    /// `|T|/3 * (p(r_1) + p(r_2) + p(r_3))` from values at the nodes.
    pub fn integrate(&self, values: [f64; 3]) -> f64 {
        self.weight * (values[0] + values[1] + values[2])
    }
}

/// Integrates values sampled at the order-`s` quadrature nodes of element `t`.
pub fn integrate_simplex(mesh: &Mesh, values: [f64; 3], t: usize, s: u8) -> f64 {
    quadrature_nodes(mesh, t, s).integrate(values)
}

/// Integral over element `t` of `f` with the degree-6 rule.
pub fn integrate_element<F: FnMut(Point2<f64>) -> f64>(mesh: &Mesh, t: usize, mut f: F) -> f64 {
    let g = mesh.geometry(t);
    TRI_DEG6.iter().map(|&(l, w)| w * f(g.point(l))).sum::<f64>() * g.area
}

/// Barycentric lattice points `(i/m, j/m, k/m)`, `i + j + k = m`.
pub fn lattice(m: usize) -> Vec<[f64; 3]> {
    let m = m.max(1);
    let mut pts = Vec::with_capacity((m + 1) * (m + 2) / 2);
    for i in 0..=m {
        for j in 0..=(m - i) {
            let k = m - i - j;
            pts.push([i as f64 / m as f64, j as f64 / m as f64, k as f64 / m as f64]);
        }
    }
    pts
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mesh::{build_rect_mesh, Element};

    fn factorial(n: u32) -> f64 {
        (1..=n).map(f64::from).product()
    }

    /// Exact integral of a barycentric monomial over a triangle of area `area`.
    fn bary_monomial(a: u32, b: u32, c: u32, area: f64) -> f64 {
        2.0 * area * factorial(a) * factorial(b) * factorial(c) / factorial(a + b + c + 2)
    }

    fn reference() -> Mesh {
        Mesh {
            vertices: vec![Point2::new(0.0, 0.0), Point2::new(1.0, 0.0), Point2::new(0.0, 1.0)],
            elements: vec![Element { vertices: [0, 1, 2], refinement_edge: 0, generation: 0, boundary: [true; 3] }],
        }
    }

    #[test]
    fn degree6_rule_is_exact() {
        let wsum: f64 = TRI_DEG6.iter().map(|p| p.1).sum();
        assert!((wsum - 1.0).abs() < 1e-14);
        for a in 0..=6u32 {
            for b in 0..=(6 - a) {
                for c in 0..=(6 - a - b) {
                    let q: f64 = TRI_DEG6
                        .iter()
                        .map(|&(l, w)| w * l[0].powi(a as i32) * l[1].powi(b as i32) * l[2].powi(c as i32))
                        .sum::<f64>();
                    let exact = bary_monomial(a, b, c, 1.0);
                    assert!((q - exact).abs() < 1e-13 * exact.max(1e-3), "{a} {b} {c}: {q} vs {exact}");
                }
            }
        }
    }

    #[test]
    fn gauss_legendre_is_exact_to_degree_seven() {
        for k in 0..=7 {
            let q: f64 = LINE_GL4.iter().map(|&(x, w)| w * x.powi(k)).sum();
            assert!((q - 1.0 / (k as f64 + 1.0)).abs() < 1e-15);
        }
    }

    #[test]
    fn reference_nodes() {
        let m = reference();
        let q = quadrature_nodes(&m, 0, 2);
        let expect = [(1.0 / 6.0, 1.0 / 6.0), (2.0 / 3.0, 1.0 / 6.0), (1.0 / 6.0, 2.0 / 3.0)];
        for (p, e) in q.points.iter().zip(expect) {
            assert!((p.x - e.0).abs() < 1e-15 && (p.y - e.1).abs() < 1e-15);
        }
        let q1 = quadrature_nodes(&m, 0, 1);
        assert_eq!(q1.points.to_vec(), m.vertices);
    }

    #[test]
    fn simplex_mean_is_centroid() {
        let m = build_rect_mesh(-1.0, 3.0, 0.0, 1.0, 3, 2).unwrap().refine_nvb([0, 4]).unwrap();
        for t in 0..m.num_elements() {
            for s in [1, 2] {
                let q = quadrature_nodes(&m, t, s);
                let mean = (q.points[0].coords + q.points[1].coords + q.points[2].coords) / 3.0;
                assert!((mean - m.geometry(t).centroid().coords).norm() < 1e-12);
            }
        }
    }

    #[test]
    fn simplex_rule_examples() {
        let m = reference();
        let q2 = quadrature_nodes(&m, 0, 2);
        let xx = q2.points.map(|p| p.x * p.x);
        assert!((integrate_simplex(&m, xx, 0, 2) - 1.0 / 12.0).abs() < 1e-15);
        let q1 = quadrature_nodes(&m, 0, 1);
        assert!((integrate_simplex(&m, q1.points.map(|p| p.x), 0, 1) - 1.0 / 6.0).abs() < 1e-15);
        assert!((integrate_simplex(&m, [1.0; 3], 0, 2) - 0.5).abs() < 1e-15);
    }

    #[test]
    fn lattice_counts() {
        assert_eq!(lattice(6).len(), 28);
        assert_eq!(lattice(2).len(), 6);
        assert!(lattice(3).iter().all(|l| (l.iter().sum::<f64>() - 1.0).abs() < 1e-15));
    }
}
