//! Conforming triangulations of rectangles with newest-vertex bisection.
//!
//! Local edge `i` of an element is the edge opposite its local vertex `i`,
//! i.e. the segment `(v[(i + 1) % 3], v[(i + 2) % 3])`. The refinement edge
//! is stored as such a local index; the vertex opposite it is the element's
//! newest vertex.

use std::collections::{HashMap, HashSet};
use std::fmt::Write as _;

use nalgebra::{Point2, Vector2};

use crate::error::{Error, Result};

/// Hard cap on the number of closure steps in a single refinement call.
pub const MAX_BISECTIONS: usize = 10_000_000;

#[derive(Debug, Clone, PartialEq)]
pub struct Element {
    pub vertices: [usize; 3],
    /// Local index of the refinement edge, in `0..3`.
    pub refinement_edge: u8,
    pub generation: u32,
    /// Whether local edge `i` lies on the domain boundary.
    pub boundary: [bool; 3],
}

impl Element {
    /// Global vertex pair of local edge `i`, in local orientation.
    pub fn edge(&self, i: usize) -> (usize, usize) {
        (self.vertices[(i + 1) % 3], self.vertices[(i + 2) % 3])
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Mesh {
    pub vertices: Vec<Point2<f64>>,
    pub elements: Vec<Element>,
}

/// Per-element geometric quantities.
#[derive(Debug, Clone)]
pub struct ElementGeometry {
    /// Diameter (longest edge).
    pub h: f64,
    pub area: f64,
    pub vertices: [Point2<f64>; 3],
    /// Outward unit normal of local edge `i`.
    pub normals: [Vector2<f64>; 3],
    pub edge_lengths: [f64; 3],
}

impl ElementGeometry {
    pub fn centroid(&self) -> Point2<f64> {
        let [a, b, c] = self.vertices;
        Point2::from((a.coords + b.coords + c.coords) / 3.0)
    }

    /// Cartesian point from barycentric coordinates.
    pub fn point(&self, lambda: [f64; 3]) -> Point2<f64> {
        let [a, b, c] = self.vertices;
        Point2::from(a.coords * lambda[0] + b.coords * lambda[1] + c.coords * lambda[2])
    }

    /// Barycentric coordinates of a cartesian point.
    pub fn barycentric(&self, p: &Point2<f64>) -> [f64; 3] {
        let [a, b, c] = self.vertices;
        let det = 2.0 * self.area;
        let l1 = (p - a).perp(&(c - a)) / det;
        let l2 = ((b - a).perp(&(p - a))) / det;
        [1.0 - l1 - l2, l1, l2]
    }

    /// Gradients of the barycentric coordinates (constant on the element).
    pub fn barycentric_gradients(&self) -> [Vector2<f64>; 3] {
        let [a, b, c] = self.vertices;
        let det = 2.0 * self.area;
        let rot = |v: Vector2<f64>| Vector2::new(-v.y, v.x) / det;
        // grad(lambda_i) is the inward normal of edge i scaled by |e_i| / (2|T|)
        [rot(c - b), rot(a - c), rot(b - a)]
    }
}

fn signed_area(a: &Point2<f64>, b: &Point2<f64>, c: &Point2<f64>) -> f64 {
    0.5 * (b - a).perp(&(c - a))
}

fn edge_key(a: usize, b: usize) -> (usize, usize) {
    if a < b {
        (a, b)
    } else {
        (b, a)
    }
}

/// Longest local edge; ties go to the smallest opposite global vertex index.
fn longest_edge(vertices: &[Point2<f64>], tri: [usize; 3]) -> u8 {
    let mut best = 0usize;
    let mut best_len = (vertices[tri[1]] - vertices[tri[2]]).norm();
    for i in 1..3 {
        let len = (vertices[tri[(i + 1) % 3]] - vertices[tri[(i + 2) % 3]]).norm();
        let tol = 1e-12 * len.max(best_len);
        let better = if (len - best_len).abs() <= tol {
            tri[i] < tri[best]
        } else {
            len > best_len
        };
        if better {
            best = i;
            best_len = len;
        }
    }
    best as u8
}

/// Structured triangulation of `[xmin, xmax] x [ymin, ymax]` with `nx * ny`
/// cells, each split along its lower-left to upper-right diagonal.
pub fn build_rect_mesh(
    xmin: f64,
    xmax: f64,
    ymin: f64,
    ymax: f64,
    nx: usize,
    ny: usize,
) -> Result<Mesh> {
    if !(xmax > xmin) || !(ymax > ymin) || !xmin.is_finite() || !xmax.is_finite() {
        return Err(Error::InvalidDomain(format!(
            "[{xmin}, {xmax}] x [{ymin}, {ymax}]"
        )));
    }
    if !ymin.is_finite() || !ymax.is_finite() {
        return Err(Error::InvalidDomain("non-finite bounds".into()));
    }
    if nx == 0 || ny == 0 {
        return Err(Error::InvalidDomain(format!("cell counts {nx} x {ny}")));
    }
    let mut vertices = Vec::with_capacity((nx + 1) * (ny + 1));
    for j in 0..=ny {
        for i in 0..=nx {
            let x = if i == nx { xmax } else { xmin + (xmax - xmin) * i as f64 / nx as f64 };
            let y = if j == ny { ymax } else { ymin + (ymax - ymin) * j as f64 / ny as f64 };
            vertices.push(Point2::new(x, y));
        }
    }
    let idx = |i: usize, j: usize| j * (nx + 1) + i;
    let mut elements = Vec::with_capacity(2 * nx * ny);
    for j in 0..ny {
        for i in 0..nx {
            let (p00, p10, p11, p01) = (idx(i, j), idx(i + 1, j), idx(i + 1, j + 1), idx(i, j + 1));
            for tri in [[p00, p10, p11], [p00, p11, p01]] {
                elements.push(Element {
                    vertices: tri,
                    refinement_edge: longest_edge(&vertices, tri),
                    generation: 0,
                    boundary: [false; 3],
                });
            }
        }
    }
    let on_side = |a: &Point2<f64>, b: &Point2<f64>| {
        (a.x == xmin && b.x == xmin)
            || (a.x == xmax && b.x == xmax)
            || (a.y == ymin && b.y == ymin)
            || (a.y == ymax && b.y == ymax)
    };
    for el in &mut elements {
        for i in 0..3 {
            let (a, b) = el.edge(i);
            el.boundary[i] = on_side(&vertices[a], &vertices[b]);
        }
    }
    Ok(Mesh { vertices, elements })
}

impl Mesh {
    pub fn num_elements(&self) -> usize {
        self.elements.len()
    }

    pub fn num_vertices(&self) -> usize {
        self.vertices.len()
    }

    pub fn geometry(&self, t: usize) -> ElementGeometry {
        let el = &self.elements[t];
        let vertices = el.vertices.map(|v| self.vertices[v]);
        let area = signed_area(&vertices[0], &vertices[1], &vertices[2]);
        let mut normals = [Vector2::zeros(); 3];
        let mut edge_lengths = [0.0; 3];
        for i in 0..3 {
            let d = vertices[(i + 2) % 3] - vertices[(i + 1) % 3];
            let len = d.norm();
            edge_lengths[i] = len;
            // counter-clockwise orientation: the outward normal is d rotated clockwise
            normals[i] = Vector2::new(d.y, -d.x) / len;
        }
        let h = edge_lengths.iter().copied().fold(0.0, f64::max);
        ElementGeometry {
            h,
            area,
            vertices,
            normals,
            edge_lengths,
        }
    }

    /// Geometry with element id validation.
    pub fn geometry_of(&self, t: usize) -> Result<ElementGeometry> {
        if t >= self.elements.len() {
            return Err(Error::InvalidMesh(format!("element id {t} out of range")));
        }
        Ok(self.geometry(t))
    }

    pub fn total_area(&self) -> f64 {
        (0..self.num_elements()).map(|t| self.geometry(t).area).sum()
    }

    pub fn h_min(&self) -> f64 {
        (0..self.num_elements())
            .map(|t| self.geometry(t).h)
            .fold(f64::INFINITY, f64::min)
    }

    /// Smallest interior angle over all elements, in radians.
    pub fn min_angle(&self) -> f64 {
        let mut min = f64::INFINITY;
        for t in 0..self.num_elements() {
            let g = self.geometry(t);
            for i in 0..3 {
                let a = g.vertices[i];
                let u = g.vertices[(i + 1) % 3] - a;
                let v = g.vertices[(i + 2) % 3] - a;
                let cos = u.dot(&v) / (u.norm() * v.norm());
                min = min.min(cos.clamp(-1.0, 1.0).acos());
            }
        }
        min
    }

    pub fn bounding_box(&self) -> [f64; 4] {
        let mut bb = [f64::INFINITY, f64::NEG_INFINITY, f64::INFINITY, f64::NEG_INFINITY];
        for p in &self.vertices {
            bb[0] = bb[0].min(p.x);
            bb[1] = bb[1].max(p.x);
            bb[2] = bb[2].min(p.y);
            bb[3] = bb[3].max(p.y);
        }
        bb
    }

    /// Checks the element-local invariants: index ranges, positive area,
    /// valid refinement edges and boundary marks lying on the bounding box.
    pub fn validate(&self) -> Result<()> {
        let nv = self.vertices.len();
        if self.vertices.iter().any(|p| !p.x.is_finite() || !p.y.is_finite()) {
            return Err(Error::InvalidMesh("non-finite vertex coordinate".into()));
        }
        let [xmin, xmax, ymin, ymax] = self.bounding_box();
        let scale = (xmax - xmin).abs().max((ymax - ymin).abs()).max(1.0);
        let on_bb = |p: &Point2<f64>| {
            let tol = 1e-12 * scale;
            (p.x - xmin).abs() <= tol
                || (p.x - xmax).abs() <= tol
                || (p.y - ymin).abs() <= tol
                || (p.y - ymax).abs() <= tol
        };
        for (t, el) in self.elements.iter().enumerate() {
            if el.vertices.iter().any(|&v| v >= nv) {
                return Err(Error::InvalidMesh(format!("element {t} references a missing vertex")));
            }
            let [a, b, c] = el.vertices;
            if a == b || b == c || a == c {
                return Err(Error::InvalidMesh(format!("element {t} repeats a vertex")));
            }
            if el.refinement_edge > 2 {
                return Err(Error::InvalidMesh(format!("element {t} has refinement edge {}", el.refinement_edge)));
            }
            let area = signed_area(&self.vertices[a], &self.vertices[b], &self.vertices[c]);
            if !(area > 0.0) {
                return Err(Error::InvalidMesh(format!("element {t} has non-positive area {area:e}")));
            }
            for i in 0..3 {
                let (p, q) = el.edge(i);
                if el.boundary[i] && !(on_bb(&self.vertices[p]) && on_bb(&self.vertices[q])) {
                    return Err(Error::InvalidMesh(format!(
                        "element {t} marks interior edge {i} as boundary"
                    )));
                }
            }
        }
        Ok(())
    }

    /// Newest-vertex bisection of the marked elements with conforming closure.
    pub fn refine_nvb<I>(&self, marked: I) -> Result<Mesh>
    where
        I: IntoIterator<Item = usize>,
    {
        let mut seeds = Vec::new();
        for t in marked {
            if t >= self.elements.len() {
                return Err(Error::InvalidMesh(format!("marked element {t} out of range")));
            }
            seeds.push(t);
        }
        if seeds.is_empty() {
            return Ok(self.clone());
        }

        let mut edge_elements: HashMap<(usize, usize), Vec<usize>> = HashMap::new();
        for (t, el) in self.elements.iter().enumerate() {
            for i in 0..3 {
                let (a, b) = el.edge(i);
                edge_elements.entry(edge_key(a, b)).or_default().push(t);
            }
        }
        let ref_edge = |t: usize| {
            let el = &self.elements[t];
            let (a, b) = el.edge(el.refinement_edge as usize);
            edge_key(a, b)
        };

        // closure: an element with any marked edge must have its refinement edge marked
        let mut marked_edges = HashSet::new();
        let mut stack = Vec::new();
        for &t in &seeds {
            let e = ref_edge(t);
            if marked_edges.insert(e) {
                stack.push(e);
            }
        }
        let mut steps = 0usize;
        while let Some(e) = stack.pop() {
            steps += 1;
            if steps > MAX_BISECTIONS {
                return Err(Error::RefinementCap(MAX_BISECTIONS));
            }
            for &t in &edge_elements[&e] {
                let r = ref_edge(t);
                if marked_edges.insert(r) {
                    stack.push(r);
                }
            }
        }

        let mut vertices = self.vertices.clone();
        let mut midpoints: HashMap<(usize, usize), usize> = HashMap::new();
        let mut elements = Vec::with_capacity(self.elements.len() + 2 * marked_edges.len());
        let mut pending = Vec::new();
        for el in &self.elements {
            pending.push(el.clone());
            while let Some(el) = pending.pop() {
                let k = el.refinement_edge as usize;
                let (b, c) = el.edge(k);
                if !marked_edges.contains(&edge_key(b, c)) {
                    elements.push(el);
                    continue;
                }
                let a = el.vertices[k];
                let m = *midpoints.entry(edge_key(b, c)).or_insert_with(|| {
                    vertices.push(Point2::from((vertices[b].coords + vertices[c].coords) * 0.5));
                    vertices.len() - 1
                });
                let half = el.boundary[k];
                let left = Element {
                    vertices: [a, b, m],
                    refinement_edge: 2,
                    generation: el.generation + 1,
                    boundary: [half, false, el.boundary[(k + 2) % 3]],
                };
                let right = Element {
                    vertices: [a, m, c],
                    refinement_edge: 1,
                    generation: el.generation + 1,
                    boundary: [half, el.boundary[(k + 1) % 3], false],
                };
                // stack order keeps the left child first in the output
                pending.push(right);
                pending.push(left);
            }
        }
        Ok(Mesh { vertices, elements })
    }

    /// Bisects every element once (plus closure).
    pub fn refine_uniform(&self) -> Result<Mesh> {
        self.refine_nvb(0..self.num_elements())
    }

    /// Line-oriented text form used for golden files.
    pub fn to_text(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(s, "vertices: {}", self.vertices.len());
        for p in &self.vertices {
            let _ = writeln!(s, "{:?} {:?}", p.x, p.y);
        }
        let _ = writeln!(s, "elements: {}", self.elements.len());
        for el in &self.elements {
            let [a, b, c] = el.vertices;
            let [b0, b1, b2] = el.boundary.map(u8::from);
            let _ = writeln!(
                s,
                "{a} {b} {c} {} {} {b0} {b1} {b2}",
                el.refinement_edge, el.generation
            );
        }
        s
    }

    /// Parses the text form written by [`Mesh::to_text`] and validates it.
    pub fn from_text(text: &str) -> Result<Mesh> {
        let mut lines = text
            .lines()
            .enumerate()
            .map(|(i, l)| (i + 1, l.trim()))
            .filter(|(_, l)| !l.is_empty() && !l.starts_with('#'));

        let header = |lines: &mut dyn Iterator<Item = (usize, &str)>, key: &str| -> Result<usize> {
            let (n, line) = lines
                .next()
                .ok_or_else(|| Error::parse(0, format!("missing `{key}` header")))?;
            let rest = line
                .strip_prefix(key)
                .ok_or_else(|| Error::parse(n, format!("expected `{key}`")))?;
            rest.trim()
                .parse::<usize>()
                .map_err(|e| Error::parse(n, format!("bad count: {e}")))
        };

        let nv = header(&mut lines, "vertices:")?;
        let mut vertices = Vec::with_capacity(nv.min(1 << 20));
        for _ in 0..nv {
            let (n, line) = lines
                .next()
                .ok_or_else(|| Error::parse(0, "truncated vertex list"))?;
            let xs: Vec<f64> = line
                .split_whitespace()
                .map(str::parse)
                .collect::<Result<_, _>>()
                .map_err(|e| Error::parse(n, format!("bad coordinate: {e}")))?;
            if xs.len() != 2 {
                return Err(Error::parse(n, "expected two coordinates"));
            }
            vertices.push(Point2::new(xs[0], xs[1]));
        }

        let ne = header(&mut lines, "elements:")?;
        let mut elements = Vec::with_capacity(ne.min(1 << 20));
        for _ in 0..ne {
            let (n, line) = lines
                .next()
                .ok_or_else(|| Error::parse(0, "truncated element list"))?;
            let f: Vec<u64> = line
                .split_whitespace()
                .map(str::parse)
                .collect::<Result<_, _>>()
                .map_err(|e| Error::parse(n, format!("bad integer: {e}")))?;
            if f.len() != 8 {
                return Err(Error::parse(n, "expected 8 fields per element"));
            }
            if f[3] > 2 || f[5..].iter().any(|&b| b > 1) || f[4] > u32::MAX as u64 {
                return Err(Error::parse(n, "field out of range"));
            }
            let idx = |v: u64| usize::try_from(v).map_err(|_| Error::parse(n, "index overflow"));
            elements.push(Element {
                vertices: [idx(f[0])?, idx(f[1])?, idx(f[2])?],
                refinement_edge: f[3] as u8,
                generation: f[4] as u32,
                boundary: [f[5] == 1, f[6] == 1, f[7] == 1],
            });
        }
        if let Some((n, _)) = lines.next() {
            return Err(Error::parse(n, "trailing content"));
        }
        let mesh = Mesh { vertices, elements };
        mesh.validate()?;
        Ok(mesh)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn unit_square() -> Mesh {
        build_rect_mesh(0.0, 1.0, 0.0, 1.0, 1, 1).unwrap()
    }

    #[test]
    fn unit_square_counts() {
        let m = unit_square();
        assert_eq!(m.num_vertices(), 4);
        assert_eq!(m.num_elements(), 2);
        m.validate().unwrap();
        // the shared diagonal is the refinement edge of both triangles
        let keys: Vec<_> = m
            .elements
            .iter()
            .map(|e| {
                let (a, b) = e.edge(e.refinement_edge as usize);
                edge_key(a, b)
            })
            .collect();
        assert_eq!(keys[0], keys[1]);
        assert_eq!(keys[0], (0, 3));
    }

    #[test]
    fn example_domains() {
        let m = build_rect_mesh(-1.5, 1.5, -1.5, 1.5, 4, 4).unwrap();
        assert_eq!(m.num_elements(), 32);
        assert!((m.total_area() - 9.0).abs() < 1e-12);
        let m = build_rect_mesh(-2.0, 2.0, -1.0, 1.0, 4, 2).unwrap();
        assert_eq!(m.num_elements(), 16);
        assert!((m.total_area() - 8.0).abs() < 1e-12);
    }

    #[test]
    fn degenerate_rectangles_rejected() {
        assert!(matches!(build_rect_mesh(1.0, 1.0, 0.0, 1.0, 1, 1), Err(Error::InvalidDomain(_))));
        assert!(matches!(build_rect_mesh(0.0, 1.0, 2.0, 1.0, 1, 1), Err(Error::InvalidDomain(_))));
        assert!(matches!(build_rect_mesh(0.0, 1.0, 0.0, 1.0, 0, 1), Err(Error::InvalidDomain(_))));
        assert!(build_rect_mesh(0.0, f64::NAN, 0.0, 1.0, 1, 1).is_err());
    }

    #[test]
    fn geometry_of_reference_and_equilateral() {
        let m = Mesh {
            vertices: vec![
                Point2::new(0.0, 0.0),
                Point2::new(1.0, 0.0),
                Point2::new(0.0, 1.0),
                Point2::new(2.0, 0.0),
                Point2::new(3.0, 0.0),
                Point2::new(2.5, 3f64.sqrt() / 2.0),
            ],
            elements: vec![
                Element { vertices: [0, 1, 2], refinement_edge: 0, generation: 0, boundary: [true; 3] },
                Element { vertices: [3, 4, 5], refinement_edge: 0, generation: 0, boundary: [false; 3] },
            ],
        };
        let g = m.geometry_of(0).unwrap();
        assert!((g.h - 2f64.sqrt()).abs() < 1e-15);
        assert!((g.area - 0.5).abs() < 1e-15);
        let g = m.geometry_of(1).unwrap();
        assert!((g.h - 1.0).abs() < 1e-15);
        assert!((g.area - 3f64.sqrt() / 4.0).abs() < 1e-15);
        assert!(m.geometry_of(2).is_err());
        for t in 0..2 {
            let g = m.geometry(t);
            let c = g.centroid();
            for i in 0..3 {
                let (a, b) = (g.vertices[(i + 1) % 3], g.vertices[(i + 2) % 3]);
                let mid = Point2::from((a.coords + b.coords) * 0.5);
                assert!(g.normals[i].dot(&(c - mid)) < 0.0);
                assert!((g.normals[i].norm() - 1.0).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn barycentric_roundtrip() {
        let m = build_rect_mesh(-1.0, 2.0, 0.5, 1.0, 3, 2).unwrap();
        for t in 0..m.num_elements() {
            let g = m.geometry(t);
            let lam = [0.2, 0.3, 0.5];
            let p = g.point(lam);
            let back = g.barycentric(&p);
            for i in 0..3 {
                assert!((back[i] - lam[i]).abs() < 1e-12);
            }
            let grads = g.barycentric_gradients();
            let sum = grads[0] + grads[1] + grads[2];
            assert!(sum.norm() < 1e-12);
            // grad(lambda_1) . (v1 - v0) = 1
            assert!((grads[1].dot(&(g.vertices[1] - g.vertices[0])) - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn bisecting_shared_diagonal_splits_both() {
        let m = unit_square();
        let r = m.refine_nvb([0]).unwrap();
        assert_eq!(r.num_elements(), 4);
        assert_eq!(r.num_vertices(), 5);
        assert_eq!(r.vertices[4], Point2::new(0.5, 0.5));
        r.validate().unwrap();
        for el in &r.elements {
            assert_eq!(el.generation, 1);
            // the new vertex is the newest vertex of every child
            assert_eq!(el.vertices[el.refinement_edge as usize], 4);
        }
        assert!((r.total_area() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn empty_marking_is_identity() {
        let m = unit_square();
        assert_eq!(m.refine_nvb(std::iter::empty()).unwrap(), m);
    }

    #[test]
    fn marking_out_of_range_fails() {
        assert!(unit_square().refine_nvb([7]).is_err());
    }

    #[test]
    fn children_follow_newest_vertex_rule() {
        let m = build_rect_mesh(0.0, 1.0, 0.0, 1.0, 2, 2).unwrap();
        let r = m.refine_nvb([3]).unwrap();
        let nv_old = m.num_vertices();
        for el in &r.elements {
            if el.generation == 1 {
                let newest = el.vertices[el.refinement_edge as usize];
                assert!(newest >= nv_old, "refinement edge must face the new vertex");
            }
        }
    }

    #[test]
    fn uniform_refinement_of_32_elements() {
        let m = build_rect_mesh(-1.5, 1.5, -1.5, 1.5, 4, 4).unwrap();
        let r = m.refine_uniform().unwrap();
        assert!((64..=96).contains(&r.num_elements()), "{}", r.num_elements());
        assert!((r.total_area() - 9.0).abs() < 1e-12);
        r.validate().unwrap();
    }

    #[test]
    fn text_roundtrip_and_rejections() {
        let m = build_rect_mesh(0.0, 1.0, 0.0, 1.0, 2, 1).unwrap().refine_nvb([1]).unwrap();
        let text = m.to_text();
        assert!(text.starts_with("vertices: "));
        assert_eq!(Mesh::from_text(&text).unwrap(), m);

        assert!(Mesh::from_text("").is_err());
        assert!(Mesh::from_text("vertices: 1\n0 0\nelements: 0\nextra").is_err());
        // clockwise triangle
        let cw = "vertices: 3\n0 0\n0 1\n1 0\nelements: 1\n0 1 2 0 0 0 0 0\n";
        assert!(matches!(Mesh::from_text(cw), Err(Error::InvalidMesh(_))));
        let bad_ref = "vertices: 3\n0 0\n1 0\n0 1\nelements: 1\n0 1 2 3 0 0 0 0\n";
        assert!(Mesh::from_text(bad_ref).is_err());
        let ok = "vertices: 3\n0 0\n1 0\n0 1\nelements: 1\n0 1 2 0 0 1 1 1\n";
        assert_eq!(Mesh::from_text(ok).unwrap().num_elements(), 1);
    }
}
