//! Edge and vertex-patch index derived from a [`Mesh`].

use std::collections::HashMap;

use nalgebra::{Point2, Vector2};

use crate::error::{Error, Result};
use crate::mesh::Mesh;

#[derive(Debug, Clone)]
pub struct Edge {
    /// Endpoints, smaller global index first.
    pub vertices: [usize; 2],
    /// Adjacent elements, ascending. Both entries coincide on the boundary.
    pub elements: [usize; 2],
    pub interior: bool,
    /// Local edge index of the edge inside each adjacent element.
    pub local: [usize; 2],
    /// Unit normal pointing out of `elements[0]`.
    pub normal: Vector2<f64>,
    pub length: f64,
}

impl Edge {
    pub fn midpoint(&self, mesh: &Mesh) -> Point2<f64> {
        let [a, b] = self.vertices;
        Point2::from((mesh.vertices[a].coords + mesh.vertices[b].coords) * 0.5)
    }

    /// Point at parameter `s` in `[0, 1]` along the edge, from `vertices[0]`.
    pub fn point(&self, mesh: &Mesh, s: f64) -> Point2<f64> {
        let [a, b] = self.vertices;
        Point2::from(mesh.vertices[a].coords * (1.0 - s) + mesh.vertices[b].coords * s)
    }

    pub fn neighbor(&self) -> Option<usize> {
        self.interior.then_some(self.elements[1])
    }
}

#[derive(Debug, Clone)]
pub struct Topology {
    pub edges: Vec<Edge>,
    /// `element_edges[t][i]` is the global edge of local edge `i` of element `t`.
    pub element_edges: Vec<[usize; 3]>,
    /// Elements sharing each vertex.
    pub vertex_patches: Vec<Vec<usize>>,
}

impl Topology {
    /// Builds the edge index, failing on edges shared by more than two
    /// elements or unshared edges not marked as boundary.
    pub fn build(mesh: &Mesh) -> Result<Topology> {
        let mut index: HashMap<(usize, usize), usize> = HashMap::new();
        let mut raw: Vec<(usize, usize, Vec<(usize, usize)>)> = Vec::new();
        let mut element_edges = vec![[0usize; 3]; mesh.num_elements()];
        for (t, el) in mesh.elements.iter().enumerate() {
            for i in 0..3 {
                let (a, b) = el.edge(i);
                let key = (a.min(b), a.max(b));
                let id = *index.entry(key).or_insert_with(|| {
                    raw.push((key.0, key.1, Vec::with_capacity(2)));
                    raw.len() - 1
                });
                raw[id].2.push((t, i));
                element_edges[t][i] = id;
            }
        }

        let mut edges = Vec::with_capacity(raw.len());
        for (a, b, adj) in raw {
            let length = (mesh.vertices[a] - mesh.vertices[b]).norm();
            match adj.as_slice() {
                &[(t, i)] => {
                    if !mesh.elements[t].boundary[i] {
                        return Err(Error::Topology(a, b, "unshared edge not on the boundary".into()));
                    }
                    edges.push(Edge {
                        vertices: [a, b],
                        elements: [t, t],
                        interior: false,
                        local: [i, i],
                        normal: mesh.geometry(t).normals[i],
                        length,
                    });
                }
                &[(t0, i0), (t1, i1)] => {
                    if mesh.elements[t0].boundary[i0] || mesh.elements[t1].boundary[i1] {
                        return Err(Error::Topology(a, b, "shared edge marked as boundary".into()));
                    }
                    let ((t0, i0), (t1, i1)) = if t0 < t1 { ((t0, i0), (t1, i1)) } else { ((t1, i1), (t0, i0)) };
                    if t0 == t1 {
                        return Err(Error::Topology(a, b, "element adjacent to itself".into()));
                    }
                    edges.push(Edge {
                        vertices: [a, b],
                        elements: [t0, t1],
                        interior: true,
                        local: [i0, i1],
                        normal: mesh.geometry(t0).normals[i0],
                        length,
                    });
                }
                _ => {
                    return Err(Error::Topology(a, b, format!("shared by {} elements", adj.len())));
                }
            }
        }

        let mut vertex_patches = vec![Vec::new(); mesh.num_vertices()];
        for (t, el) in mesh.elements.iter().enumerate() {
            for &v in &el.vertices {
                vertex_patches[v].push(t);
            }
        }
        Ok(Topology {
            edges,
            element_edges,
            vertex_patches,
        })
    }

    pub fn num_interior(&self) -> usize {
        self.edges.iter().filter(|e| e.interior).count()
    }

    pub fn num_boundary(&self) -> usize {
        self.edges.len() - self.num_interior()
    }

    /// Element sharing local edge `i` of `t`, if any.
    pub fn neighbor(&self, t: usize, i: usize) -> Option<usize> {
        let e = &self.edges[self.element_edges[t][i]];
        if !e.interior {
            None
        } else if e.elements[0] == t {
            Some(e.elements[1])
        } else {
            Some(e.elements[0])
        }
    }
}
