//! Legacy ASCII VTK unstructured grids (triangles, cell type 5).

use std::fmt::Write as _;

use crate::error::{Error, Result};
use crate::mesh::Mesh;

#[derive(Debug, Clone, PartialEq, Default)]
pub struct VtkGrid {
    pub points: Vec<[f64; 3]>,
    pub cells: Vec<[usize; 3]>,
    /// Named per-cell scalar arrays.
    pub cell_scalars: Vec<(String, Vec<f64>)>,
}

impl VtkGrid {
    pub fn from_mesh(mesh: &Mesh) -> VtkGrid {
        VtkGrid {
            points: mesh.vertices.iter().map(|p| [p.x, p.y, 0.0]).collect(),
            cells: mesh.elements.iter().map(|e| e.vertices).collect(),
            cell_scalars: Vec::new(),
        }
    }

    pub fn with_scalar(mut self, name: &str, values: Vec<f64>) -> VtkGrid {
        self.cell_scalars.push((name.to_string(), values));
        self
    }

    pub fn to_vtk(&self, title: &str) -> String {
        let mut s = String::new();
        let title: String = title.chars().filter(|c| *c != '\n').take(255).collect();
        let _ = writeln!(s, "# vtk DataFile Version 3.0\n{title}\nASCII\nDATASET UNSTRUCTURED_GRID");
        let _ = writeln!(s, "POINTS {} double", self.points.len());
        for p in &self.points {
            let _ = writeln!(s, "{:e} {:e} {:e}", p[0], p[1], p[2]);
        }
        let _ = writeln!(s, "CELLS {} {}", self.cells.len(), 4 * self.cells.len());
        for c in &self.cells {
            let _ = writeln!(s, "3 {} {} {}", c[0], c[1], c[2]);
        }
        let _ = writeln!(s, "CELL_TYPES {}", self.cells.len());
        for _ in &self.cells {
            let _ = writeln!(s, "5");
        }
        if !self.cell_scalars.is_empty() {
            let _ = writeln!(s, "CELL_DATA {}", self.cells.len());
            for (name, vals) in &self.cell_scalars {
                let _ = writeln!(s, "SCALARS {name} double 1\nLOOKUP_TABLE default");
                for v in vals {
                    let _ = writeln!(s, "{v:e}");
                }
            }
        }
        s
    }

    /// Parses the subset written by [`VtkGrid::to_vtk`], checking that all
    /// counts are consistent and every cell is a triangle.
    pub fn parse(text: &str) -> Result<VtkGrid> {
        let mut lines = text.lines().enumerate().map(|(i, l)| (i + 1, l.trim()));
        let mut next = |what: &str| -> Result<(usize, &str)> {
            lines.next().ok_or_else(|| Error::parse(0, format!("unexpected end of file, expected {what}")))
        };
        let (n, l) = next("header")?;
        if !l.starts_with("# vtk DataFile Version") {
            return Err(Error::parse(n, "missing vtk header"));
        }
        next("title")?;
        let (n, l) = next("ASCII")?;
        if l != "ASCII" {
            return Err(Error::parse(n, "only ASCII files are supported"));
        }
        let (n, l) = next("DATASET")?;
        if l != "DATASET UNSTRUCTURED_GRID" {
            return Err(Error::parse(n, "expected DATASET UNSTRUCTURED_GRID"));
        }

        let count = |n: usize, l: &str, key: &str, fields: usize| -> Result<Vec<usize>> {
            let parts: Vec<&str> = l.split_whitespace().collect();
            if parts.first() != Some(&key) || parts.len() < fields + 1 {
                return Err(Error::parse(n, format!("expected {key}")));
            }
            parts[1..=fields]
                .iter()
                .map(|p| p.parse::<usize>().map_err(|_| Error::parse(n, format!("bad count in {key}"))))
                .collect()
        };
        let nums = |n: usize, l: &str, k: usize| -> Result<Vec<f64>> {
            let v: Vec<f64> = l
                .split_whitespace()
                .map(|p| p.parse::<f64>().map_err(|_| Error::parse(n, "bad number")))
                .collect::<Result<_>>()?;
            if v.len() != k {
                return Err(Error::parse(n, format!("expected {k} values, found {}", v.len())));
            }
            Ok(v)
        };

        let (n, l) = next("POINTS")?;
        let np = count(n, l, "POINTS", 1)?[0];
        let mut grid = VtkGrid::default();
        for _ in 0..np {
            let (n, l) = next("point")?;
            let v = nums(n, l, 3)?;
            grid.points.push([v[0], v[1], v[2]]);
        }
        let (n, l) = next("CELLS")?;
        let c = count(n, l, "CELLS", 2)?;
        if c[1] != c[0].checked_mul(4).ok_or_else(|| Error::parse(n, "cell count overflow"))? {
            return Err(Error::parse(n, "CELLS size inconsistent with triangles"));
        }
        for _ in 0..c[0] {
            let (n, l) = next("cell")?;
            let v = nums(n, l, 4)?;
            let idx: Vec<usize> = v.iter().map(|&x| x as usize).collect();
            if v.iter().any(|&x| x < 0.0 || x.fract() != 0.0) || idx[0] != 3 || idx[1..].iter().any(|&i| i >= np) {
                return Err(Error::parse(n, "invalid triangle connectivity"));
            }
            grid.cells.push([idx[1], idx[2], idx[3]]);
        }
        let (n, l) = next("CELL_TYPES")?;
        if count(n, l, "CELL_TYPES", 1)?[0] != c[0] {
            return Err(Error::parse(n, "CELL_TYPES count differs from CELLS"));
        }
        for _ in 0..c[0] {
            let (n, l) = next("cell type")?;
            if l != "5" {
                return Err(Error::parse(n, "only triangle cells (type 5) are supported"));
            }
        }
        let Some((n, l)) = lines.next() else {
            return Ok(grid);
        };
        if count(n, l, "CELL_DATA", 1)?[0] != c[0] {
            return Err(Error::parse(n, "CELL_DATA count differs from CELLS"));
        }
        while let Some((n, l)) = lines.next() {
            if l.is_empty() {
                continue;
            }
            let parts: Vec<&str> = l.split_whitespace().collect();
            if parts.len() < 2 || parts[0] != "SCALARS" {
                return Err(Error::parse(n, "expected SCALARS"));
            }
            let name = parts[1].to_string();
            match lines.next() {
                Some((_, "LOOKUP_TABLE default")) => {}
                Some((n, _)) => return Err(Error::parse(n, "expected LOOKUP_TABLE default")),
                None => return Err(Error::parse(n, "missing LOOKUP_TABLE")),
            }
            let mut vals = Vec::with_capacity(c[0]);
            for _ in 0..c[0] {
                let (n, l) = lines.next().ok_or_else(|| Error::parse(n, "truncated scalar array"))?;
                vals.push(nums(n, l, 1)?[0]);
            }
            grid.cell_scalars.push((name, vals));
        }
        Ok(grid)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mesh::build_rect_mesh;

    #[test]
    fn round_trip() {
        let m = build_rect_mesh(-1.0, 1.0, 0.0, 2.0, 3, 2).unwrap();
        let grid = VtkGrid::from_mesh(&m).with_scalar("eta", (0..m.num_elements()).map(|t| t as f64 * 0.1).collect());
        let text = grid.to_vtk("test");
        let back = VtkGrid::parse(&text).unwrap();
        assert_eq!(back, grid);
        assert!(text.contains("CELL_TYPES 12"));
    }

    #[test]
    fn rejects_inconsistent_counts() {
        let m = build_rect_mesh(0.0, 1.0, 0.0, 1.0, 1, 1).unwrap();
        let text = VtkGrid::from_mesh(&m).to_vtk("t");
        assert!(VtkGrid::parse(&text.replace("CELLS 2 8", "CELLS 2 9")).is_err());
        assert!(VtkGrid::parse(&text.replace("CELL_TYPES 2", "CELL_TYPES 3")).is_err());
        assert!(VtkGrid::parse(&text.replace("3 0 1", "3 0 9")).is_err());
        assert!(VtkGrid::parse("").is_err());
    }
}
