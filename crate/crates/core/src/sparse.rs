//! Compressed sparse row storage and the bridge to the sparse LU backend.

use faer::linalg::solvers::Solve;
use faer::sparse::linalg::solvers::{Lu, SymbolicLu};
use faer::sparse::{SparseColMat, Triplet};
use faer::Mat;

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct CsrMatrix {
    pub nrows: usize,
    pub ncols: usize,
    pub row_ptr: Vec<usize>,
    pub col_idx: Vec<usize>,
    pub values: Vec<f64>,
}

impl CsrMatrix {
    /// Builds the matrix from unordered triplets, summing duplicates in a
    /// fixed order so that the result does not depend on insertion order
    /// beyond the triplet sequence itself.
    pub fn from_triplets(nrows: usize, ncols: usize, mut triplets: Vec<(usize, usize, f64)>) -> CsrMatrix {
        // stable sort keeps the summation order of duplicates deterministic
        triplets.sort_by_key(|&(r, c, _)| (r, c));
        let mut row_ptr = vec![0usize; nrows + 1];
        let mut col_idx = Vec::with_capacity(triplets.len());
        let mut values: Vec<f64> = Vec::with_capacity(triplets.len());
        let mut last: Option<(usize, usize)> = None;
        for (r, c, v) in triplets {
            assert!(r < nrows && c < ncols, "triplet ({r}, {c}) out of bounds");
            if last == Some((r, c)) {
                *values.last_mut().unwrap() += v;
            } else {
                col_idx.push(c);
                values.push(v);
                row_ptr[r + 1] += 1;
                last = Some((r, c));
            }
        }
        for r in 0..nrows {
            row_ptr[r + 1] += row_ptr[r];
        }
        CsrMatrix {
            nrows,
            ncols,
            row_ptr,
            col_idx,
            values,
        }
    }

    pub fn nnz(&self) -> usize {
        self.values.len()
    }

    pub fn row(&self, r: usize) -> impl Iterator<Item = (usize, f64)> + '_ {
        let range = self.row_ptr[r]..self.row_ptr[r + 1];
        self.col_idx[range.clone()].iter().copied().zip(self.values[range].iter().copied())
    }

    pub fn get(&self, r: usize, c: usize) -> f64 {
        let range = self.row_ptr[r]..self.row_ptr[r + 1];
        match self.col_idx[range.clone()].binary_search(&c) {
            Ok(k) => self.values[range.start + k],
            Err(_) => 0.0,
        }
    }

    pub fn matvec(&self, x: &[f64]) -> Vec<f64> {
        assert_eq!(x.len(), self.ncols);
        (0..self.nrows)
            .map(|r| self.row(r).map(|(c, v)| v * x[c]).sum())
            .collect()
    }

    /// `A^T y`.
    pub fn matvec_transpose(&self, y: &[f64]) -> Vec<f64> {
        assert_eq!(y.len(), self.nrows);
        let mut out = vec![0.0; self.ncols];
        for (r, &yr) in y.iter().enumerate() {
            if yr != 0.0 {
                for (c, v) in self.row(r) {
                    out[c] += v * yr;
                }
            }
        }
        out
    }

    pub fn transpose(&self) -> CsrMatrix {
        let mut t = Vec::with_capacity(self.nnz());
        for r in 0..self.nrows {
            for (c, v) in self.row(r) {
                t.push((c, r, v));
            }
        }
        CsrMatrix::from_triplets(self.ncols, self.nrows, t)
    }

    pub fn triplets(&self) -> impl Iterator<Item = (usize, usize, f64)> + '_ {
        (0..self.nrows).flat_map(move |r| self.row(r).map(move |(c, v)| (r, c, v)))
    }

    /// Largest `|A_ij - A_ji|` relative to the largest entry.
    pub fn asymmetry(&self) -> f64 {
        let scale = self.values.iter().fold(0.0f64, |m, v| m.max(v.abs())).max(f64::MIN_POSITIVE);
        self.triplets()
            .map(|(r, c, v)| (v - self.get(c, r)).abs())
            .fold(0.0, f64::max)
            / scale
    }

    pub fn to_dense(&self) -> Vec<Vec<f64>> {
        let mut d = vec![vec![0.0; self.ncols]; self.nrows];
        for (r, c, v) in self.triplets() {
            d[r][c] = v;
        }
        d
    }
}

pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Sparse LU that keeps its symbolic analysis so that matrices sharing a
/// sparsity pattern can be refactorised cheaply.
pub struct LuSolver {
    nrows: usize,
    pattern: Vec<(usize, usize)>,
    symbolic: SymbolicLu<usize>,
}

impl LuSolver {
    /// Analyses the pattern of `entries` (explicit zeros count as structural).
    pub fn analyze(n: usize, entries: &[(usize, usize, f64)]) -> Result<LuSolver> {
        let mat = to_faer(n, entries)?;
        let symbolic = SymbolicLu::try_new(mat.symbolic()).map_err(|e| Error::LinearSolver(format!("{e:?}")))?;
        Ok(LuSolver {
            nrows: n,
            pattern: entries.iter().map(|&(r, c, _)| (r, c)).collect(),
            symbolic,
        })
    }

    /// Numeric factorisation of a matrix with the analysed pattern.
    pub fn factor(&self, entries: &[(usize, usize, f64)]) -> Result<LuFactor> {
        debug_assert!(entries.len() == self.pattern.len());
        debug_assert!(entries.iter().zip(&self.pattern).all(|(e, p)| (e.0, e.1) == *p));
        let mat = to_faer(self.nrows, entries)?;
        let lu = Lu::try_new_with_symbolic(self.symbolic.clone(), mat.as_ref())
            .map_err(|e| Error::LinearSolver(format!("{e:?}")))?;
        Ok(LuFactor { n: self.nrows, lu })
    }

    /// Factorises a matrix with the analysed pattern and solves for `rhs`.
    pub fn solve(&self, entries: &[(usize, usize, f64)], rhs: &[f64]) -> Result<Vec<f64>> {
        self.factor(entries)?.solve(rhs)
    }
}

pub struct LuFactor {
    n: usize,
    lu: Lu<usize, f64>,
}

impl LuFactor {
    pub fn solve(&self, rhs: &[f64]) -> Result<Vec<f64>> {
        let b = Mat::from_fn(self.n, 1, |i, _| rhs[i]);
        let x = self.lu.solve(&b);
        let out: Vec<f64> = (0..self.n).map(|i| x[(i, 0)]).collect();
        if out.iter().any(|v| !v.is_finite()) {
            return Err(Error::LinearSolver("singular system".into()));
        }
        Ok(out)
    }

    /// Solve followed by `steps` rounds of iterative refinement against the
    /// triplet matrix `entries`.
    pub fn solve_refined(&self, entries: &[(usize, usize, f64)], rhs: &[f64], steps: usize) -> Result<Vec<f64>> {
        let mut x = self.solve(rhs)?;
        for _ in 0..steps {
            let mut r = rhs.to_vec();
            for &(i, j, v) in entries {
                r[i] -= v * x[j];
            }
            let dx = self.solve(&r)?;
            for (xi, d) in x.iter_mut().zip(dx) {
                *xi += d;
            }
        }
        Ok(x)
    }
}

fn to_faer(n: usize, entries: &[(usize, usize, f64)]) -> Result<SparseColMat<usize, f64>> {
    let trip: Vec<Triplet<usize, usize, f64>> = entries.iter().map(|&(r, c, v)| Triplet::new(r, c, v)).collect();
    SparseColMat::try_new_from_triplets(n, n, &trip).map_err(|e| Error::LinearSolver(format!("{e:?}")))
}

/// One-shot sparse solve of `A x = b`.
pub fn solve(a: &CsrMatrix, b: &[f64]) -> Result<Vec<f64>> {
    let entries: Vec<_> = a.triplets().collect();
    LuSolver::analyze(a.nrows, &entries)?.solve(&entries, b)
}
