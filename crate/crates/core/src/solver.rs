//! Primal-dual active set solver for `min 1/2 u'Au - F'u` subject to
//! `Bu >= c` (and its nonsymmetric VI analogue).
//!
//! Internally the reaction `mu >= 0` satisfies `Au - B'mu = F`. The reported
//! multiplier is `lambda = -mu <= 0`, so `Au + B'lambda = F`.

use std::collections::HashSet;

use rand::{Rng, SeedableRng};

use crate::assembly::ConstraintSystem;
use crate::error::{Error, Result};
use crate::sparse::{dot, CsrMatrix, LuSolver};

#[derive(Debug, Clone, PartialEq)]
pub struct PdasResult {
    pub u: Vec<f64>,
    /// One entry per constraint row, nonpositive.
    pub lambda: Vec<f64>,
    /// Sorted active row ids.
    pub active: Vec<usize>,
    pub iterations: usize,
    pub converged: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub enum InitialSet {
    /// Rows violated by the unconstrained solution.
    Unconstrained,
    Empty,
    All,
    Given(Vec<usize>),
}

#[derive(Debug, Clone, PartialEq)]
pub struct PdasOptions {
    pub c0: f64,
    pub max_iter: usize,
    pub initial: InitialSet,
}

impl Default for PdasOptions {
    fn default() -> Self {
        PdasOptions {
            c0: 1.0,
            max_iter: 200,
            initial: InitialSet::Unconstrained,
        }
    }
}

/// Bordered system `[[A, -B'], [D, E]]` with a pattern independent of the
/// active set: active rows use `D = B_i, E_ii = 0`, inactive rows
/// `D = 0, E_ii = 1`.
struct Kkt {
    n: usize,
    m: usize,
    entries: Vec<(usize, usize, f64)>,
    /// Position in `entries` where each constraint row's `D` block starts,
    /// followed by the `E_ii` entry.
    row_start: Vec<usize>,
    b: CsrMatrix,
    lu: LuSolver,
}

impl Kkt {
    fn new(a: &CsrMatrix, b: &CsrMatrix) -> Result<Kkt> {
        let (n, m) = (a.nrows, b.nrows);
        let mut entries: Vec<(usize, usize, f64)> = a.triplets().collect();
        for (r, c, v) in b.triplets() {
            entries.push((c, n + r, -v));
        }
        let mut row_start = Vec::with_capacity(m);
        for r in 0..m {
            row_start.push(entries.len());
            for (c, _) in b.row(r) {
                entries.push((n + r, c, 0.0));
            }
            entries.push((n + r, n + r, 1.0));
        }
        let lu = LuSolver::analyze(n + m, &entries)?;
        Ok(Kkt {
            n,
            m,
            entries,
            row_start,
            b: b.clone(),
            lu,
        })
    }

    fn solve(&mut self, active: &[bool], f: &[f64], c: &[f64]) -> Result<(Vec<f64>, Vec<f64>)> {
        let mut rhs = f.to_vec();
        rhs.resize(self.n + self.m, 0.0);
        for r in 0..self.m {
            let mut k = self.row_start[r];
            for (_, v) in self.b.row(r) {
                self.entries[k].2 = if active[r] { v } else { 0.0 };
                k += 1;
            }
            self.entries[k].2 = if active[r] { 0.0 } else { 1.0 };
            if active[r] {
                rhs[self.n + r] = c[r];
            }
        }
        let x = self.lu.factor(&self.entries)?.solve_refined(&self.entries, &rhs, 1)?;
        let (u, mu) = x.split_at(self.n);
        Ok((u.to_vec(), mu.to_vec()))
    }
}

fn indices(set: &[bool]) -> Vec<usize> {
    set.iter().enumerate().filter_map(|(i, &a)| a.then_some(i)).collect()
}

/// Solves the discrete variational inequality by the primal-dual active set
/// method. Terminates when the predicted active set equals the current one.
pub fn pdas_solve(a: &CsrMatrix, f: &[f64], k: &ConstraintSystem, opts: &PdasOptions) -> Result<PdasResult> {
    let n = a.nrows;
    let m = k.num_rows();
    if a.ncols != n || f.len() != n || k.b.ncols != n {
        return Err(Error::Config("dimension mismatch between operator, load and constraints".into()));
    }
    let mut kkt = Kkt::new(a, &k.b)?;

    let mut active = vec![false; m];
    match &opts.initial {
        InitialSet::Empty => {}
        InitialSet::All => active.fill(true),
        InitialSet::Given(ids) => {
            for &i in ids {
                if i >= m {
                    return Err(Error::Config(format!("initial active row {i} out of range")));
                }
                active[i] = true;
            }
        }
        InitialSet::Unconstrained => {
            let (u0, _) = kkt.solve(&active, f, &k.c)?;
            for (i, s) in k.slack(&u0).iter().enumerate() {
                active[i] = *s < 0.0;
            }
        }
    }

    let mut visited: HashSet<Vec<bool>> = HashSet::new();
    let mut last = None;
    for it in 1..=opts.max_iter {
        visited.insert(active.clone());
        let (u, mu) = kkt.solve(&active, f, &k.c)?;
        let slack = k.slack(&u);
        let mut next: Vec<bool> = (0..m).map(|i| mu[i] - opts.c0 * slack[i] > 0.0).collect();
        let done = next == active;
        let result = PdasResult {
            lambda: mu.iter().map(|v| -v).collect(),
            u,
            active: indices(&active),
            iterations: it,
            converged: done,
        };
        if done {
            return Ok(result);
        }
        if visited.contains(&next) {
            // revisit: move only the largest-index differing row
            let j = (0..m).rev().find(|&i| next[i] != active[i]).unwrap();
            next = active.clone();
            next[j] = !next[j];
        }
        active = next;
        last = Some(result);
    }
    Err(Error::NotConverged {
        iterations: opts.max_iter,
        last_iterate: Box::new(last.expect("max_iter is at least one")),
    })
}

/// Checks the discrete VI `(Au, v - u) >= (F, v - u)` on random feasible
/// probes `v` and returns the largest violation `(F - Au, v - u)`.
///
/// Probes are `u` plus a random perturbation, made feasible by shifting each
/// element's constrained coefficients by its largest row deficit (constraint
/// rows sum to one and rows of different elements are disjoint). Each
/// perturbation is also tried with the opposite sign.
pub fn vi_residual_check(
    a: &CsrMatrix,
    f: &[f64],
    k: &ConstraintSystem,
    u: &[f64],
    probes: usize,
    seed: u64,
) -> Result<f64> {
    let tol = 1e-10 * f.iter().fold(1.0f64, |s, v| s.max(v.abs()));
    if let Some((row, &s)) = k.slack(u).iter().enumerate().find(|(_, s)| **s < -tol) {
        return Err(Error::Infeasible { row, violation: -s });
    }
    if probes == 0 {
        return Ok(0.0);
    }
    let n = u.len();
    let mut residual = a.matvec(u);
    for (r, fi) in residual.iter_mut().zip(f) {
        *r = fi - *r;
    }
    let ne = k.row_element.iter().copied().max().map_or(0, |t| t + 1);
    let mut element_cols: Vec<Vec<usize>> = vec![Vec::new(); ne];
    let mut element_rows: Vec<Vec<usize>> = vec![Vec::new(); ne];
    for r in 0..k.num_rows() {
        let t = k.row_element[r];
        element_rows[t].push(r);
        for (c, _) in k.b.row(r) {
            if !element_cols[t].contains(&c) {
                element_cols[t].push(c);
            }
        }
    }
    let scale = u.iter().fold(1.0f64, |s, v| s.max(v.abs()));
    let mut rng = rand::rngs::StdRng::seed_from_u64(seed);
    let mut worst = f64::NEG_INFINITY;
    for _ in 0..probes {
        let base: Vec<f64> = (0..n).map(|_| scale * rng.random_range(-1.0..1.0)).collect();
        let dirs = [base.clone(), base.iter().map(|v| -v).collect()];
        for d in dirs {
            let mut v: Vec<f64> = u.iter().zip(&d).map(|(a, b)| a + b).collect();
            let slack = k.slack(&v);
            for t in 0..ne {
                let deficit = element_rows[t].iter().map(|&r| -slack[r]).fold(0.0f64, f64::max);
                if deficit > 0.0 {
                    for &c in &element_cols[t] {
                        v[c] += deficit;
                    }
                }
            }
            let dv: Vec<f64> = v.iter().zip(u).map(|(a, b)| a - b).collect();
            worst = worst.max(dot(&residual, &dv));
        }
    }
    Ok(worst.max(0.0))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::assembly::{assemble_load, assemble_operator, build_constraints, ConstraintKind, Method, MethodConfig};
    use crate::fespace::Space;
    use crate::mesh::build_rect_mesh;
    use crate::sparse::solve;
    use crate::topology::Topology;

    fn setup(
        nx: usize,
        method: Method,
        deg: u8,
        kind: ConstraintKind,
        f: f64,
        chi: fn(nalgebra::Point2<f64>) -> f64,
    ) -> (CsrMatrix, Vec<f64>, ConstraintSystem) {
        let m = build_rect_mesh(-1.0, 1.0, -1.0, 1.0, nx, nx).unwrap();
        let topo = Topology::build(&m).unwrap();
        let space = Space::new(deg, m.num_elements()).unwrap();
        let cfg = MethodConfig::new(method, deg, kind);
        let a = assemble_operator(&m, &topo, space, &cfg);
        let load = assemble_load(&m, space, |_| f);
        let k = build_constraints(&m, space, kind, chi).unwrap();
        (a, load, k)
    }

    fn check_kkt(a: &CsrMatrix, f: &[f64], k: &ConstraintSystem, r: &PdasResult) {
        let scale = f.iter().fold(1.0f64, |s, v| s.max(v.abs()));
        let tol = 1e-10 * scale;
        let slack = k.slack(&r.u);
        for i in 0..k.num_rows() {
            assert!(r.lambda[i] <= tol);
            assert!(slack[i] >= -tol);
            assert!((r.lambda[i] * slack[i]).abs() <= tol * scale);
        }
        let mut res = a.matvec(&r.u);
        for (ri, v) in res.iter_mut().zip(k.b.matvec_transpose(&r.lambda)) {
            *ri += v;
        }
        for (ri, fi) in res.iter().zip(f) {
            assert!((ri - fi).abs() < 1e-9 * scale);
        }
    }

    #[test]
    fn inactive_obstacle_gives_unconstrained_solution() {
        let (a, f, k) = setup(2, Method::Sipg, 1, ConstraintKind::Integral, 1.0, |_| -1e6);
        let r = pdas_solve(&a, &f, &k, &PdasOptions::default()).unwrap();
        assert!(r.converged && r.active.is_empty());
        assert!(r.lambda.iter().all(|&l| l == 0.0));
        let u0 = solve(&a, &f).unwrap();
        for (x, y) in r.u.iter().zip(&u0) {
            assert!((x - y).abs() < 1e-12);
        }
    }

    #[test]
    fn contact_problems_satisfy_kkt() {
        for (method, deg, kind) in [
            (Method::Sipg, 1, ConstraintKind::Integral),
            (Method::Nipg, 1, ConstraintKind::Integral),
            (Method::Sipg, 2, ConstraintKind::Quadrature),
            (Method::Nipg, 2, ConstraintKind::Quadrature),
            (Method::Iipg, 2, ConstraintKind::Integral),
        ] {
            let (a, f, k) = setup(4, method, deg, kind, -10.0, |p| -0.2 + 0.1 * p.x);
            let r = pdas_solve(&a, &f, &k, &PdasOptions::default()).unwrap();
            assert!(r.converged);
            assert!(!r.active.is_empty());
            check_kkt(&a, &f, &k, &r);
            assert!(vi_residual_check(&a, &f, &k, &r.u, 20, 3).unwrap() <= 1e-8);
        }
    }

    #[test]
    fn start_independence() {
        let (a, f, k) = setup(4, Method::Sipg, 2, ConstraintKind::Quadrature, -10.0, |p| -0.1 - 0.1 * p.y * p.y);
        let mut sols = Vec::new();
        for initial in [InitialSet::Unconstrained, InitialSet::Empty, InitialSet::All, InitialSet::Given(vec![0, 5])] {
            let r = pdas_solve(&a, &f, &k, &PdasOptions { initial, ..Default::default() }).unwrap();
            sols.push(r.u);
        }
        for s in &sols[1..] {
            for (x, y) in s.iter().zip(&sols[0]) {
                assert!((x - y).abs() < 1e-8);
            }
        }
    }

    #[test]
    fn nonconvergence_carries_last_iterate() {
        let (a, f, k) = setup(4, Method::Sipg, 1, ConstraintKind::Integral, -10.0, |_| -0.1);
        let err = pdas_solve(&a, &f, &k, &PdasOptions { max_iter: 1, initial: InitialSet::Empty, ..Default::default() })
            .unwrap_err();
        match err {
            Error::NotConverged { iterations, last_iterate } => {
                assert_eq!(iterations, 1);
                assert_eq!(last_iterate.u.len(), f.len());
                assert!(!last_iterate.converged);
            }
            e => panic!("unexpected {e}"),
        }
    }

    #[test]
    fn residual_check_detects_perturbation() {
        let (a, f, k) = setup(4, Method::Sipg, 1, ConstraintKind::Integral, -10.0, |_| -0.1);
        let r = pdas_solve(&a, &f, &k, &PdasOptions::default()).unwrap();
        assert_eq!(vi_residual_check(&a, &f, &k, &r.u, 0, 0).unwrap(), 0.0);
        let slack = k.slack(&r.u);
        let free = (0..k.num_rows()).max_by(|&i, &j| slack[i].total_cmp(&slack[j])).unwrap();
        assert!(slack[free] > 1e-3);
        let dof = k.b.row(free).next().unwrap().0;
        let mut bad = r.u.clone();
        bad[dof] += 0.1;
        assert!(vi_residual_check(&a, &f, &k, &bad, 20, 1).unwrap() > 1e-6);
        let mut infeasible = r.u.clone();
        let act = r.active[0];
        for (c, _) in k.b.row(act).collect::<Vec<_>>() {
            infeasible[c] -= 1.0;
        }
        assert!(matches!(vi_residual_check(&a, &f, &k, &infeasible, 5, 1), Err(Error::Infeasible { .. })));
    }
}
