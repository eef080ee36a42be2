//! Independent oracles and the self-check suite behind `obstacle-dg verify`.
//!
//! The enumeration oracle solves the KKT conditions by brute force over all
//! active sets with dense factorizations; it shares nothing with the PDAS
//! path beyond the assembled matrices.

use std::collections::BTreeMap;

use nalgebra::{DMatrix, DVector, Point2};
use rand::{Rng, SeedableRng};

use crate::assembly::{
    add_dirichlet_load, assemble_load, assemble_operator, build_constraints, ConstraintKind, ConstraintSystem,
    Method, MethodConfig,
};
use crate::driver::{builtin_example, example1_exact, solve_once};
use crate::error::{Error, Result};
use crate::fespace::Space;
use crate::mesh::{build_rect_mesh, Mesh};
use crate::quadrature::{integrate_simplex, quadrature_nodes};
use crate::solver::{pdas_solve, vi_residual_check, PdasOptions};
use crate::sparse::CsrMatrix;
use crate::topology::Topology;

/// Solution of `min 1/2 u'Au - F'u, Bu >= c` (or the VI for nonsymmetric
/// `A`) by trying every active set and keeping the one satisfying the KKT
/// conditions. Fails if no set qualifies or more than 16 rows are given.
pub fn enumerate_active_sets(a: &CsrMatrix, f: &[f64], k: &ConstraintSystem) -> Result<Vec<f64>> {
    let n = a.nrows;
    let m = k.num_rows();
    if m > 16 {
        return Err(Error::Config(format!("enumeration over {m} constraints is too large")));
    }
    let ad = a.to_dense();
    let bd = k.b.to_dense();
    let scale = f.iter().fold(1.0f64, |s, v| s.max(v.abs()));
    let mut best: Option<(f64, Vec<f64>)> = None;
    for mask in 0u32..(1 << m) {
        let rows: Vec<usize> = (0..m).filter(|&i| mask & (1 << i) != 0).collect();
        let s = rows.len();
        let mut kkt = DMatrix::<f64>::zeros(n + s, n + s);
        let mut rhs = DVector::<f64>::zeros(n + s);
        for i in 0..n {
            for j in 0..n {
                kkt[(i, j)] = ad[i][j];
            }
            rhs[i] = f[i];
        }
        for (q, &r) in rows.iter().enumerate() {
            for j in 0..n {
                kkt[(n + q, j)] = bd[r][j];
                kkt[(j, n + q)] = -bd[r][j];
            }
            rhs[n + q] = k.c[r];
        }
        let Some(x) = kkt.lu().solve(&rhs) else { continue };
        let u: Vec<f64> = x.iter().take(n).copied().collect();
        let mu_min = x.iter().skip(n).copied().fold(0.0, f64::min);
        let slack_min = (0..m)
            .map(|r| (0..n).map(|j| bd[r][j] * u[j]).sum::<f64>() - k.c[r])
            .fold(0.0, f64::min);
        // smallest KKT defect wins; exact KKT points have defect at roundoff level
        let defect = (-mu_min).max(-slack_min) / scale;
        if best.as_ref().map_or(true, |b| defect < b.0) {
            best = Some((defect, u));
        }
    }
    match best {
        Some((d, u)) if d < 1e-9 => Ok(u),
        Some((d, _)) => Err(Error::Invariant(format!("no active set satisfies the KKT conditions (best defect {d:e})"))),
        None => Err(Error::LinearSolver("every KKT system was singular".into())),
    }
}

/// Conforming meshes with at most 8 elements: structured rectangles and
/// newest-vertex refinements of the smallest ones.
pub fn small_meshes(domain: [f64; 4]) -> Vec<Mesh> {
    let [x0, x1, y0, y1] = domain;
    let mut out = Vec::new();
    for (nx, ny) in [(1, 1), (2, 1), (1, 2), (3, 1), (2, 2), (4, 1), (1, 4)] {
        out.push(build_rect_mesh(x0, x1, y0, y1, nx, ny).expect("valid rectangle"));
    }
    let base = build_rect_mesh(x0, x1, y0, y1, 1, 1).expect("valid rectangle");
    let once = base.refine_nvb([0]).expect("refinement");
    out.push(once.clone());
    for t in 0..once.num_elements() {
        let m = once.refine_nvb([t]).expect("refinement");
        if m.num_elements() <= 8 {
            out.push(m);
        }
    }
    let strip = build_rect_mesh(x0, x1, y0, y1, 2, 1).expect("valid rectangle");
    for t in 0..strip.num_elements() {
        let m = strip.refine_nvb([t]).expect("refinement");
        if m.num_elements() <= 8 {
            out.push(m);
        }
    }
    out
}

/// Exact integral over a triangle of `x^a y^b`, by expanding the monomial in
/// barycentric coordinates and using `int l0^i l1^j l2^k = 2|T| i! j! k! / (i+j+k+2)!`.
pub fn monomial_integral(tri: [Point2<f64>; 3], a: u32, b: u32) -> f64 {
    type Poly = BTreeMap<[u32; 3], f64>;
    let mul = |p: &Poly, q: &Poly| -> Poly {
        let mut r = Poly::new();
        for (e1, c1) in p {
            for (e2, c2) in q {
                let e = [e1[0] + e2[0], e1[1] + e2[1], e1[2] + e2[2]];
                *r.entry(e).or_insert(0.0) += c1 * c2;
            }
        }
        r
    };
    let linear = |v: [f64; 3]| -> Poly { (0..3).map(|i| (std::array::from_fn(|j| u32::from(i == j)), v[i])).collect() };
    let x = linear([tri[0].x, tri[1].x, tri[2].x]);
    let y = linear([tri[0].y, tri[1].y, tri[2].y]);
    let mut p: Poly = [([0, 0, 0], 1.0)].into_iter().collect();
    for _ in 0..a {
        p = mul(&p, &x);
    }
    for _ in 0..b {
        p = mul(&p, &y);
    }
    let area = 0.5 * ((tri[1] - tri[0]).perp(&(tri[2] - tri[0]))).abs();
    let fact = |n: u32| (1..=n).map(f64::from).product::<f64>();
    p.iter()
        .map(|(e, c)| c * 2.0 * area * fact(e[0]) * fact(e[1]) * fact(e[2]) / fact(e[0] + e[1] + e[2] + 2))
        .sum()
}

/// Largest relative error of the quadrature-simplex rule of order `s` on
/// `count` random triangles and random polynomials of degree `s`.
pub fn quadrature_exactness(count: usize, s: u8, seed: u64) -> f64 {
    let mut rng = rand::rngs::StdRng::seed_from_u64(seed);
    let exps: Vec<(u32, u32)> = (0..=u32::from(s)).flat_map(|a| (0..=u32::from(s) - a).map(move |b| (a, b))).collect();
    let mut worst = 0.0f64;
    let mut done = 0;
    while done < count {
        let tri: [Point2<f64>; 3] = [0; 3].map(|_| Point2::new(rng.random_range(-3.0..3.0), rng.random_range(-3.0..3.0)));
        let area = 0.5 * (tri[1] - tri[0]).perp(&(tri[2] - tri[0]));
        if area.abs() < 1e-2 {
            continue;
        }
        done += 1;
        let mesh = Mesh {
            vertices: tri.to_vec(),
            elements: vec![crate::mesh::Element {
                vertices: if area > 0.0 { [0, 1, 2] } else { [0, 2, 1] },
                refinement_edge: 0,
                generation: 0,
                boundary: [true; 3],
            }],
        };
        let coef: Vec<f64> = exps.iter().map(|_| rng.random_range(-1.0..1.0)).collect();
        let p = |q: Point2<f64>| -> f64 {
            exps.iter().zip(&coef).map(|(&(a, b), c)| c * q.x.powi(a as i32) * q.y.powi(b as i32)).sum()
        };
        let nodes = quadrature_nodes(&mesh, 0, s);
        let approx = integrate_simplex(&mesh, nodes.points.map(p), 0, s);
        let exact: f64 = exps.iter().zip(&coef).map(|(&(a, b), c)| c * monomial_integral(tri, a, b)).sum();
        let scale: f64 = exps
            .iter()
            .zip(&coef)
            .map(|(&(a, b), c)| (c * monomial_integral(tri, a, b)).abs())
            .sum::<f64>()
            .max(1e-300);
        worst = worst.max((approx - exact).abs() / scale);
    }
    worst
}

/// Discrete problem on a small mesh used by the oracle comparisons.
pub struct SmallProblem {
    pub a: CsrMatrix,
    pub f: Vec<f64>,
    pub k: ConstraintSystem,
}

/// Problems with active constraints: the radial benchmark data and a tilted
/// obstacle under a strong downward load, both on `(-3/2, 3/2)^2`.
pub fn small_problems(mesh: &Mesh, cfg: &MethodConfig) -> Result<Vec<SmallProblem>> {
    let topo = Topology::build(mesh)?;
    let space = Space::new(cfg.degree, mesh.num_elements())?;
    let a = assemble_operator(mesh, &topo, space, cfg);
    let mut f1 = assemble_load(mesh, space, |_| -2.0);
    add_dirichlet_load(mesh, &topo, space, cfg, example1_exact, &mut f1);
    let k1 = build_constraints(mesh, space, cfg.constraint, |_| 0.0)?;
    let f2 = assemble_load(mesh, space, |_| -20.0);
    let k2 = build_constraints(mesh, space, cfg.constraint, |p| -0.3 + 0.2 * p.x - 0.1 * p.y)?;
    Ok(vec![
        SmallProblem { a: a.clone(), f: f1, k: k1 },
        SmallProblem { a, f: f2, k: k2 },
    ])
}

/// Max-norm distance between PDAS and the enumeration oracle over all small
/// meshes (t = 2 restricted to at most 4 elements), with the number of
/// comparisons made.
pub fn oracle_equivalence(kind: ConstraintKind, method: Method) -> Result<(f64, usize)> {
    let deg = if kind == ConstraintKind::Quadrature { 2 } else { 1 };
    let mut worst = 0.0f64;
    let mut count = 0;
    for degree in [deg, 2] {
        let cfg = MethodConfig::new(method, degree, kind);
        for mesh in small_meshes([-1.5, 1.5, -1.5, 1.5]) {
            if kind == ConstraintKind::Quadrature && mesh.num_elements() > 4 {
                continue;
            }
            for p in small_problems(&mesh, &cfg)? {
                let oracle = enumerate_active_sets(&p.a, &p.f, &p.k)?;
                let r = pdas_solve(&p.a, &p.f, &p.k, &PdasOptions::default())?;
                let d = oracle.iter().zip(&r.u).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max);
                worst = worst.max(d);
                count += 1;
            }
        }
        if deg == 2 {
            break;
        }
    }
    Ok((worst, count))
}

#[derive(Debug, Default)]
pub struct VerifyReport {
    pub lines: Vec<String>,
    pub failures: usize,
}

impl VerifyReport {
    fn check(&mut self, name: &str, ok: bool, detail: String) {
        self.lines.push(format!("[{}] {name}: {detail}", if ok { "PASS" } else { "FAIL" }));
        if !ok {
            self.failures += 1;
        }
    }

    pub fn passed(&self) -> bool {
        self.failures == 0
    }
}

/// Quadrature exactness, operator symmetry, oracle equivalence, VI probes and
/// multiplier signs on the initial meshes of both examples.
pub fn run_all(seed: u64) -> VerifyReport {
    let mut rep = VerifyReport::default();
    for s in [1u8, 2] {
        let e = quadrature_exactness(200, s, seed);
        rep.check(&format!("quadrature simplex order {s} exactness"), e < 1e-12, format!("max rel error {e:.2e}"));
    }
    match build_rect_mesh(-1.5, 1.5, -1.5, 1.5, 4, 4).and_then(|m| {
        let topo = Topology::build(&m)?;
        let space = Space::new(2, m.num_elements())?;
        Ok(assemble_operator(&m, &topo, space, &MethodConfig::new(Method::Sipg, 2, ConstraintKind::Integral)).asymmetry())
    }) {
        Ok(a) => rep.check("SIPG operator symmetry", a < 1e-10, format!("relative asymmetry {a:.2e}")),
        Err(e) => rep.check("SIPG operator symmetry", false, e.to_string()),
    }
    for kind in [ConstraintKind::Integral, ConstraintKind::Quadrature] {
        for method in [Method::Sipg, Method::Nipg] {
            let name = format!("PDAS vs enumeration ({kind:?}, {})", method.name());
            match oracle_equivalence(kind, method) {
                Ok((d, n)) => rep.check(&name, d < 1e-8, format!("{n} problems, max difference {d:.2e}")),
                Err(e) => rep.check(&name, false, e.to_string()),
            }
        }
    }
    for (id, fv, deg, kind) in [
        (1, 0.0, 1, ConstraintKind::Integral),
        (1, 0.0, 2, ConstraintKind::Quadrature),
        (2, -15.0, 2, ConstraintKind::Integral),
        (2, 0.0, 2, ConstraintKind::Quadrature),
    ] {
        let name = format!("example {id} (f={fv}) P{deg} {kind:?}: solve, VI probes, multiplier signs");
        let res = builtin_example(id, fv, MethodConfig::new(Method::Sipg, deg, kind)).and_then(|mut spec| {
            spec.seed = seed;
            let mesh = spec.initial_mesh()?;
            let out = solve_once(&mesh, &spec)?;
            let v = vi_residual_check(&out.operator, &out.load, &out.constraints, &out.pdas.u, 50, seed)?;
            Ok((v, out.multiplier.reduced.0.iter().copied().fold(f64::NEG_INFINITY, f64::max)))
        });
        match res {
            Ok((v, smax)) => rep.check(&name, v <= 1e-8, format!("VI violation {v:.2e}, max B_h sigma {smax:.2e}")),
            Err(e) => rep.check(&name, false, e.to_string()),
        }
    }
    rep
}
