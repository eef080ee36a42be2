//! Adaptive loop, built-in benchmark problems and output files.

use std::fmt::Write as _;
use std::path::Path;
use std::sync::Arc;
use std::time::Instant;

use nalgebra::Point2;
use serde::Serialize;

use crate::assembly::{
    add_dirichlet_load, assemble_load, assemble_operator, build_constraints, ConstraintKind, ConstraintSystem,
    MethodConfig,
};
use crate::error::{Error, Result};
use crate::estimator::{element_indicators, EstimatorBreakdown, EstimatorConfig, EstimatorData};
use crate::fespace::{DgFunction, Space};
use crate::mesh::{build_rect_mesh, Mesh};
use crate::multiplier::{classify, ContactClassification, MultiplierField};
use crate::quadrature::lattice;
use crate::solver::{pdas_solve, vi_residual_check, PdasOptions, PdasResult};
use crate::sparse::CsrMatrix;
use crate::topology::Topology;
use crate::vtk::VtkGrid;

pub type ScalarField = Arc<dyn Fn(Point2<f64>) -> f64 + Send + Sync>;

fn field<F: Fn(Point2<f64>) -> f64 + Send + Sync + 'static>(f: F) -> ScalarField {
    Arc::new(f)
}

#[derive(Clone)]
pub struct ProblemSpec {
    pub name: String,
    /// `[xmin, xmax, ymin, ymax]`.
    pub domain: [f64; 4],
    pub initial_cells: (usize, usize),
    pub f: ScalarField,
    pub chi: ScalarField,
    /// Dirichlet data imposed weakly; `None` is homogeneous.
    pub boundary: Option<ScalarField>,
    pub exact: Option<ScalarField>,
    pub method: MethodConfig,
    pub gamma: f64,
    pub max_dofs: usize,
    pub max_iters: usize,
    pub seed: u64,
    /// Random feasible probes of the discrete VI per solve (0 disables).
    pub vi_probes: usize,
    pub estimator: EstimatorConfig,
}

impl std::fmt::Debug for ProblemSpec {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("ProblemSpec")
            .field("name", &self.name)
            .field("domain", &self.domain)
            .field("method", &self.method)
            .field("gamma", &self.gamma)
            .field("max_dofs", &self.max_dofs)
            .field("max_iters", &self.max_iters)
            .finish_non_exhaustive()
    }
}

/// Exact solution of the radially symmetric benchmark with `f = -2`, `chi = 0`.
pub fn example1_exact(p: Point2<f64>) -> f64 {
    let r2 = p.x * p.x + p.y * p.y;
    if r2 >= 1.0 {
        0.5 * r2 - 0.5 * r2.ln() - 0.5
    } else {
        0.0
    }
}

/// Two hills joined by a saddle.
pub fn example2_obstacle(p: Point2<f64>) -> f64 {
    10.0 - 6.0 * (p.x * p.x - 1.0).powi(2) - 20.0 * p.y * p.y
}

pub fn default_max_dofs(degree: u8) -> usize {
    if degree == 1 {
        50_000
    } else {
        100_000
    }
}

/// Built-in benchmarks: `1` is the radial problem on `(-3/2, 3/2)^2`,
/// `2` the two-hill obstacle on `(-2, 2) x (-1, 1)` with `f` in `{0, -15}`.
pub fn builtin_example(id: u8, f_variant: f64, method: MethodConfig) -> Result<ProblemSpec> {
    let base = |name: String, domain, cells, f, chi, boundary, exact| ProblemSpec {
        name,
        domain,
        initial_cells: cells,
        f,
        chi,
        boundary,
        exact,
        method,
        gamma: 0.4,
        max_dofs: default_max_dofs(method.degree),
        max_iters: 40,
        seed: 0,
        vi_probes: 4,
        estimator: EstimatorConfig::default(),
    };
    match id {
        1 => Ok(base(
            "example1".into(),
            [-1.5, 1.5, -1.5, 1.5],
            (4, 4),
            field(|_| -2.0),
            field(|_| 0.0),
            Some(field(example1_exact)),
            Some(field(example1_exact)),
        )),
        2 => {
            if f_variant != 0.0 && f_variant != -15.0 {
                return Err(Error::Config(format!("example 2 load must be 0 or -15, got {f_variant}")));
            }
            Ok(base(
                format!("example2_f{f_variant}"),
                [-2.0, 2.0, -1.0, 1.0],
                (4, 2),
                field(move |_| f_variant),
                field(example2_obstacle),
                None,
                None,
            ))
        }
        _ => Err(Error::Config(format!("unknown example {id}"))),
    }
}

impl ProblemSpec {
    pub fn validate(&self) -> Result<()> {
        self.method.validate()?;
        if !(self.gamma > 0.0 && self.gamma <= 1.0) {
            return Err(Error::Config(format!("marking parameter must lie in (0, 1], got {}", self.gamma)));
        }
        if self.max_iters == 0 {
            return Err(Error::Config("max_iters must be positive".into()));
        }
        let [x0, x1, y0, y1] = self.domain;
        if !(x0 < x1 && y0 < y1) {
            return Err(Error::InvalidDomain(format!("{:?}", self.domain)));
        }
        // compatibility chi <= g on the boundary
        let n = 64;
        for i in 0..=n {
            let s = i as f64 / n as f64;
            for p in [
                Point2::new(x0 + s * (x1 - x0), y0),
                Point2::new(x0 + s * (x1 - x0), y1),
                Point2::new(x0, y0 + s * (y1 - y0)),
                Point2::new(x1, y0 + s * (y1 - y0)),
            ] {
                let g = self.boundary.as_ref().map_or(0.0, |g| g(p));
                if (self.chi)(p) > g + 1e-12 {
                    return Err(Error::Config(format!("obstacle exceeds boundary data at ({}, {})", p.x, p.y)));
                }
            }
        }
        Ok(())
    }

    pub fn initial_mesh(&self) -> Result<Mesh> {
        let [x0, x1, y0, y1] = self.domain;
        build_rect_mesh(x0, x1, y0, y1, self.initial_cells.0, self.initial_cells.1)
    }

    /// Plain-data view of every effective parameter.
    pub fn echo(&self) -> SpecEcho {
        SpecEcho {
            name: self.name.clone(),
            domain: self.domain,
            initial_cells: [self.initial_cells.0, self.initial_cells.1],
            method: self.method.method.name().into(),
            theta: self.method.theta(),
            penalty: self.method.penalty,
            degree: self.method.degree,
            constraints: match self.method.constraint {
                ConstraintKind::Integral => "integral".into(),
                ConstraintKind::Quadrature => "quadrature".into(),
            },
            gamma: self.gamma,
            max_dofs: self.max_dofs,
            max_iters: self.max_iters,
            seed: self.seed,
            vi_probes: self.vi_probes,
            inhomogeneous_boundary: self.boundary.is_some(),
            exact_solution: self.exact.is_some(),
            estimator: self.estimator,
        }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct SpecEcho {
    pub name: String,
    pub domain: [f64; 4],
    pub initial_cells: [usize; 2],
    pub method: String,
    pub theta: f64,
    pub penalty: f64,
    pub degree: u8,
    pub constraints: String,
    pub gamma: f64,
    pub max_dofs: usize,
    pub max_iters: usize,
    pub seed: u64,
    pub vi_probes: usize,
    pub inhomogeneous_boundary: bool,
    pub exact_solution: bool,
    pub estimator: EstimatorConfig,
}

/// Everything produced by one SOLVE and ESTIMATE step.
#[derive(Debug, Clone)]
pub struct SolveOutput {
    pub topology: Topology,
    pub operator: CsrMatrix,
    pub load: Vec<f64>,
    pub constraints: ConstraintSystem,
    pub pdas: PdasResult,
    pub u: DgFunction,
    pub multiplier: MultiplierField,
    pub classification: ContactClassification,
    pub breakdown: EstimatorBreakdown,
}

/// `1e-9 * max(1, |F|_inf)`.
pub fn invariant_tolerance(load: &[f64]) -> f64 {
    1e-9 * load.iter().fold(1.0f64, |m, v| m.max(v.abs()))
}

/// Assembles, solves, recovers the multiplier, checks its invariants and
/// evaluates the estimator.
pub fn solve_once(mesh: &Mesh, spec: &ProblemSpec) -> Result<SolveOutput> {
    let cfg = &spec.method;
    cfg.validate()?;
    let topology = Topology::build(mesh)?;
    let space = Space::new(cfg.degree, mesh.num_elements())?;
    let operator = assemble_operator(mesh, &topology, space, cfg);
    let mut load = assemble_load(mesh, space, &*spec.f);
    if let Some(g) = &spec.boundary {
        add_dirichlet_load(mesh, &topology, space, cfg, &**g, &mut load);
    }
    let constraints = build_constraints(mesh, space, cfg.constraint, &*spec.chi)?;
    let pdas = pdas_solve(&operator, &load, &constraints, &PdasOptions::default())?;
    let tol = invariant_tolerance(&load);
    if spec.vi_probes > 0 {
        let v = vi_residual_check(&operator, &load, &constraints, &pdas.u, spec.vi_probes, spec.seed)?;
        if v > 10.0 * tol {
            return Err(Error::Invariant(format!("discrete VI violated by {v:e} on random probes")));
        }
    }
    let u = DgFunction::from_coeffs(space, pdas.u.clone())?;
    let multiplier = MultiplierField::recover(mesh, space, cfg.constraint, &operator, &load, &pdas.u)?;
    let violations = multiplier.invariant_violations(mesh, &constraints, &pdas.u, tol);
    if !violations.is_empty() {
        return Err(Error::Invariant(format!(
            "{} multiplier violations, first: {}",
            violations.len(),
            violations[0]
        )));
    }
    let classification = classify(&constraints, &pdas.u, 1e-9);
    let data = EstimatorData {
        f: &*spec.f,
        chi: &*spec.chi,
        g: spec.boundary.as_ref().map(|g| &**g as &dyn Fn(Point2<f64>) -> f64),
    };
    let breakdown = element_indicators(mesh, &topology, &u, &multiplier, &data, &spec.estimator)?;
    Ok(SolveOutput {
        topology,
        operator,
        load,
        constraints,
        pdas,
        u,
        multiplier,
        classification,
        breakdown,
    })
}

/// Maximum strategy: `{T : eta_T >= gamma * max eta}`; empty when every
/// indicator vanishes.
pub fn mark_elements(indicators: &[f64], gamma: f64) -> Vec<usize> {
    let max = indicators.iter().copied().fold(0.0, f64::max);
    if max <= 0.0 {
        return Vec::new();
    }
    let threshold = gamma * max;
    (0..indicators.len()).filter(|&t| indicators[t] >= threshold && indicators[t] > 0.0).collect()
}

/// `max_T max_lattice |u - u_h|`.
pub fn linf_error(mesh: &Mesh, u: &DgFunction, exact: &dyn Fn(Point2<f64>) -> f64, m: usize) -> f64 {
    let pts = lattice(m);
    let mut err = 0.0f64;
    for t in 0..mesh.num_elements() {
        let g = mesh.geometry(t);
        for &l in &pts {
            err = err.max((exact(g.point(l)) - u.eval_bary(t, l)).abs());
        }
    }
    err
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct IterationRow {
    pub iter: usize,
    pub elements: usize,
    pub dofs: usize,
    pub h_min: f64,
    pub eta: [f64; 5],
    pub eta_total: f64,
    pub error_linf: Option<f64>,
    pub efficiency: Option<f64>,
    pub pdas_iters: usize,
    pub seconds: f64,
    pub marked: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub enum StopReason {
    MaxDofs,
    MaxIters,
    ZeroEstimator,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RunRecord {
    pub rows: Vec<IterationRow>,
    pub stop: Option<StopReason>,
}

/// Failure inside the loop with the iterations completed so far.
#[derive(Debug)]
pub struct RunFailure {
    pub partial: RunRecord,
    pub meshes: Vec<Mesh>,
    pub error: Error,
}

impl std::fmt::Display for RunFailure {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{} (after {} completed iterations)", self.error, self.partial.rows.len())
    }
}

impl std::error::Error for RunFailure {
    fn source(&self) -> Option<&(dyn std::error::Error + 'static)> {
        Some(&self.error)
    }
}

/// State handed to the observer after each iteration.
pub struct IterationState<'a> {
    pub iter: usize,
    pub mesh: &'a Mesh,
    pub output: &'a SolveOutput,
    pub row: &'a IterationRow,
    pub marked: &'a [usize],
}

#[derive(Debug, Clone)]
pub struct AdaptiveRun {
    pub record: RunRecord,
    /// Mesh of every iteration when requested.
    pub meshes: Vec<Mesh>,
    pub indicators: Vec<Vec<f64>>,
    pub final_mesh: Mesh,
}

pub fn adaptive_solve(spec: &ProblemSpec) -> std::result::Result<AdaptiveRun, RunFailure> {
    adaptive_solve_with(spec, false, |_| {})
}

/// SOLVE, ESTIMATE, MARK, REFINE until a mesh would exceed `max_dofs`, the
/// iteration cap is reached or the estimator vanishes.
pub fn adaptive_solve_with<O: FnMut(&IterationState)>(
    spec: &ProblemSpec,
    keep_meshes: bool,
    mut observer: O,
) -> std::result::Result<AdaptiveRun, RunFailure> {
    let mut record = RunRecord { rows: Vec::new(), stop: None };
    let mut meshes = Vec::new();
    let mut indicators = Vec::new();
    let fail = |record: RunRecord, meshes: Vec<Mesh>, error| RunFailure { partial: record, meshes, error };
    if let Err(e) = spec.validate() {
        return Err(fail(record, meshes, e));
    }
    let mut mesh = match spec.initial_mesh() {
        Ok(m) => m,
        Err(e) => return Err(fail(record, meshes, e)),
    };
    let dofs_per = if spec.method.degree == 1 { 3 } else { 6 };
    for iter in 0..spec.max_iters {
        let start = Instant::now();
        let out = match solve_once(&mesh, spec) {
            Ok(o) => o,
            Err(e) => return Err(fail(record, meshes, e)),
        };
        let error_linf = spec
            .exact
            .as_ref()
            .map(|u| linf_error(&mesh, &out.u, &**u, spec.estimator.lattice));
        let marked = mark_elements(&out.breakdown.indicators, spec.gamma);
        let b = &out.breakdown;
        let row = IterationRow {
            iter,
            elements: mesh.num_elements(),
            dofs: out.u.space.num_dofs(),
            h_min: b.h_min,
            eta: b.eta,
            eta_total: b.eta_h,
            error_linf,
            efficiency: error_linf.filter(|&e| e > 0.0).map(|e| b.eta_h / e),
            pdas_iters: out.pdas.iterations,
            seconds: start.elapsed().as_secs_f64(),
            marked: marked.len(),
        };
        observer(&IterationState {
            iter,
            mesh: &mesh,
            output: &out,
            row: &row,
            marked: &marked,
        });
        record.rows.push(row);
        indicators.push(out.breakdown.indicators.clone());
        if keep_meshes {
            meshes.push(mesh.clone());
        }
        if marked.is_empty() {
            record.stop = Some(StopReason::ZeroEstimator);
            break;
        }
        if iter + 1 == spec.max_iters {
            record.stop = Some(StopReason::MaxIters);
            break;
        }
        let refined = match mesh.refine_nvb(marked) {
            Ok(m) => m,
            Err(e) => return Err(fail(record, meshes, e)),
        };
        if refined.num_elements() * dofs_per > spec.max_dofs {
            record.stop = Some(StopReason::MaxDofs);
            break;
        }
        mesh = refined;
    }
    Ok(AdaptiveRun {
        record,
        meshes,
        indicators,
        final_mesh: mesh,
    })
}

pub const CSV_HEADER: &str =
    "iter,elements,dofs,h_min,eta1,eta2,eta3,eta4,eta5,eta_total,error_linf,efficiency,pdas_iters,seconds";

pub fn convergence_csv(record: &RunRecord) -> String {
    let mut s = String::from(CSV_HEADER);
    s.push('\n');
    let opt = |v: Option<f64>| v.map(|x| format!("{x:.10e}")).unwrap_or_default();
    for r in &record.rows {
        let _ = writeln!(
            s,
            "{},{},{},{:.10e},{:.10e},{:.10e},{:.10e},{:.10e},{:.10e},{:.10e},{},{},{},{:.6}",
            r.iter,
            r.elements,
            r.dofs,
            r.h_min,
            r.eta[0],
            r.eta[1],
            r.eta[2],
            r.eta[3],
            r.eta[4],
            r.eta_total,
            opt(r.error_linf),
            opt(r.efficiency),
            r.pdas_iters,
            r.seconds
        );
    }
    s
}

/// Writes `convergence.csv`, `run.json` and, when meshes are given,
/// `mesh_NNN.vtk` per iteration (with the marking indicator as cell data).
pub fn write_outputs(
    spec: &ProblemSpec,
    record: &RunRecord,
    meshes: &[Mesh],
    indicators: &[Vec<f64>],
    out: &Path,
) -> Result<()> {
    std::fs::create_dir_all(out).map_err(|e| Error::io(out, e))?;
    let write = |name: &str, text: &str| {
        let p = out.join(name);
        std::fs::write(&p, text).map_err(|e| Error::io(p, e))
    };
    write("convergence.csv", &convergence_csv(record))?;
    #[derive(Serialize)]
    struct Echo<'a> {
        config: SpecEcho,
        stop: &'a Option<StopReason>,
        iterations: usize,
    }
    let echo = Echo {
        config: spec.echo(),
        stop: &record.stop,
        iterations: record.rows.len(),
    };
    let json = serde_json::to_string_pretty(&echo).map_err(|e| Error::Config(e.to_string()))?;
    write("run.json", &(json + "\n"))?;
    for (i, m) in meshes.iter().enumerate() {
        let mut grid = VtkGrid::from_mesh(m);
        if let Some(ind) = indicators.get(i).filter(|v| v.len() == m.num_elements()) {
            grid = grid.with_scalar("eta_T", ind.clone());
        }
        write(&format!("mesh_{i:03}.vtk"), &grid.to_vtk(&format!("{} iteration {i}", spec.name)))?;
    }
    Ok(())
}

/// Least-squares slope of `log y` against `log x` over the last `n` points.
pub fn fitted_slope(x: &[f64], y: &[f64], n: usize) -> Option<f64> {
    let k = x.len().min(y.len());
    if k < 2 || n < 2 {
        return None;
    }
    let start = k.saturating_sub(n);
    let pts: Vec<(f64, f64)> = (start..k).map(|i| (x[i].ln(), y[i].ln())).collect();
    let m = pts.len() as f64;
    let mx = pts.iter().map(|p| p.0).sum::<f64>() / m;
    let my = pts.iter().map(|p| p.1).sum::<f64>() / m;
    let sxx: f64 = pts.iter().map(|p| (p.0 - mx).powi(2)).sum();
    let sxy: f64 = pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    (sxx > 0.0).then(|| sxy / sxx)
}
