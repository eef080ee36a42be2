//! Discrete Lagrange multipliers recovered from the algebraic residual
//! `F - Au`, their piecewise constant reduction, and contact classification.

use serde::Serialize;

use crate::assembly::{ConstraintKind, ConstraintSystem};
use crate::error::{Error, Result};
use crate::fespace::{quadrature_layout_basis, PiecewiseConstant, PiecewiseLinear, Space};
use crate::mesh::Mesh;
use crate::sparse::CsrMatrix;

fn residual(a: &CsrMatrix, f: &[f64], u: &[f64]) -> Vec<f64> {
    let mut r = a.matvec(u);
    for (ri, fi) in r.iter_mut().zip(f) {
        *ri = fi - *ri;
    }
    r
}

/// `sigma1|_T = (F - Au) . e_T / |T|` with `e_T` the coefficients of the
/// indicator of `T` (all ones in a Lagrange basis).
pub fn recover_sigma1(mesh: &Mesh, space: Space, a: &CsrMatrix, f: &[f64], u: &[f64]) -> PiecewiseConstant {
    let r = residual(a, f, u);
    PiecewiseConstant(
        (0..mesh.num_elements())
            .map(|t| r[space.element_dofs(t)].iter().sum::<f64>() / mesh.geometry(t).area)
            .collect(),
    )
}

/// `sigma2(z) = 3/|T| (F - Au) . e_psi_z` at the three quadrature vertices.
pub fn recover_sigma2(mesh: &Mesh, space: Space, a: &CsrMatrix, f: &[f64], u: &[f64]) -> Result<PiecewiseLinear> {
    if space.degree != 2 {
        return Err(Error::Config("sigma2 requires the degree-2 space".into()));
    }
    let r = residual(a, f, u);
    let psi = quadrature_layout_basis();
    Ok(PiecewiseLinear(
        (0..mesh.num_elements())
            .map(|t| {
                let rt = &r[space.element_dofs(t)];
                let scale = 3.0 / mesh.geometry(t).area;
                [0, 1, 2].map(|k| scale * (0..6).map(|j| psi[(j, k)] * rt[j]).sum::<f64>())
            })
            .collect(),
    ))
}

#[derive(Debug, Clone, PartialEq)]
pub struct MultiplierField {
    pub kind: ConstraintKind,
    pub sigma1: Option<PiecewiseConstant>,
    pub sigma2: Option<PiecewiseLinear>,
    pub reduced: PiecewiseConstant,
}

impl MultiplierField {
    pub fn from_sigma1(s: PiecewiseConstant) -> MultiplierField {
        let mut m = MultiplierField {
            kind: ConstraintKind::Integral,
            sigma1: Some(s),
            sigma2: None,
            reduced: PiecewiseConstant(Vec::new()),
        };
        m.reduced = reduce_b_h(&m);
        m
    }

    pub fn from_sigma2(s: PiecewiseLinear) -> MultiplierField {
        let mut m = MultiplierField {
            kind: ConstraintKind::Quadrature,
            sigma1: None,
            sigma2: Some(s),
            reduced: PiecewiseConstant(Vec::new()),
        };
        m.reduced = reduce_b_h(&m);
        m
    }

    /// Recovers the multiplier matching the constraint kind.
    pub fn recover(
        mesh: &Mesh,
        space: Space,
        kind: ConstraintKind,
        a: &CsrMatrix,
        f: &[f64],
        u: &[f64],
    ) -> Result<MultiplierField> {
        Ok(match kind {
            ConstraintKind::Integral => MultiplierField::from_sigma1(recover_sigma1(mesh, space, a, f, u)),
            ConstraintKind::Quadrature => MultiplierField::from_sigma2(recover_sigma2(mesh, space, a, f, u)?),
        })
    }

    /// Pointwise value on element `t` at barycentric `l`.
    pub fn eval_bary(&self, t: usize, l: [f64; 3]) -> f64 {
        match (&self.sigma1, &self.sigma2) {
            (Some(s), _) => s.0[t],
            (_, Some(s)) => s.eval_bary(t, l),
            _ => 0.0,
        }
    }

    /// Values attached to the constraint rows of element `t`.
    fn row_values(&self, t: usize) -> Vec<f64> {
        match (&self.sigma1, &self.sigma2) {
            (Some(s), _) => vec![s.0[t]],
            (_, Some(s)) => s.0[t].to_vec(),
            _ => Vec::new(),
        }
    }

    /// Checks sign, complementarity and reduction-sign invariants against the
    /// constraint rows `k` at the solution `u`. Returns every violation found.
    /// Values are compared in load units (`sigma * |T| / factor`, the
    /// algebraic multiplier); complementarity products against
    /// `tol * max(1, |c_r|)`.
    pub fn invariant_violations(&self, mesh: &Mesh, k: &ConstraintSystem, u: &[f64], tol: f64) -> Vec<String> {
        let mut out = Vec::new();
        if k.kind != self.kind {
            out.push("multiplier kind does not match the constraint kind".into());
            return out;
        }
        let slack = k.slack(u);
        let per = k.kind.rows_per_element();
        let factor = match k.kind {
            ConstraintKind::Integral => 1.0,
            ConstraintKind::Quadrature => 3.0,
        };
        for t in 0..self.reduced.0.len() {
            let w = mesh.geometry(t).area / factor;
            let vals = self.row_values(t);
            for (i, &s) in vals.iter().enumerate() {
                let s = s * w;
                let r = t * per + i;
                if s > tol {
                    out.push(format!("element {t} node {i}: multiplier {s:e} > 0"));
                }
                if (s * slack[r]).abs() > tol * k.c[r].abs().max(1.0) {
                    out.push(format!("element {t} node {i}: complementarity {:e}", s * slack[r]));
                }
            }
            if self.reduced.0[t] * w > tol {
                out.push(format!("element {t}: reduced multiplier {:e} > 0", self.reduced.0[t]));
            }
        }
        out
    }
}

/// `B_h sigma`: identity for the piecewise constant multiplier, elementwise
/// mean (average of the quadrature-vertex values) for the linear one.
pub fn reduce_b_h(field: &MultiplierField) -> PiecewiseConstant {
    match (&field.sigma1, &field.sigma2) {
        (Some(s), _) => s.clone(),
        (_, Some(s)) => s.means(),
        _ => PiecewiseConstant(Vec::new()),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum ContactLabel {
    Contact,
    NonContact,
    FreeBoundary,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ContactClassification(pub Vec<ContactLabel>);

impl ContactClassification {
    pub fn count(&self, label: ContactLabel) -> usize {
        self.0.iter().filter(|&&l| l == label).count()
    }
}

/// Labels elements by which constraint rows hold with equality, within
/// `tol * max(1, |c_r|)`.
pub fn classify(k: &ConstraintSystem, u: &[f64], tol: f64) -> ContactClassification {
    let slack = k.slack(u);
    let per = k.kind.rows_per_element();
    let ne = k.num_rows() / per;
    ContactClassification(
        (0..ne)
            .map(|t| {
                let eq = (0..per)
                    .filter(|&i| {
                        let r = t * per + i;
                        slack[r].abs() <= tol * k.c[r].abs().max(1.0)
                    })
                    .count();
                if eq == per {
                    ContactLabel::Contact
                } else if eq == 0 {
                    ContactLabel::NonContact
                } else {
                    ContactLabel::FreeBoundary
                }
            })
            .collect(),
    )
}
