//! Equality and inequality constraints at virtual collocation points.

mod batch;
mod expr;
mod parse;

pub use batch::ResidualBatch;
pub use expr::{hinge, residual_eval, CompiledExpr, Expr, ExprLimits, SourceTerm, MAX_TERMS};
pub use parse::{parse_expr, ParseContext};

use std::fmt;

use crate::basis::Marginal;
use crate::error::{Error, Result};
use crate::sampling::{lhs_marginals, lhs_on_face, substream};

/// Which loss an equality constraint contributes to.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum ConstraintKind {
    Pde,
    Ic,
    Bc,
}

impl fmt::Display for ConstraintKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            ConstraintKind::Pde => "PDE",
            ConstraintKind::Ic => "IC",
            ConstraintKind::Bc => "BC",
        })
    }
}

#[derive(Debug, Clone)]
pub struct EqualityConstraint {
    pub kind: ConstraintKind,
    pub label: String,
    pub expr: Expr,
    pub points: Vec<Vec<f64>>,
}

/// `expr >= 0` enforced by a squared-hinge penalty with factor `penalty`.
#[derive(Debug, Clone)]
pub struct InequalityConstraint {
    pub label: String,
    pub expr: Expr,
    pub penalty: f64,
    pub points: Vec<Vec<f64>>,
}

impl InequalityConstraint {
    pub fn new(label: impl Into<String>, expr: Expr, penalty: f64, points: Vec<Vec<f64>>) -> Result<Self> {
        if !(penalty > 0.0 && penalty.is_finite()) {
            return Err(Error::InvalidInput(format!("penalty must be positive, got {penalty}")));
        }
        Ok(Self { label: label.into(), expr, penalty, points })
    }
}

#[derive(Debug, Clone, Default)]
pub struct ConstraintSet {
    pub equalities: Vec<EqualityConstraint>,
    pub inequalities: Vec<InequalityConstraint>,
}

impl ConstraintSet {
    pub fn is_empty(&self) -> bool {
        self.equalities.is_empty() && self.inequalities.is_empty()
    }

    pub fn has_kind(&self, kind: ConstraintKind) -> bool {
        self.equalities.iter().any(|c| c.kind == kind && !c.points.is_empty())
    }

    pub fn validate(&self, dims: usize) -> Result<()> {
        for c in &self.equalities {
            c.expr.validate(dims, ExprLimits::default())?;
            if c.points.iter().any(|p| p.len() != dims) {
                return Err(Error::DimensionMismatch { expected: dims, got: c.points[0].len() });
            }
        }
        for c in &self.inequalities {
            c.expr.validate(dims, ExprLimits::default())?;
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Side {
    Lower,
    Upper,
}

/// Boundary condition on the face `x_dim = bound(side)`.
#[derive(Debug, Clone)]
pub struct BoundarySpec {
    pub dim: usize,
    pub side: Side,
    pub expr: Expr,
}

/// Everything needed to place PDE, IC and BC collocation points.
#[derive(Debug, Clone)]
pub struct PdeProblem {
    pub marginals: Vec<Marginal>,
    pub n_physical: usize,
    pub time_dim: Option<usize>,
    pub pde: Option<Expr>,
    pub ic: Option<Expr>,
    pub bcs: Vec<BoundarySpec>,
    pub n_domain: usize,
    pub n_ic: usize,
    pub n_bc: usize,
    pub seed: u64,
}

fn face_value(m: &Marginal, side: Side) -> Result<f64> {
    match (*m, side) {
        (Marginal::Uniform { lower, .. }, Side::Lower) => Ok(lower),
        (Marginal::Uniform { upper, .. }, Side::Upper) => Ok(upper),
        (Marginal::Normal { .. }, _) => {
            Err(Error::InvalidInput("boundary faces need a bounded dimension".into()))
        }
    }
}

/// PDE constraint on `n_domain` interior LHS points, IC on `n_ic` points at
/// the initial time and BCs with `n_bc` points split evenly over the faces.
pub fn build_pde_constraints(problem: &PdeProblem) -> Result<Vec<EqualityConstraint>> {
    let dims = problem.marginals.len();
    let mut out = Vec::new();

    if let Some(pde) = &problem.pde {
        if problem.n_domain > 0 {
            pde.validate(dims, ExprLimits::default())?;
            let mut rng = substream(problem.seed, "domain");
            out.push(EqualityConstraint {
                kind: ConstraintKind::Pde,
                label: "pde".into(),
                expr: pde.clone(),
                points: lhs_marginals(problem.n_domain, &problem.marginals, &mut rng),
            });
        }
    }

    if let Some(ic) = &problem.ic {
        if problem.n_ic > 0 {
            let t = problem
                .time_dim
                .ok_or_else(|| Error::InvalidInput("an initial condition needs a time dimension".into()))?;
            ic.validate(dims, ExprLimits::default())?;
            let t0 = face_value(&problem.marginals[t], Side::Lower)?;
            let mut rng = substream(problem.seed, "IC");
            out.push(EqualityConstraint {
                kind: ConstraintKind::Ic,
                label: "ic".into(),
                expr: ic.clone(),
                points: lhs_on_face(problem.n_ic, &problem.marginals, t, t0, &mut rng),
            });
        }
    }

    if problem.n_bc > 0 {
        for dim in 0..problem.n_physical {
            if Some(dim) == problem.time_dim {
                continue;
            }
            for side in [Side::Lower, Side::Upper] {
                if !problem.bcs.iter().any(|b| b.dim == dim && b.side == side) {
                    return Err(Error::InvalidInput(format!(
                        "missing boundary specification for dimension {dim} ({})",
                        if side == Side::Lower { "lower" } else { "upper" }
                    )));
                }
            }
        }
        let faces = problem.bcs.len();
        for (i, bc) in problem.bcs.iter().enumerate() {
            let n = problem.n_bc / faces + usize::from(i < problem.n_bc % faces);
            if n == 0 {
                continue;
            }
            bc.expr.validate(dims, ExprLimits::default())?;
            let value = face_value(&problem.marginals[bc.dim], bc.side)?;
            let mut rng = substream(problem.seed, &format!("BC/{i}"));
            out.push(EqualityConstraint {
                kind: ConstraintKind::Bc,
                label: format!("bc{i}"),
                expr: bc.expr.clone(),
                points: lhs_on_face(n, &problem.marginals, bc.dim, value, &mut rng),
            });
        }
    }
    Ok(out)
}

/// Inequality constraint on its own LHS point set (stream `ineq/<index>`).
pub fn build_inequality(
    label: &str,
    expr: Expr,
    penalty: f64,
    n_points: usize,
    marginals: &[Marginal],
    seed: u64,
    index: usize,
) -> Result<InequalityConstraint> {
    expr.validate(marginals.len(), ExprLimits::default())?;
    let mut rng = substream(seed, &format!("ineq/{index}"));
    let points = lhs_marginals(n_points, marginals, &mut rng);
    InequalityConstraint::new(label, expr, penalty, points)
}
