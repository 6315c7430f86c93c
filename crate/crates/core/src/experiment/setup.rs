//! Turns a configuration into marginals, constraints, a candidate model and
//! a reference solver for model evaluations.

use std::sync::Arc;

use rand::Rng;
use rayon::prelude::*;

use super::config::{BeamBlock, ExperimentConfig, FaceSide, PdeBlock, Problem, SolverKind};
use crate::basis::{DomainScaling, Marginal, TensorBasis};
use crate::constraints::{
    build_inequality, build_pde_constraints, parse_expr, BoundarySpec, CompiledExpr, ConstraintSet, Expr,
    ParseContext, PdeProblem, Side, SourceTerm,
};
use crate::error::{Error, Result};
use crate::randomfield::{kl_expand, KlExpansion};
use crate::reference::{beam_solve, burgers_solve, heat2d_solve, BeamProblem, BurgersParams, GridSolution, HeatParams};
use crate::sampling::{lhs_marginals, substream};
use crate::surrogate::SurrogateModel;
use crate::trainer::{Evaluation, TrainingData};

/// A constrained surrogate problem (PDE or beam).
#[derive(Debug, Clone)]
pub struct Setup {
    pub dim_names: Vec<String>,
    pub marginals: Vec<Marginal>,
    pub n_physical: usize,
    pub time_dim: Option<usize>,
    pub constraints: ConstraintSet,
    /// Initial-condition residual, used to extract the reference initial state.
    pub ic: Option<Expr>,
    pub kl: Option<Arc<KlExpansion>>,
}

impl Setup {
    pub fn n_stochastic(&self) -> usize {
        self.marginals.len() - self.n_physical
    }

    pub fn physical_marginals(&self) -> &[Marginal] {
        &self.marginals[..self.n_physical]
    }

    pub fn stochastic_marginals(&self) -> &[Marginal] {
        &self.marginals[self.n_physical..]
    }

    /// Zero model over the total-degree basis of order `p`.
    pub fn candidate(&self, p: usize, seed: u64) -> Result<SurrogateModel> {
        let scaling = DomainScaling::new(self.marginals.clone())?;
        let basis = TensorBasis::total_degree(scaling, p)?;
        let mut model = SurrogateModel::zeros(basis, self.dim_names.clone(), self.n_physical)?;
        model.metadata.seed = seed;
        Ok(model)
    }
}

pub fn build_setup(cfg: &ExperimentConfig) -> Result<Setup> {
    match &cfg.problem {
        Problem::Pde(p) => pde_setup(p, cfg.seed),
        Problem::Beam(b) => beam_setup(b, cfg.seed),
        Problem::Eos(_) => Err(Error::Config("equation-of-state problems have no PDE setup".into())),
    }
}

fn pde_setup(block: &PdeBlock, seed: u64) -> Result<Setup> {
    let dim_names: Vec<String> = block.dims.iter().map(|d| d.name.clone()).collect();
    let marginals = block.dims.iter().map(|d| d.marginal()).collect::<Result<Vec<_>>>()?;
    let n_physical = block.dims.iter().filter(|d| !d.stochastic).count();
    let mut ctx = ParseContext::new(dim_names.clone());
    for (k, v) in &block.params {
        ctx = ctx.with_param(k, *v);
    }
    let parse = |what: &str, src: &str| {
        parse_expr(src, &ctx).map_err(|e| Error::Config(format!("{what}: {e}")))
    };
    let pde = block.pde.as_deref().map(|s| parse("pde", s)).transpose()?;
    let ic = block.ic.as_deref().map(|s| parse("ic", s)).transpose()?;
    let mut bcs = Vec::new();
    for bc in &block.bc {
        let dim = dim_names
            .iter()
            .position(|d| *d == bc.dim)
            .filter(|&i| i < n_physical)
            .ok_or_else(|| Error::Config(format!("bc on unknown physical dimension {:?}", bc.dim)))?;
        let side = match bc.side {
            FaceSide::Lower => Side::Lower,
            FaceSide::Upper => Side::Upper,
        };
        bcs.push(BoundarySpec { dim, side, expr: parse("bc", &bc.expr)? });
    }
    let time_dim = block.time.as_ref().and_then(|t| dim_names.iter().position(|d| d == t));
    let problem = PdeProblem {
        marginals: marginals.clone(),
        n_physical,
        time_dim,
        pde,
        ic: ic.clone(),
        bcs,
        n_domain: block.collocation.domain,
        n_ic: block.collocation.ic,
        n_bc: block.collocation.bc,
        seed,
    };
    let mut constraints = ConstraintSet { equalities: build_pde_constraints(&problem)?, inequalities: vec![] };
    for (i, q) in block.inequality.iter().enumerate() {
        let expr = parse(&q.label, &q.expr)?;
        constraints
            .inequalities
            .push(build_inequality(&q.label, expr, q.penalty, q.points, &marginals, seed, i)?);
    }
    Ok(Setup { dim_names, marginals, n_physical, time_dim, constraints, ic, kl: None })
}

/// KL expansion of the modulus field.
pub fn beam_field(block: &BeamBlock) -> Result<KlExpansion> {
    kl_expand(block.modulus, block.cov * block.modulus, block.corr_length, block.length, block.kl_terms, block.kl_grid)
}

/// Beam on `x` and `xi_1..xi_r`. The constraint is the bending equation
/// divided by the mean stiffness `E_bar I`, so both sides are curvatures:
/// `(E / E_bar) w'' - q x (x - L) / (2 E_bar I) = 0`, with `w = 0` at both
/// supports.
fn beam_setup(block: &BeamBlock, seed: u64) -> Result<Setup> {
    let kl = Arc::new(beam_field(block)?);
    let r = block.kl_terms;
    let mut dim_names = vec!["x".to_string()];
    dim_names.extend((1..=r).map(|i| format!("xi{i}")));
    let mut marginals = vec![Marginal::Uniform { lower: 0.0, upper: block.length }];
    marginals.extend(std::iter::repeat_n(Marginal::Normal { mean: 0.0, std_dev: 1.0 }, r));

    let field = kl.clone();
    let ebar = block.modulus;
    let stiffness = SourceTerm::new("stiffness", move |x| field.field_at(&x[1..], x[0]).unwrap_or(f64::NAN) / ebar);
    let (q, l, ei) = (block.load, block.length, block.modulus * block.inertia);
    let moment = SourceTerm::new("moment", move |x| 0.5 * q * x[0] * (x[0] - l) / ei);
    let ctx = ParseContext::new(dim_names.clone()).with_source(stiffness).with_source(moment);
    let pde = parse_expr("(- (* (src stiffness) (d u x x)) (src moment))", &ctx)?;
    let bc = parse_expr("u", &ctx)?;
    let problem = PdeProblem {
        marginals: marginals.clone(),
        n_physical: 1,
        time_dim: None,
        pde: Some(pde),
        ic: None,
        bcs: vec![
            BoundarySpec { dim: 0, side: Side::Lower, expr: bc.clone() },
            BoundarySpec { dim: 0, side: Side::Upper, expr: bc },
        ],
        n_domain: block.collocation.domain,
        n_ic: 0,
        n_bc: block.collocation.bc,
        seed,
    };
    let constraints = ConstraintSet { equalities: build_pde_constraints(&problem)?, inequalities: vec![] };
    Ok(Setup { dim_names, marginals, n_physical: 1, time_dim: None, constraints, ic: None, kl: Some(kl) })
}

enum Coefficient {
    Fixed(f64),
    /// Index into the stochastic inputs.
    Random(usize),
}

/// Reference solver for one draw of the stochastic inputs.
pub struct ReferenceModel {
    solver: SolverKind,
    n: usize,
    nt: usize,
    t_end: f64,
    coefficient: Coefficient,
    ic: Option<CompiledExpr>,
    dims: usize,
    n_physical: usize,
    beam: Option<(BeamBlock, Arc<KlExpansion>)>,
    /// Identifies everything the solution depends on except the random draw.
    pub descriptor: String,
}

fn bounds(m: &Marginal) -> Option<(f64, f64)> {
    match *m {
        Marginal::Uniform { lower, upper } => Some((lower, upper)),
        Marginal::Normal { .. } => None,
    }
}

impl ReferenceModel {
    pub fn new(cfg: &ExperimentConfig, setup: &Setup) -> Result<Self> {
        let r = cfg
            .reference
            .as_ref()
            .ok_or_else(|| Error::Config("this command needs a [reference] block".into()))?;
        let unit = |d: usize| bounds(&setup.marginals[d]) == Some((0.0, 1.0));
        let mut descriptor = format!("{:?}|n={}|", r.solver, r.n);
        let (coefficient, t_end, ic) = match (&cfg.problem, r.solver) {
            (Problem::Pde(block), SolverKind::Heat2d | SolverKind::Burgers) => {
                let space = if r.solver == SolverKind::Heat2d { 2 } else { 1 };
                let t = setup.time_dim.ok_or_else(|| Error::Config("reference solver needs a time dimension".into()))?;
                if setup.n_physical != space + 1 || t != space || !(0..space).all(unit) {
                    return Err(Error::Config(format!(
                        "{:?} reference expects physical dims (space on [0, 1]^{space}, then time)",
                        r.solver
                    )));
                }
                let (t0, t_end) = bounds(&setup.marginals[t]).expect("physical dims are uniform");
                if t0 != 0.0 {
                    return Err(Error::Config("reference solvers start at t = 0".into()));
                }
                let name = r
                    .coefficient
                    .as_deref()
                    .ok_or_else(|| Error::Config("reference.coefficient is required".into()))?;
                let coefficient = if let Some(v) = block.params.get(name) {
                    descriptor += &format!("{name}={v}|");
                    Coefficient::Fixed(*v)
                } else if let Some(i) = setup.dim_names[setup.n_physical..].iter().position(|d| d == name) {
                    Coefficient::Random(i)
                } else {
                    return Err(Error::Config(format!("coefficient {name:?} is neither a parameter nor a stochastic dim")));
                };
                let ic_expr =
                    setup.ic.as_ref().ok_or_else(|| Error::Config("reference solver needs an initial condition".into()))?;
                let ic = ic_expr.compile(setup.marginals.len())?;
                descriptor += &format!("nt={}|t_end={t_end}|ic={ic_expr}", r.nt);
                (coefficient, t_end, Some(ic))
            }
            (Problem::Beam(b), SolverKind::Beam) => {
                descriptor += &format!("{b:?}");
                (Coefficient::Fixed(0.0), 0.0, None)
            }
            _ => return Err(Error::Config("reference.solver does not match the problem".into())),
        };
        let beam = match &cfg.problem {
            Problem::Beam(b) => Some((b.clone(), setup.kl.clone().expect("beam setup has a field"))),
            _ => None,
        };
        let model = Self {
            solver: r.solver,
            n: r.n,
            nt: r.nt,
            t_end,
            coefficient,
            ic,
            dims: setup.marginals.len(),
            n_physical: setup.n_physical,
            beam,
            descriptor,
        };
        model.check_ic(setup)?;
        Ok(model)
    }

    /// The initial condition must read `u - g(x)`.
    fn check_ic(&self, setup: &Setup) -> Result<()> {
        let Some(ic) = &self.ic else { return Ok(()) };
        let mut x: Vec<f64> = setup.marginals.iter().map(|m| m.unstandardize(0.3)).collect();
        x[setup.time_dim.expect("checked")] = 0.0;
        let mut sens = vec![0.0; ic.terms().len()];
        let zero = vec![0.0; ic.terms().len()];
        ic.forward(&x, &zero, &mut sens);
        let ok = ic.terms().len() == 1 && ic.terms()[0].iter().all(|&o| o == 0) && (sens[0] - 1.0).abs() < 1e-12;
        if !ok {
            return Err(Error::Config("the reference solver needs an initial condition of the form u - g".into()));
        }
        Ok(())
    }

    fn initial_value(&self, phys: &[f64], xi: &[f64]) -> f64 {
        let ic = self.ic.as_ref().expect("PDE reference has an IC");
        let mut x = vec![0.0; self.dims];
        x[..phys.len()].copy_from_slice(phys);
        x[self.n_physical..].copy_from_slice(xi);
        let zero = [0.0];
        let mut sens = [0.0];
        -ic.forward(&x, &zero, &mut sens)
    }

    fn coefficient(&self, xi: &[f64]) -> f64 {
        match self.coefficient {
            Coefficient::Fixed(v) => v,
            Coefficient::Random(i) => xi[i],
        }
    }

    /// Solution on the solver grid, axes in physical-dimension order.
    /// `save_every` thins the stored time levels.
    pub fn solve(&self, xi: &[f64], save_every: usize) -> Result<GridSolution> {
        match self.solver {
            SolverKind::Heat2d => {
                let mut p = HeatParams::new(self.coefficient(xi), self.n, self.nt, self.t_end);
                p.save_every = save_every.clamp(1, self.nt);
                heat2d_solve(&p, &|x, y| self.initial_value(&[x, y], xi))
            }
            SolverKind::Burgers => {
                let mut p = BurgersParams::new(self.coefficient(xi), self.n, self.nt, self.t_end);
                p.save_every = save_every.clamp(1, self.nt);
                burgers_solve(&p, &|x| self.initial_value(&[x], xi))
            }
            SolverKind::Beam => {
                let (b, kl) = self.beam.as_ref().expect("beam reference");
                let mut problem = BeamProblem::uniform(b.length, b.load, b.inertia, b.modulus, self.n);
                let nodes = problem.nodes();
                problem.stiffness = nodes.iter().map(|&x| kl.field_at(xi, x)).collect::<Result<_>>()?;
                let w = beam_solve(&problem)?;
                GridSolution::new(vec!["x".into()], vec![nodes], w)
            }
        }
    }

    /// Default thinning so that about 100 time levels are kept.
    pub fn default_stride(&self) -> usize {
        (self.nt / 100).max(1)
    }
}

/// `n_eval` model evaluations at LHS draws of the stochastic inputs, each
/// observed at `n_points` LHS points of the physical domain.
pub fn model_evaluations(
    setup: &Setup,
    reference: &ReferenceModel,
    n_eval: usize,
    n_points: usize,
    seed: u64,
) -> Result<TrainingData> {
    if n_eval == 0 || n_points == 0 {
        return Ok(TrainingData::default());
    }
    let draws = if setup.n_stochastic() == 0 {
        if n_eval != 1 {
            return Err(Error::Config("a deterministic problem has exactly one model evaluation".into()));
        }
        vec![vec![]]
    } else {
        lhs_marginals(n_eval, setup.stochastic_marginals(), &mut substream(seed, "data/xi"))
    };
    let evaluations = draws
        .par_iter()
        .enumerate()
        .map(|(j, xi)| {
            let sol = reference.solve(xi, reference.default_stride())?;
            let mut rng = substream(seed, &format!("data/points/{j}"));
            let phys = lhs_marginals(n_points, setup.physical_marginals(), &mut rng);
            let mut points = Vec::with_capacity(n_points);
            let mut responses = Vec::with_capacity(n_points);
            for p in phys {
                responses.push(sol.interpolate(&p)?);
                let mut full = p;
                full.extend_from_slice(xi);
                points.push(full);
            }
            Ok(Evaluation { points, responses })
        })
        .collect::<Result<Vec<_>>>()?;
    TrainingData::new(evaluations)
}

/// Tensor grid with `n` evenly spaced points per physical axis; axes listed
/// in `fixed` are held at the given value instead.
pub fn physical_grid(setup: &Setup, n: usize, fixed: &[(usize, f64)]) -> Vec<Vec<f64>> {
    let axes: Vec<Vec<f64>> = (0..setup.n_physical)
        .map(|d| match fixed.iter().find(|(k, _)| *k == d) {
            Some(&(_, v)) => vec![v],
            None => {
                let (a, b) = bounds(&setup.marginals[d]).expect("physical dims are uniform");
                crate::reference::linspace(a, b, n - 1)
            }
        })
        .collect();
    let mut out = vec![vec![]];
    for axis in &axes {
        out = out
            .into_iter()
            .flat_map(|p: Vec<f64>| {
                axis.iter().map(move |&v| {
                    let mut q = p.clone();
                    q.push(v);
                    q
                })
            })
            .collect();
    }
    out
}

/// Draw of the stochastic inputs for Monte Carlo.
pub fn draw_stochastic<R: Rng + ?Sized>(setup: &Setup, rng: &mut R) -> Vec<f64> {
    crate::sampling::random_marginals(1, setup.stochastic_marginals(), rng).remove(0)
}
