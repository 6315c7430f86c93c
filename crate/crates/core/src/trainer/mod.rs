//! The constrained objective and its minimization.

pub mod bfgs;

use web_time::Instant;

use crate::constraints::{hinge, ConstraintKind, ConstraintSet, ResidualBatch};
use crate::error::{check_dims, Error, Result};
use crate::surrogate::{build_design_matrix, ols_solve, SurrogateModel};

pub use bfgs::{BfgsOptions, Termination};

/// Model evaluations used as training data. Each evaluation holds the
/// responses at its own physical points (`n_t` may differ between them).
#[derive(Debug, Clone, Default)]
pub struct TrainingData {
    evaluations: Vec<Evaluation>,
}

#[derive(Debug, Clone)]
pub struct Evaluation {
    /// Full input points: physical coordinates followed by the stochastic draw.
    pub points: Vec<Vec<f64>>,
    pub responses: Vec<f64>,
}

impl TrainingData {
    pub fn new(evaluations: Vec<Evaluation>) -> Result<Self> {
        for e in &evaluations {
            check_dims(e.points.len(), e.responses.len())?;
            if e.points.is_empty() {
                return Err(Error::InvalidInput("model evaluation without points".into()));
            }
        }
        Ok(Self { evaluations })
    }

    /// All points treated as one evaluation.
    pub fn from_points(points: Vec<Vec<f64>>, responses: Vec<f64>) -> Result<Self> {
        if points.is_empty() {
            return Ok(Self::default());
        }
        Self::new(vec![Evaluation { points, responses }])
    }

    pub fn evaluations(&self) -> &[Evaluation] {
        &self.evaluations
    }

    pub fn is_empty(&self) -> bool {
        self.evaluations.is_empty()
    }

    pub fn n_points(&self) -> usize {
        self.evaluations.iter().map(|e| e.points.len()).sum()
    }

    /// Points, responses and the weight `1 / (N n_t)` of every point.
    pub fn flattened(&self) -> (Vec<Vec<f64>>, Vec<f64>, Vec<f64>) {
        let n_eval = self.evaluations.len() as f64;
        let mut pts = Vec::new();
        let mut ys = Vec::new();
        let mut ws = Vec::new();
        for e in &self.evaluations {
            let w = 1.0 / (n_eval * e.points.len() as f64);
            pts.extend(e.points.iter().cloned());
            ys.extend_from_slice(&e.responses);
            ws.extend(std::iter::repeat_n(w, e.points.len()));
        }
        (pts, ys, ws)
    }
}

/// Index of each loss component in the weight and loss arrays.
pub const T: usize = 0;
pub const PDE: usize = 1;
pub const IC: usize = 2;
pub const BC: usize = 3;
pub const COMPONENT_NAMES: [&str; 4] = ["T", "PDE", "IC", "BC"];

fn slot(kind: ConstraintKind) -> usize {
    match kind {
        ConstraintKind::Pde => PDE,
        ConstraintKind::Ic => IC,
        ConstraintKind::Bc => BC,
    }
}

/// Component losses, penalty and the weights applied to them.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LossBreakdown {
    pub l_t: f64,
    pub l_pde: f64,
    pub l_ic: f64,
    pub l_bc: f64,
    pub penalty: f64,
    pub weights: [f64; 4],
    pub active: [bool; 4],
}

impl LossBreakdown {
    pub fn components(&self) -> [f64; 4] {
        [self.l_t, self.l_pde, self.l_ic, self.l_bc]
    }

    /// `sum_i lambda_i L_i + penalty`.
    pub fn total(&self) -> f64 {
        self.components()
            .iter()
            .zip(&self.weights)
            .map(|(l, w)| l * w)
            .sum::<f64>()
            + self.penalty
    }

    /// Unweighted sum of the active components plus penalty.
    pub fn unweighted_total(&self) -> f64 {
        self.components().iter().sum::<f64>() + self.penalty
    }
}

/// `lambda_i = L_i / sum_active L_j`; inactive components get 0 and an
/// all-zero active set gets uniform weights.
pub fn adaptive_weights(losses: [f64; 4], active: [bool; 4]) -> Result<[f64; 4]> {
    let n_active = active.iter().filter(|&&a| a).count();
    if n_active == 0 {
        return Err(Error::InvalidInput("no active loss component".into()));
    }
    let sum: f64 = losses.iter().zip(&active).filter(|(_, &a)| a).map(|(l, _)| l).sum();
    let mut w = [0.0; 4];
    for i in 0..4 {
        if active[i] {
            w[i] = if sum > 0.0 { losses[i] / sum } else { 1.0 / n_active as f64 };
        }
    }
    Ok(w)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Weighting {
    /// Recomputed from the component losses after every accepted step.
    Adaptive,
    /// Constant weights for `[T, PDE, IC, BC]` (ignored for absent components).
    Fixed([f64; 4]),
}

#[derive(Debug, Clone, PartialEq)]
pub enum Init {
    /// OLS on the data when there are at least `P` data points, else zeros.
    Auto,
    Zero,
    Given(Vec<f64>),
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainConfig {
    pub grad_tol: f64,
    /// Defaults to `5000 * ceil(P / 100)`.
    pub max_iterations: Option<usize>,
    pub init: Init,
    pub weighting: Weighting,
    /// Step of the adaptive weights toward `L_i / sum L`, in (0, 1]. With
    /// full replacement and a quasi-Newton optimizer the weights can
    /// flip between two states indefinitely; partial steps settle them.
    pub weight_smoothing: f64,
    /// Extra rounds with all penalty factors multiplied by `penalty_growth`
    /// while inequality violations exceed `violation_tol`.
    pub penalty_rounds: usize,
    pub penalty_growth: f64,
    pub violation_tol: f64,
    pub record_history: bool,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            grad_tol: 1e-8,
            max_iterations: None,
            init: Init::Auto,
            weighting: Weighting::Adaptive,
            weight_smoothing: 0.1,
            penalty_rounds: 3,
            penalty_growth: 10.0,
            violation_tol: 1e-6,
            record_history: false,
        }
    }
}

impl TrainConfig {
    pub fn iteration_cap(&self, p: usize) -> usize {
        self.max_iterations.unwrap_or(5000 * p.div_ceil(100).max(1))
    }
}

/// Per-iteration record for convergence logs.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct IterationRecord {
    pub iteration: usize,
    pub objective: f64,
    pub losses: LossBreakdown,
}

#[derive(Debug, Clone)]
pub struct TrainReport {
    pub iterations: usize,
    pub termination: Termination,
    /// False when the iteration cap stopped the optimizer.
    pub converged: bool,
    pub losses: LossBreakdown,
    pub grad_inf: f64,
    pub wall_time_s: f64,
    pub penalty_rounds_used: usize,
    /// Most negative inequality residual (0 when all are satisfied).
    pub max_violation: f64,
    pub history: Vec<IterationRecord>,
    /// Objective at each accepted iterate of the final round.
    pub accepted_values: Vec<f64>,
    /// `(before, after)` objective of each step under frozen weights.
    pub frozen_steps: Vec<(f64, f64)>,
}

/// The PC² objective over fixed data and collocation sets.
#[derive(Debug, Clone)]
pub struct Objective {
    p: usize,
    data: Option<ResidualBatch>,
    equalities: Vec<(usize, ResidualBatch)>,
    counts: [usize; 4],
    inequalities: Vec<(f64, ResidualBatch)>,
    active: [bool; 4],
    weighting: Weighting,
    weights: [f64; 4],
    smoothing: f64,
    penalty_scale: f64,
}

impl Objective {
    pub fn new(
        model: &SurrogateModel,
        data: &TrainingData,
        constraints: &ConstraintSet,
        weighting: Weighting,
    ) -> Result<Self> {
        let basis = model.basis();
        constraints.validate(model.dims())?;
        let mut counts = [0usize; 4];
        let data_batch = if data.is_empty() {
            None
        } else {
            let (pts, ys, ws) = data.flattened();
            counts[T] = pts.len();
            Some(ResidualBatch::data(basis, &pts, &ys)?.with_weights(ws)?)
        };
        let mut equalities = Vec::new();
        for c in &constraints.equalities {
            if c.points.is_empty() {
                continue;
            }
            counts[slot(c.kind)] += c.points.len();
            equalities.push((slot(c.kind), ResidualBatch::new(&c.expr, basis, &c.points)?));
        }
        let mut inequalities = Vec::new();
        for c in &constraints.inequalities {
            if c.points.is_empty() {
                continue;
            }
            let n = c.points.len() as f64;
            inequalities.push((c.penalty / n, ResidualBatch::new(&c.expr, basis, &c.points)?));
        }
        let active = counts.map(|n| n > 0);
        if !active.iter().any(|&a| a) && inequalities.is_empty() {
            return Err(Error::InvalidInput(
                "nothing to train on: no data and no constraints".into(),
            ));
        }
        let weights = match weighting {
            Weighting::Fixed(w) => {
                let mut out = [0.0; 4];
                for i in 0..4 {
                    if active[i] {
                        out[i] = w[i];
                    }
                }
                out
            }
            Weighting::Adaptive => {
                if active.iter().any(|&a| a) {
                    adaptive_weights([0.0; 4], active)?
                } else {
                    [0.0; 4]
                }
            }
        };
        Ok(Self {
            p: model.len(),
            data: data_batch,
            equalities,
            counts,
            inequalities,
            active,
            weighting,
            weights,
            smoothing: 1.0,
            penalty_scale: 1.0,
        })
    }

    pub fn active(&self) -> [bool; 4] {
        self.active
    }

    pub fn weights(&self) -> [f64; 4] {
        self.weights
    }

    /// Fraction of the way each adaptive update moves the weights toward
    /// their loss-proportional target (1 = replace outright).
    pub fn set_smoothing(&mut self, s: f64) {
        self.smoothing = s;
    }

    pub fn set_penalty_scale(&mut self, s: f64) {
        self.penalty_scale = s;
    }

    /// Component losses, penalty and their gradients (unweighted).
    fn components(&self, c: &[f64], with_grad: bool) -> ([f64; 4], [Vec<f64>; 4], f64, Vec<f64>) {
        let sq = |r: f64| (r * r, 2.0 * r);
        let mut losses = [0.0; 4];
        let mut grads: [Vec<f64>; 4] = std::array::from_fn(|_| Vec::new());
        if with_grad {
            for (i, g) in grads.iter_mut().enumerate() {
                if self.active[i] {
                    *g = vec![0.0; self.p];
                }
            }
        }
        if let Some(d) = &self.data {
            losses[T] = if with_grad {
                d.accumulate(c, sq, &mut grads[T])
            } else {
                d.value(c, |r| r * r)
            };
        }
        for (k, b) in &self.equalities {
            losses[*k] += if with_grad {
                b.accumulate(c, sq, &mut grads[*k])
            } else {
                b.value(c, |r| r * r)
            };
        }
        for k in PDE..=BC {
            if self.counts[k] > 0 {
                let inv = 1.0 / self.counts[k] as f64;
                losses[k] *= inv;
                grads[k].iter_mut().for_each(|v| *v *= inv);
            }
        }
        let mut pen = 0.0;
        let mut pen_grad = if with_grad { vec![0.0; self.p] } else { Vec::new() };
        for (scale, b) in &self.inequalities {
            let s = scale * self.penalty_scale;
            let hsq = |r: f64| {
                let h = hinge(r);
                (s * h * h, s * 2.0 * h)
            };
            pen += if with_grad {
                b.accumulate(c, hsq, &mut pen_grad)
            } else {
                b.value(c, |r| hsq(r).0)
            };
        }
        (losses, grads, pen, pen_grad)
    }

    pub fn losses(&self, c: &[f64]) -> LossBreakdown {
        let (l, _, pen, _) = self.components(c, false);
        self.breakdown(l, pen, self.weights)
    }

    fn breakdown(&self, l: [f64; 4], penalty: f64, weights: [f64; 4]) -> LossBreakdown {
        LossBreakdown {
            l_t: l[T],
            l_pde: l[PDE],
            l_ic: l[IC],
            l_bc: l[BC],
            penalty,
            weights,
            active: self.active,
        }
    }

    /// Objective and gradient under the current (frozen) weights.
    pub fn value_and_grad(&self, c: &[f64]) -> (f64, Vec<f64>) {
        let (l, grads, pen, pen_grad) = self.components(c, true);
        let mut g = pen_grad;
        let mut f = pen;
        for k in 0..4 {
            if self.active[k] && self.weights[k] != 0.0 {
                f += self.weights[k] * l[k];
                g.iter_mut().zip(&grads[k]).for_each(|(a, b)| *a += self.weights[k] * b);
            }
        }
        (f, g)
    }

    /// Recomputes adaptive weights at `c`; no-op for fixed weights.
    pub fn reweight(&mut self, c: &[f64]) -> Result<bool> {
        if self.weighting != Weighting::Adaptive || !self.active.iter().any(|&a| a) {
            return Ok(false);
        }
        let l = self.losses(c).components();
        let target = adaptive_weights(l, self.active)?;
        let b = self.smoothing;
        let w: [f64; 4] = std::array::from_fn(|i| (1.0 - b) * self.weights[i] + b * target[i]);
        let changed = w != self.weights;
        self.weights = w;
        Ok(changed)
    }

    /// Most negative inequality residual over all inequality points.
    pub fn max_violation(&self, c: &[f64]) -> f64 {
        self.inequalities
            .iter()
            .flat_map(|(_, b)| b.residuals(c))
            .fold(0.0, |m, r| m.min(hinge(r)))
    }

    pub fn has_inequalities(&self) -> bool {
        !self.inequalities.is_empty()
    }
}

struct Runner<'a> {
    objective: &'a mut Objective,
    history: Option<Vec<IterationRecord>>,
    iteration: usize,
}

impl bfgs::Problem for Runner<'_> {
    fn eval(&mut self, x: &[f64]) -> Result<(f64, Vec<f64>)> {
        Ok(self.objective.value_and_grad(x))
    }

    fn accepted(&mut self, x: &[f64]) -> Result<bool> {
        self.iteration += 1;
        let changed = self.objective.reweight(x)?;
        if let Some(h) = &mut self.history {
            let losses = self.objective.losses(x);
            h.push(IterationRecord { iteration: self.iteration, objective: losses.total(), losses });
        }
        Ok(changed)
    }
}

/// Minimizes the PC² objective over the coefficients of `model` (whose
/// coefficients are ignored unless `config.init` says otherwise).
pub fn train(
    model: &SurrogateModel,
    config: &TrainConfig,
    data: &TrainingData,
    constraints: &ConstraintSet,
) -> Result<(SurrogateModel, TrainReport)> {
    let start = Instant::now();
    if !(config.grad_tol > 0.0) {
        return Err(Error::InvalidInput("gradient tolerance must be positive".into()));
    }
    if !(config.weight_smoothing > 0.0 && config.weight_smoothing <= 1.0) {
        return Err(Error::InvalidInput(format!("weight smoothing must be in (0, 1], got {}", config.weight_smoothing)));
    }
    let p = model.len();
    let mut objective = Objective::new(model, data, constraints, config.weighting)?;
    objective.set_smoothing(config.weight_smoothing);

    let mut x = match &config.init {
        Init::Zero => vec![0.0; p],
        Init::Given(c) => {
            check_dims(p, c.len())?;
            c.clone()
        }
        Init::Auto => warm_start(model, data).unwrap_or_else(|| vec![0.0; p]),
    };

    let opts = BfgsOptions {
        grad_tol: config.grad_tol,
        max_iterations: config.iteration_cap(p),
        ..BfgsOptions::default()
    };

    let mut rounds = 0;
    let mut history = Vec::new();
    let mut total_iterations = 0;
    let result = loop {
        objective.reweight(&x)?;
        let mut runner = Runner {
            objective: &mut objective,
            history: config.record_history.then(Vec::new),
            iteration: total_iterations,
        };
        let r = bfgs::minimize(&mut runner, x.clone(), &opts)?;
        if let Some(h) = runner.history.take() {
            history.extend(h);
        }
        total_iterations += r.iterations;
        x = r.x.clone();
        let violation = objective.max_violation(&x);
        if objective.has_inequalities() && violation < -config.violation_tol && rounds < config.penalty_rounds {
            rounds += 1;
            objective.set_penalty_scale(config.penalty_growth.powi(rounds as i32));
            continue;
        }
        break r;
    };

    let losses = objective.losses(&x);
    let mut trained = model.with_coefficients(x.clone())?;
    trained.metadata = model.metadata.clone();
    let report = TrainReport {
        iterations: total_iterations,
        termination: result.termination,
        converged: result.termination != Termination::IterationCap,
        losses,
        grad_inf: result.grad_inf,
        wall_time_s: start.elapsed().as_secs_f64(),
        penalty_rounds_used: rounds,
        max_violation: objective.max_violation(&x),
        history,
        accepted_values: result.accepted_values,
        frozen_steps: result.frozen_steps,
    };
    Ok((trained, report))
}

/// OLS on the training data when it determines every coefficient.
fn warm_start(model: &SurrogateModel, data: &TrainingData) -> Option<Vec<f64>> {
    if data.n_points() < model.len() {
        return None;
    }
    let (pts, ys, _) = data.flattened();
    let a = build_design_matrix(model.basis(), &pts, None).ok()?;
    ols_solve(&a, &ys).ok()
}

/// Loss breakdown of `model` with adaptive weights evaluated at its
/// coefficients.
pub fn compute_losses(
    model: &SurrogateModel,
    data: &TrainingData,
    constraints: &ConstraintSet,
) -> Result<LossBreakdown> {
    let mut objective = Objective::new(model, data, constraints, Weighting::Adaptive)?;
    objective.reweight(model.coefficients())?;
    Ok(objective.losses(model.coefficients()))
}
