//! Sparse PC²: rank basis functions by least angle regression on the
//! training data, then grow the basis along that ranking until the trained
//! constrained loss drops below a threshold.

mod lar;

pub use lar::{lar_path, LarOptions, LarPath};

use std::fmt::Write as _;

use crate::constraints::ConstraintSet;
use crate::error::{Error, Result};
use crate::surrogate::{build_design_matrix, SurrogateModel};
use crate::trainer::{train, Init, LossBreakdown, TrainConfig, TrainReport, TrainingData};

#[derive(Debug, Clone, PartialEq)]
pub struct SparseConfig {
    /// Stop once the total trained loss falls below this.
    pub tau: f64,
    /// Defaults to `max(10, dims + 1)`.
    pub p_min: Option<usize>,
    /// Defaults to `max(5, round(P / 50))`.
    pub step: Option<usize>,
    /// Defaults to the full basis size.
    pub cap: Option<usize>,
}

impl SparseConfig {
    pub fn new(tau: f64) -> Self {
        Self { tau, p_min: None, step: None, cap: None }
    }

    /// `(p_min, step, cap)` for a full basis of `p` terms in `dims` dimensions.
    pub fn resolve(&self, p: usize, dims: usize) -> Result<(usize, usize, usize)> {
        if !(self.tau > 0.0) {
            return Err(Error::InvalidInput(format!("tau must be positive, got {}", self.tau)));
        }
        let cap = self.cap.unwrap_or(p);
        let p_min = self.p_min.unwrap_or((dims + 1).max(10)).min(cap);
        let step = self.step.unwrap_or(((p as f64 / 50.0).round() as usize).max(5));
        if p_min == 0 || cap > p || step == 0 {
            return Err(Error::InvalidInput(format!(
                "need 1 <= p_min <= cap <= P and step >= 1 (p_min {p_min}, cap {cap}, P {p}, step {step})"
            )));
        }
        Ok((p_min, step, cap))
    }
}

/// Losses after one outer iteration.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SparseIteration {
    pub k: usize,
    pub losses: LossBreakdown,
}

#[derive(Debug, Clone)]
pub struct SparseReport {
    /// Full-basis positions in ranking order: the LAR entry order followed by
    /// any columns the path never reached, in basis order.
    pub ranking: Vec<usize>,
    /// Columns LAR skipped as dependent.
    pub degenerate: Vec<usize>,
    pub iterations: Vec<SparseIteration>,
    /// Full-basis positions kept in the returned model, in basis order.
    pub selected: Vec<usize>,
    /// The cap was reached without meeting the threshold.
    pub above_threshold: bool,
    pub final_train: TrainReport,
}

impl SparseReport {
    /// CSV with one row per outer iteration.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("k,L_T,L_PDE,L_IC,L_BC,penalty,total\n");
        for it in &self.iterations {
            let l = &it.losses;
            let _ = writeln!(
                out,
                "{},{:e},{:e},{:e},{:e},{:e},{:e}",
                it.k,
                l.l_t,
                l.l_pde,
                l.l_ic,
                l.l_bc,
                l.penalty,
                l.total()
            );
        }
        out
    }
}

/// Runs the sparse loop starting from `full`, the model over the full
/// candidate basis.
pub fn sparse_pc2_train(
    full: &SurrogateModel,
    config: &TrainConfig,
    data: &TrainingData,
    constraints: &ConstraintSet,
    sparse: &SparseConfig,
) -> Result<(SurrogateModel, SparseReport)> {
    if data.is_empty() {
        return Err(Error::InvalidInput("sparse training needs training data for feature selection".into()));
    }
    let p = full.len();
    let (p_min, step, cap) = sparse.resolve(p, full.dims())?;

    let (points, ys, _) = data.flattened();
    let design = build_design_matrix(full.basis(), &points, None)?;
    let path = lar_path(&design, &ys, &LarOptions::default())?;
    let mut ranking = path.entry_order.clone();
    let mut seen = vec![false; p];
    ranking.iter().for_each(|&j| seen[j] = true);
    ranking.extend((0..p).filter(|&j| !seen[j]));

    let mut iterations = Vec::new();
    let mut k = p_min;
    let mut previous: Option<(Vec<usize>, Vec<f64>)> = None;
    loop {
        let mut selected = ranking[..k].to_vec();
        selected.sort_unstable();
        let basis = full.basis().restrict(&selected)?;
        let mut model = SurrogateModel::new(basis, vec![0.0; k], full.dim_names().to_vec(), full.n_physical())?;
        model.metadata = full.metadata.clone();

        let mut cfg = config.clone();
        if let Some((prev_sel, prev_coef)) = &previous {
            let mut init = vec![0.0; k];
            for (pos, c) in prev_sel.iter().zip(prev_coef) {
                let at = selected.binary_search(pos).expect("nested selection");
                init[at] = *c;
            }
            cfg.init = Init::Given(init);
        }
        let (trained, report) = train(&model, &cfg, data, constraints)?;
        let total = report.losses.total();
        iterations.push(SparseIteration { k, losses: report.losses });

        let done = total < sparse.tau;
        if done || k >= cap {
            let sparse_report = SparseReport {
                ranking,
                degenerate: path.degenerate,
                iterations,
                selected,
                above_threshold: !done,
                final_train: report,
            };
            return Ok((trained, sparse_report));
        }
        previous = Some((selected, trained.coefficients().to_vec()));
        k = (k + step).min(cap);
    }
}

#[cfg(test)]
mod tests;
