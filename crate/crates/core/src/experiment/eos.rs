//! Synthetic equation-of-state study.
//!
//! The table is generated from an analytic diamond-like EOS: a third-order
//! Birch–Murnaghan cold curve plus a Mie–Grüneisen thermal pressure with
//! volume-dependent Grüneisen parameter, and a harmonic-plus-anharmonic
//! thermal energy. Units are Å³/atom, K, GPa and eV/atom. Both stability
//! conditions `dP/dV <= 0` and `dE/dT >= 0` hold exactly for the generator;
//! multiplicative noise mimics the scatter of simulation data.

use std::fmt::Write as _;

use rand::seq::index::sample;
use rayon::prelude::*;

use super::config::EosBlock;
use crate::basis::{DomainScaling, Marginal, TensorBasis};
use crate::constraints::{build_inequality, parse_expr, ConstraintSet, ParseContext};
use crate::error::{Error, Result};
use crate::reference::linspace;
use crate::sampling::{random_marginals, substream};
use crate::sparse::{lar_path, LarOptions};
use crate::surrogate::{build_design_matrix, ols_solve, SurrogateModel};
use crate::trainer::{train, TrainConfig, TrainingData};

const V0: f64 = 5.67;
const K0: f64 = 443.0;
const K0_PRIME: f64 = 3.6;
const GAMMA0: f64 = 0.9;
const GAMMA_EXP: f64 = 0.8;
const KB: f64 = 8.617_333e-5;
/// GPa Å³ per eV.
const GPA_A3: f64 = 160.217_66;
const ANHARMONIC: f64 = 2e-9;

pub const VOLUME: (f64, f64) = (3.0, 6.0);
pub const TEMPERATURE: (f64, f64) = (1000.0, 10000.0);

pub fn pressure(v: f64, t: f64) -> f64 {
    let e = (v / V0).powf(-2.0 / 3.0);
    let cold = 1.5 * K0 * (e.powf(3.5) - e.powf(2.5)) * (1.0 + 0.75 * (K0_PRIME - 4.0) * (e - 1.0));
    let gamma = GAMMA0 * (v / V0).powf(GAMMA_EXP);
    cold + gamma * 3.0 * KB * t / v * GPA_A3
}

pub fn energy(v: f64, t: f64) -> f64 {
    let f = (v / V0).powf(-2.0 / 3.0) - 1.0;
    let cold = 9.0 * V0 * K0 / 16.0 * (f.powi(3) * K0_PRIME + f * f * (6.0 - 4.0 * (f + 1.0))) / GPA_A3;
    cold + 3.0 * KB * t + ANHARMONIC * t * t
}

/// Tabulated `(V, T, P, E)` on an `n_volume x n_temperature` grid.
#[derive(Debug, Clone)]
pub struct EosTable {
    pub points: Vec<Vec<f64>>,
    pub pressure: Vec<f64>,
    pub energy: Vec<f64>,
}

pub fn synthetic_table(block: &EosBlock, seed: u64) -> EosTable {
    let vs = linspace(VOLUME.0, VOLUME.1, block.n_volume - 1);
    let ts = linspace(TEMPERATURE.0, TEMPERATURE.1, block.n_temperature - 1);
    let points: Vec<Vec<f64>> = vs.iter().flat_map(|&v| ts.iter().map(move |&t| vec![v, t])).collect();
    let normal = [Marginal::Normal { mean: 0.0, std_dev: 1.0 }; 2];
    let noise = random_marginals(points.len(), &normal, &mut substream(seed, "eos/noise"));
    let (mut pressure, mut energy) = (Vec::new(), Vec::new());
    for (p, z) in points.iter().zip(&noise) {
        pressure.push(pressure_fn(p) * (1.0 + block.noise * z[0]));
        energy.push(energy_fn(p) * (1.0 + block.noise * z[1]));
    }
    EosTable { points, pressure, energy }
}

fn pressure_fn(p: &[f64]) -> f64 {
    pressure(p[0], p[1])
}

fn energy_fn(p: &[f64]) -> f64 {
    energy(p[0], p[1])
}

fn scaling() -> DomainScaling {
    DomainScaling::uniform(&[VOLUME, TEMPERATURE]).expect("valid bounds")
}

fn names() -> Vec<String> {
    vec!["V".into(), "T".into()]
}

/// Which output a surrogate represents and the sign of its constraint.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Output {
    /// `dP/dV <= 0`.
    Pressure,
    /// `dE/dT >= 0`.
    Energy,
}

impl Output {
    fn orders(self) -> [u8; 2] {
        match self {
            Output::Pressure => [1, 0],
            Output::Energy => [0, 1],
        }
    }

    /// Width of the differentiation variable's range.
    fn width(self) -> f64 {
        match self {
            Output::Pressure => VOLUME.1 - VOLUME.0,
            Output::Energy => TEMPERATURE.1 - TEMPERATURE.0,
        }
    }

    /// Residual that must be nonnegative. The derivative is scaled by the
    /// range width so the penalty sees a change across the whole domain
    /// rather than per kelvin.
    fn expr(self) -> String {
        match self {
            Output::Pressure => format!("(neg (* {} (d u V)))", self.width()),
            Output::Energy => format!("(* {} (d u T))", self.width()),
        }
    }

    /// Violation tolerance on [`Output::margin`] matching the trainer's
    /// `violation_tol` for targets with standard deviation `sd`.
    pub fn tolerance(self, violation_tol: f64, sd: f64) -> f64 {
        violation_tol * sd / self.width()
    }

    /// Signed derivative that must be nonnegative.
    pub fn margin(self, model: &SurrogateModel, x: &[f64]) -> Result<f64> {
        let d = model.evaluate_partial(x, &self.orders())?;
        Ok(if self == Output::Pressure { -d } else { d })
    }
}

/// Mean and standard deviation used to normalize training targets.
fn normalization(y: &[f64]) -> (f64, f64) {
    let n = y.len() as f64;
    let mean = y.iter().sum::<f64>() / n;
    let sd = (y.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n).sqrt();
    (mean, if sd > 0.0 { sd } else { 1.0 })
}

/// Maps coefficients of `(y - mean) / sd` back to `y`.
fn denormalize(model: &SurrogateModel, mean: f64, sd: f64) -> Result<SurrogateModel> {
    let mut c: Vec<f64> = model.coefficients().iter().map(|v| v * sd).collect();
    let zero = model.indices().constant_position().ok_or_else(|| Error::InvalidInput("basis lacks a constant".into()))?;
    c[zero] += mean;
    let mut out = model.with_coefficients(c)?;
    out.metadata = model.metadata.clone();
    Ok(out)
}

const EDGE_POINTS: usize = 25;

/// `n` points per edge of the (V, T) box, corners included once.
fn perimeter(n: usize) -> Vec<Vec<f64>> {
    let vs = linspace(VOLUME.0, VOLUME.1, n);
    let ts = linspace(TEMPERATURE.0, TEMPERATURE.1, n);
    let mut out = Vec::with_capacity(4 * n);
    for i in 0..n {
        out.push(vec![vs[i], TEMPERATURE.0]);
        out.push(vec![vs[i + 1], TEMPERATURE.1]);
        out.push(vec![VOLUME.0, ts[i + 1]]);
        out.push(vec![VOLUME.1, ts[i]]);
    }
    out
}

/// PC² surrogate of one output trained on `(x, y)` with its stability
/// constraint on `n_colloc` LHS points.
pub fn train_pc2(
    x: &[Vec<f64>],
    y: &[f64],
    output: Output,
    p: usize,
    block: &EosBlock,
    config: &TrainConfig,
    seed: u64,
) -> Result<SurrogateModel> {
    let basis = TensorBasis::total_degree(scaling(), p)?;
    let mut model = SurrogateModel::zeros(basis, names(), 2)?;
    model.metadata.seed = seed;
    let (mean, sd) = normalization(y);
    let yn: Vec<f64> = y.iter().map(|v| (v - mean) / sd).collect();
    let data = TrainingData::from_points(x.to_vec(), yn)?;
    let ctx = ParseContext::new(names());
    let expr = parse_expr(&output.expr(), &ctx)?;
    let index = usize::from(output == Output::Energy);
    let marginals = scaling().marginals().to_vec();
    let mut ineq = build_inequality("stability", expr, block.penalty, block.collocation, &marginals, seed, index)?;
    // Low-order derivatives peak on the boundary, which LHS points never reach.
    ineq.points.extend(perimeter(EDGE_POINTS));
    let constraints = ConstraintSet { equalities: vec![], inequalities: vec![ineq] };
    let (trained, _) = train(&model, config, &data, &constraints)?;
    denormalize(&trained, mean, sd)
}

/// Sparse PCE baseline: LAR ranks a degree-`p` basis on all but `holdout`
/// points, the size with the lowest held-out error is kept and the
/// coefficients are refitted by OLS on every training point.
pub fn train_baseline(x: &[Vec<f64>], y: &[f64], p: usize, holdout: usize, seed: u64) -> Result<SurrogateModel> {
    let basis = TensorBasis::total_degree(scaling(), p)?;
    let n_fit = x.len() - holdout;
    let design = build_design_matrix(&basis, &x[..n_fit], None)?;
    let path = lar_path(&design, &y[..n_fit], &LarOptions::default())?;
    let max_k = path.entry_order.len().min(n_fit);
    let mut best: Option<(f64, usize)> = None;
    for k in 1..=max_k {
        let mut sel = path.entry_order[..k].to_vec();
        sel.sort_unstable();
        let sub = basis.restrict(&sel)?;
        let a = build_design_matrix(&sub, &x[..n_fit], None)?;
        let Ok(c) = ols_solve(&a, &y[..n_fit]) else { continue };
        let m = SurrogateModel::new(sub, c, names(), 2)?;
        let err: f64 = x[n_fit..].iter().zip(&y[n_fit..]).map(|(xi, yi)| (m.evaluate(xi).unwrap() - yi).powi(2)).sum();
        if best.is_none_or(|(e, _)| err < e) {
            best = Some((err, k));
        }
    }
    let (_, k) = best.ok_or_else(|| Error::Solver("baseline found no solvable subset".into()))?;
    let mut sel = path.entry_order[..k].to_vec();
    sel.sort_unstable();
    let sub = basis.restrict(&sel)?;
    let c = ols_solve(&build_design_matrix(&sub, x, None)?, y)?;
    let mut m = SurrogateModel::new(sub, c, names(), 2)?;
    m.metadata.seed = seed;
    Ok(m)
}

/// Fraction of test-grid points where the stability condition fails by more
/// than `tol`.
pub fn violation_fraction(model: &SurrogateModel, output: Output, grid: usize, tol: f64) -> Result<f64> {
    let vs = linspace(VOLUME.0, VOLUME.1, grid - 1);
    let ts = linspace(TEMPERATURE.0, TEMPERATURE.1, grid - 1);
    let mut bad = 0usize;
    for &v in &vs {
        for &t in &ts {
            if output.margin(model, &[v, t])? < -tol {
                bad += 1;
            }
        }
    }
    Ok(bad as f64 / (grid * grid) as f64)
}

fn relative_l2(model: &SurrogateModel, x: &[Vec<f64>], y: &[f64]) -> Result<f64> {
    let (mut num, mut den) = (0.0, 0.0);
    for (xi, yi) in x.iter().zip(y) {
        num += (model.evaluate(xi)? - yi).powi(2);
        den += yi * yi;
    }
    Ok((num / den).sqrt())
}

#[derive(Debug, Clone, PartialEq)]
pub struct SplitResult {
    pub split: usize,
    /// `[pc2 P, pc2 E, baseline P, baseline E]`.
    pub errors: [f64; 4],
    pub violations: [f64; 4],
}

#[derive(Debug, Clone)]
pub struct EosStudy {
    pub splits: Vec<SplitResult>,
    /// PC² and baseline models of the first split, `[pc2 P, pc2 E, base P, base E]`.
    pub first_models: Vec<SurrogateModel>,
}

fn median(mut v: Vec<f64>) -> f64 {
    v.sort_by(f64::total_cmp);
    let n = v.len();
    if n % 2 == 1 {
        v[n / 2]
    } else {
        0.5 * (v[n / 2 - 1] + v[n / 2])
    }
}

impl EosStudy {
    /// Fraction of splits with any violation for `[pc2, baseline]`.
    pub fn violating_splits(&self) -> [f64; 2] {
        let n = self.splits.len() as f64;
        let count = |a: usize, b: usize| {
            self.splits.iter().filter(|s| s.violations[a] > 0.0 || s.violations[b] > 0.0).count() as f64 / n
        };
        [count(0, 1), count(2, 3)]
    }

    /// Median validation error per column of [`SplitResult::errors`].
    pub fn median_errors(&self) -> [f64; 4] {
        std::array::from_fn(|k| median(self.splits.iter().map(|s| s.errors[k]).collect()))
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from(
            "split,pc2_err_P,pc2_err_E,base_err_P,base_err_E,pc2_viol_P,pc2_viol_E,base_viol_P,base_viol_E\n",
        );
        for s in &self.splits {
            let e = s.errors;
            let v = s.violations;
            let _ = writeln!(
                out,
                "{},{:e},{:e},{:e},{:e},{},{},{},{}",
                s.split, e[0], e[1], e[2], e[3], v[0], v[1], v[2], v[3]
            );
        }
        out
    }
}

/// Indices of the training points of split `s`.
pub fn split_indices(n_points: usize, n_train: usize, seed: u64, s: usize) -> Vec<usize> {
    let mut rng = substream(seed, &format!("eos/split/{s}"));
    sample(&mut rng, n_points, n_train).into_vec()
}

/// PC² and baseline models for split `s`, in the order
/// `[pc2 P, pc2 E, baseline P, baseline E]`, with their validation errors
/// and test-grid violation fractions.
pub fn run_split(
    block: &EosBlock,
    table: &EosTable,
    p: usize,
    config: &TrainConfig,
    seed: u64,
    s: usize,
) -> Result<(SplitResult, Vec<SurrogateModel>)> {
    let n = table.points.len();
    let chosen = split_indices(n, block.n_train, seed, s);
    let mut is_train = vec![false; n];
    chosen.iter().for_each(|&i| is_train[i] = true);
    let held: Vec<usize> = (0..n).filter(|&i| !is_train[i]).collect();
    let pick = |v: &[f64], idx: &[usize]| -> Vec<f64> { idx.iter().map(|&i| v[i]).collect() };
    let xt: Vec<Vec<f64>> = chosen.iter().map(|&i| table.points[i].clone()).collect();
    let xv: Vec<Vec<f64>> = held.iter().map(|&i| table.points[i].clone()).collect();
    let mut models = Vec::with_capacity(4);
    for (output, y) in [(Output::Pressure, &table.pressure), (Output::Energy, &table.energy)] {
        models.push(train_pc2(&xt, &pick(y, &chosen), output, p, block, config, seed)?);
    }
    for y in [&table.pressure, &table.energy] {
        models.push(train_baseline(&xt, &pick(y, &chosen), block.baseline_degree, block.baseline_holdout, seed)?);
    }
    let outputs = [Output::Pressure, Output::Energy, Output::Pressure, Output::Energy];
    let mut errors = [0.0; 4];
    let mut violations = [0.0; 4];
    for k in 0..4 {
        let y = if k % 2 == 0 { &table.pressure } else { &table.energy };
        errors[k] = relative_l2(&models[k], &xv, &pick(y, &held))?;
        // The trainer's feasibility tolerance, in output units.
        let tol = outputs[k].tolerance(config.violation_tol, normalization(&pick(y, &chosen)).1);
        violations[k] = violation_fraction(&models[k], outputs[k], block.test_grid, tol)?;
    }
    Ok((SplitResult { split: s, errors, violations }, models))
}

/// Trains PC² and the baseline on `splits` random train/validation splits.
pub fn run_study(block: &EosBlock, p: usize, config: &TrainConfig, seed: u64) -> Result<EosStudy> {
    let table = synthetic_table(block, seed);
    let results = (0..block.splits)
        .into_par_iter()
        .map(|s| run_split(block, &table, p, config, seed, s))
        .collect::<Result<Vec<_>>>()?;
    let mut first_models = Vec::new();
    let mut splits = Vec::new();
    for (i, (r, m)) in results.into_iter().enumerate() {
        if i == 0 {
            first_models = m;
        }
        splits.push(r);
    }
    Ok(EosStudy { splits, first_models })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn block() -> EosBlock {
        crate::experiment::config::preset("eos_synthetic").unwrap().problem_eos().unwrap().clone()
    }

    #[test]
    fn generator_is_thermodynamically_stable() {
        let h = 1e-5;
        for i in 0..=30 {
            for j in 0..=30 {
                let v = VOLUME.0 + (VOLUME.1 - VOLUME.0) * i as f64 / 30.0;
                let t = TEMPERATURE.0 + (TEMPERATURE.1 - TEMPERATURE.0) * j as f64 / 30.0;
                assert!(pressure(v + h, t) - pressure(v - h, t) < 0.0);
                assert!(energy(v, t + 1.0) - energy(v, t - 1.0) > 0.0);
            }
        }
        // Zero cold pressure and energy at the reference volume.
        assert!((pressure(V0, 0.0)).abs() < 1e-12);
        assert!((energy(V0, 0.0)).abs() < 1e-12);
    }

    #[test]
    fn energy_is_consistent_with_cold_pressure() {
        // P_cold = -dE_cold/dV.
        let h = 1e-5;
        for v in [3.2, 4.0, 5.0, 5.9] {
            let de = (energy(v + h, 0.0) - energy(v - h, 0.0)) / (2.0 * h) * GPA_A3;
            assert!((pressure(v, 0.0) + de).abs() < 1e-4 * pressure(v, 0.0).abs().max(1.0), "{v}");
        }
    }

    #[test]
    fn table_is_seeded() {
        let b = block();
        let a = synthetic_table(&b, 3);
        assert_eq!(a.points.len(), b.n_volume * b.n_temperature);
        assert_eq!(a.pressure, synthetic_table(&b, 3).pressure);
        assert_ne!(a.pressure, synthetic_table(&b, 4).pressure);
    }

    #[test]
    fn constrained_fit_has_no_violations() {
        let b = block();
        let table = synthetic_table(&b, 11);
        let idx = [0usize, 9, 20, 33, 47, 58, 71, 90];
        let x: Vec<Vec<f64>> = idx.iter().map(|&i| table.points[i].clone()).collect();
        let y: Vec<f64> = idx.iter().map(|&i| table.pressure[i]).collect();
        let config = TrainConfig { penalty_rounds: 5, ..TrainConfig::default() };
        let m = train_pc2(&x, &y, Output::Pressure, 2, &b, &config, 1).unwrap();
        let tol = Output::Pressure.tolerance(config.violation_tol, normalization(&y).1);
        assert_eq!(violation_fraction(&m, Output::Pressure, 50, tol).unwrap(), 0.0);
    }
}
