//! Browser demo: three small PC² experiments run in WebAssembly.
//!
//! Each exported function returns a JSON string for the page script to plot.

// `!(x > 0.0)` is used on purpose: it also rejects NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

use pc2::experiment::config::Problem;
use pc2::experiment::eos::{self, Output};
use pc2::experiment::setup::{build_setup, draw_stochastic, model_evaluations, physical_grid, ReferenceModel};
use pc2::experiment::{preset, ExperimentConfig};
use pc2::postprocess::{density_of, ks_statistic, reduce, sample_reduced, DensityMethod};
use pc2::reference::linspace;
use pc2::sampling::substream;
use pc2::sparse::sparse_pc2_train;
use pc2::trainer::{train, TrainingData};
use pc2::{Error, Result};
use serde_json::{json, Value};
use wasm_bindgen::prelude::*;

fn to_js(r: Result<Value>) -> std::result::Result<String, JsError> {
    r.map(|v| v.to_string()).map_err(|e| JsError::new(&e.to_string()))
}

fn pde_block(cfg: &mut ExperimentConfig) -> &mut pc2::experiment::config::PdeBlock {
    match &mut cfg.problem {
        Problem::Pde(p) => p,
        _ => unreachable!("preset is a PDE problem"),
    }
}

/// Burgers equation on `[0, 1] x [0, 0.3]` solved by PC² with no data,
/// compared with the finite-difference reference at four times.
pub fn burgers_json(nu: f64, p: usize, collocation: usize) -> Result<Value> {
    if !(nu > 0.0) || !(2..=16).contains(&p) {
        return Err(Error::InvalidInput("need nu > 0 and 2 <= p <= 16".into()));
    }
    let mut cfg = preset("burgers_det")?;
    cfg.basis.p = p;
    let block = pde_block(&mut cfg);
    block.params.insert("nu".into(), nu);
    block.collocation.domain = collocation;
    block.collocation.ic = (collocation / 10).max(10);
    block.collocation.bc = (collocation / 10).max(10);
    let r = cfg.reference.as_mut().expect("preset has a reference");
    r.n = 200;
    r.nt = 150;
    cfg.validate()?;

    let setup = build_setup(&cfg)?;
    let reference = ReferenceModel::new(&cfg, &setup)?;
    let sol = reference.solve(&[], 1)?;
    let (model, report) = train(
        &setup.candidate(p, cfg.seed)?,
        &cfg.training.train_config(),
        &TrainingData::default(),
        &setup.constraints,
    )?;

    let grid = physical_grid(&setup, 40, &[]);
    let mut mse = 0.0;
    for x in &grid {
        mse += (model.evaluate(x)? - sol.interpolate(x)?).powi(2);
    }
    mse /= grid.len() as f64;

    let xs = linspace(0.0, 1.0, 100);
    let mut slices = Vec::new();
    for t in [0.0, 0.1, 0.2, 0.3] {
        let m = xs.iter().map(|&x| model.evaluate(&[x, t])).collect::<Result<Vec<_>>>()?;
        let r = xs.iter().map(|&x| sol.interpolate(&[x, t])).collect::<Result<Vec<_>>>()?;
        slices.push(json!({ "t": t, "model": m, "reference": r }));
    }
    Ok(json!({
        "x": xs,
        "slices": slices,
        "mse": mse,
        "basis": model.len(),
        "iterations": report.iterations,
        "losses": { "pde": report.losses.l_pde, "ic": report.losses.l_ic, "bc": report.losses.l_bc },
    }))
}

/// One train/validation split of the synthetic equation-of-state table:
/// pressure isotherms of the constrained PC² fit and of the unconstrained
/// sparse baseline.
pub fn eos_json(seed: u64, split: usize) -> Result<Value> {
    let cfg = preset("eos_synthetic")?;
    let block = cfg.problem_eos().expect("preset is an eos problem").clone();
    let table = eos::synthetic_table(&block, seed);
    let (result, models) = eos::run_split(&block, &table, cfg.basis.p, &cfg.training.train_config(), seed, split)?;
    let chosen = eos::split_indices(table.points.len(), block.n_train, seed, split);

    let vs = linspace(eos::VOLUME.0, eos::VOLUME.1, 80);
    let mut isotherms = Vec::new();
    for t in [eos::TEMPERATURE.0, 0.5 * (eos::TEMPERATURE.0 + eos::TEMPERATURE.1), eos::TEMPERATURE.1] {
        let at = |k: usize| vs.iter().map(|&v| models[k].evaluate(&[v, t])).collect::<Result<Vec<_>>>();
        let truth: Vec<f64> = vs.iter().map(|&v| eos::pressure(v, t)).collect();
        isotherms.push(json!({ "T": t, "truth": truth, "pc2": at(0)?, "baseline": at(2)? }));
    }
    let train: Vec<Value> = chosen
        .iter()
        .map(|&i| json!({ "V": table.points[i][0], "T": table.points[i][1], "P": table.pressure[i] }))
        .collect();
    let worst = |k: usize| -> Result<f64> {
        let mut m = f64::INFINITY;
        for &v in &linspace(eos::VOLUME.0, eos::VOLUME.1, 60) {
            for &t in &linspace(eos::TEMPERATURE.0, eos::TEMPERATURE.1, 60) {
                m = m.min(Output::Pressure.margin(&models[k], &[v, t])?);
            }
        }
        Ok(m)
    };
    Ok(json!({
        "V": vs,
        "isotherms": isotherms,
        "train": train,
        "errors": { "pc2": result.errors[0], "baseline": result.errors[2] },
        "violations": { "pc2": result.violations[0], "baseline": result.violations[2] },
        "min_margin": { "pc2": worst(0)?, "baseline": worst(2)? },
    }))
}

/// Simply supported beam with a KL random-field modulus: sparse PC² fitted
/// to `evaluations` solver runs, midpoint deflection PDF against Monte Carlo.
pub fn beam_json(cov: f64, corr_length: f64, kl_terms: usize, evaluations: usize) -> Result<Value> {
    let mut cfg = preset("beam_kl")?;
    let Problem::Beam(b) = &mut cfg.problem else { unreachable!("preset is a beam problem") };
    b.cov = cov;
    b.corr_length = corr_length;
    b.kl_terms = kl_terms;
    b.collocation.domain = 1500;
    b.collocation.bc = 200;
    let half = b.length / 2.0;
    cfg.basis.p = 4;
    let r = cfg.reference.as_mut().expect("preset has a reference");
    r.n = 100;
    cfg.validate()?;

    let setup = build_setup(&cfg)?;
    let reference = ReferenceModel::new(&cfg, &setup)?;
    let data = model_evaluations(&setup, &reference, evaluations, 10, cfg.seed)?;
    let sparse = cfg.sparse.as_ref().expect("preset has a sparse block").sparse_config();
    let (model, report) = sparse_pc2_train(
        &setup.candidate(cfg.basis.p, cfg.seed)?,
        &cfg.training.train_config(),
        &data,
        &setup.constraints,
        &sparse,
    )?;
    let reduced = reduce(&model, &[half])?;
    let surrogate = sample_reduced(&reduced, 5000, cfg.seed)?;

    let mut rng = substream(cfg.seed, "demo/mcs");
    let mut mcs = Vec::with_capacity(1000);
    for _ in 0..1000 {
        let xi = draw_stochastic(&setup, &mut rng);
        mcs.push(reference.solve(&xi, 1)?.interpolate(&[half])?);
    }
    let (m, s) = mean_std(&mcs);
    let ks = ks_statistic(&surrogate, &mcs);
    let pdf = |v: Vec<f64>| -> Result<Value> {
        let d = density_of(v, DensityMethod::Kernel { bandwidth: None })?;
        Ok(json!({ "x": d.grid, "y": d.density }))
    };
    let kl = setup.kl.as_ref().expect("beam setup has a field");
    Ok(json!({
        "basis": model.len(),
        "full_basis": setup.candidate(cfg.basis.p, cfg.seed)?.len(),
        "outer_iterations": report.iterations.len(),
        "captured_variance": kl.captured_variance(),
        "pc2": { "mean": reduced.mean(), "std": reduced.variance().max(0.0).sqrt(), "pdf": pdf(surrogate)? },
        "mcs": { "mean": m, "std": s, "pdf": pdf(mcs)? },
        "ks": ks,
    }))
}

fn mean_std(v: &[f64]) -> (f64, f64) {
    let n = v.len() as f64;
    let m = v.iter().sum::<f64>() / n;
    (m, (v.iter().map(|x| (x - m).powi(2)).sum::<f64>() / (n - 1.0)).sqrt())
}

#[wasm_bindgen]
pub fn burgers(nu: f64, p: usize, collocation: usize) -> std::result::Result<String, JsError> {
    to_js(burgers_json(nu, p, collocation))
}

#[wasm_bindgen]
pub fn eos_split(seed: u32, split: u32) -> std::result::Result<String, JsError> {
    to_js(eos_json(u64::from(seed), split as usize))
}

#[wasm_bindgen]
pub fn beam(cov: f64, corr_length: f64, kl_terms: usize, evaluations: usize) -> std::result::Result<String, JsError> {
    to_js(beam_json(cov, corr_length, kl_terms, evaluations))
}
