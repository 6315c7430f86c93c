//! Train, sparse, UQ and reference pipelines.
//!
//! Every pipeline computes all of its outputs before the run directory is
//! touched, so a failing run leaves no partial files. CSV files start with a
//! `# config_hash=...` line; wall-clock time only appears in `summary.json`,
//! which keeps model files and CSVs byte-identical across reruns.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::time::Instant;

use rayon::prelude::*;
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use super::config::{hex_digest, DataBlock, ExperimentConfig, Problem};
use super::eos;
use super::setup::{build_setup, draw_stochastic, model_evaluations, physical_grid, ReferenceModel, Setup};
use crate::error::{Error, Result};
use crate::postprocess::{conditional_moments, density_of, ks_statistic, reduce, sample_reduced, DensityMethod};
use crate::reference::{mcs_moments, GridSolution, McsResult};
use crate::sparse::sparse_pc2_train;
use crate::surrogate::SurrogateModel;
use crate::trainer::{train, Termination, TrainReport, TrainingData};

#[derive(Debug, Clone, Default)]
pub struct RunOptions {
    pub out: PathBuf,
    /// Reference solutions are cached here when set.
    pub cache_dir: Option<PathBuf>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunSummary {
    pub name: String,
    pub command: String,
    pub problem: String,
    pub config_hash: String,
    pub seed: u64,
    pub p: usize,
    pub full_basis_size: usize,
    pub basis_size: usize,
    pub model_evaluations: usize,
    pub stochastic: bool,
    pub termination: Option<String>,
    pub converged: bool,
    pub iterations: usize,
    pub metrics: BTreeMap<String, f64>,
    pub notes: BTreeMap<String, String>,
    pub wall_time_s: f64,
}

/// Result of a pipeline after its files were written.
#[derive(Debug, Clone)]
pub struct RunOutput {
    pub summary: RunSummary,
    pub model: Option<SurrogateModel>,
    /// Files written, relative to the run directory.
    pub files: Vec<String>,
}

struct Outputs {
    files: Vec<(String, Vec<u8>)>,
    hash: String,
}

impl Outputs {
    fn new(cfg: &ExperimentConfig) -> Self {
        Self { files: Vec::new(), hash: cfg.hash() }
    }

    fn csv(&mut self, name: &str, body: &str) {
        let text = format!("# config_hash={}\n{body}", self.hash);
        self.files.push((name.to_string(), text.into_bytes()));
    }

    fn model(&mut self, name: &str, model: &SurrogateModel) {
        self.files.push((name.to_string(), model.to_text().into_bytes()));
    }

    fn write(self, out: &Path, summary: RunSummary, model: Option<SurrogateModel>) -> Result<RunOutput> {
        std::fs::create_dir_all(out)?;
        let mut names = Vec::new();
        for (name, bytes) in &self.files {
            std::fs::write(out.join(name), bytes)?;
            names.push(name.clone());
        }
        let json = serde_json::to_string_pretty(&summary).expect("summary serializes");
        std::fs::write(out.join("summary.json"), json + "\n")?;
        names.push("summary.json".into());
        Ok(RunOutput { summary, model, files: names })
    }
}

fn summary(cfg: &ExperimentConfig, command: &str) -> RunSummary {
    RunSummary {
        name: cfg.name.clone(),
        command: command.into(),
        problem: cfg.problem_kind().into(),
        config_hash: cfg.hash(),
        seed: cfg.seed,
        p: cfg.basis.p,
        full_basis_size: 0,
        basis_size: 0,
        model_evaluations: 0,
        stochastic: false,
        termination: None,
        converged: true,
        iterations: 0,
        metrics: BTreeMap::new(),
        notes: BTreeMap::new(),
        wall_time_s: 0.0,
    }
}

fn tag(model: &mut SurrogateModel, cfg: &ExperimentConfig, command: &str) {
    let prov = &mut model.metadata.provenance;
    prov.insert("experiment".into(), cfg.name.clone());
    prov.insert("command".into(), command.into());
    prov.insert("config_hash".into(), cfg.hash());
    model.metadata.seed = cfg.seed;
}

fn termination_name(t: Termination) -> String {
    match t {
        Termination::GradientTolerance => "gradient_tolerance",
        Termination::IterationCap => "iteration_cap",
        Termination::Stalled => "stalled",
    }
    .into()
}

fn convergence_csv(report: &TrainReport) -> String {
    let mut out = String::from("iteration,objective,L_T,L_PDE,L_IC,L_BC,penalty\n");
    for r in &report.history {
        let l = &r.losses;
        let _ = writeln!(
            out,
            "{},{:e},{:e},{:e},{:e},{:e},{:e}",
            r.iteration, r.objective, l.l_t, l.l_pde, l.l_ic, l.l_bc, l.penalty
        );
    }
    out
}

fn record_losses(s: &mut RunSummary, report: &TrainReport) {
    let l = &report.losses;
    for (k, v) in [
        ("L_T", l.l_t),
        ("L_PDE", l.l_pde),
        ("L_IC", l.l_ic),
        ("L_BC", l.l_bc),
        ("penalty", l.penalty),
        ("loss_total", l.total()),
        ("max_violation", report.max_violation),
    ] {
        s.metrics.insert(k.into(), v);
    }
    s.termination = Some(termination_name(report.termination));
    s.converged = report.converged;
    s.iterations = report.iterations;
}

// ---------------------------------------------------------------- cache

/// Loads `key_src`'s entry from the cache or computes and stores it.
/// Returns the value, the cache key and whether it was a hit.
fn cached<T, F>(opts: &RunOptions, key_src: &str, compute: F) -> Result<(T, String, bool)>
where
    T: Serialize + DeserializeOwned,
    F: FnOnce() -> Result<T>,
{
    let key = hex_digest(key_src.as_bytes())[..32].to_string();
    let Some(dir) = &opts.cache_dir else {
        return Ok((compute()?, key, false));
    };
    let path = dir.join(format!("ref-{key}.json"));
    if let Ok(text) = std::fs::read_to_string(&path) {
        if let Ok(v) = serde_json::from_str(&text) {
            return Ok((v, key, true));
        }
    }
    let v = compute()?;
    std::fs::create_dir_all(dir)?;
    let tmp = dir.join(format!("ref-{key}.json.{}", std::process::id()));
    std::fs::write(&tmp, serde_json::to_string(&v).expect("reference serializes"))?;
    std::fs::rename(&tmp, &path)?;
    Ok((v, key, false))
}

fn deterministic_reference(
    reference: &ReferenceModel,
    opts: &RunOptions,
) -> Result<(GridSolution, String, bool)> {
    let stride = reference.default_stride();
    cached(opts, &format!("{}|stride={stride}", reference.descriptor), || reference.solve(&[], stride))
}

/// Points for moment fields: the physical grid with time fixed at
/// `report.t_slice` when both exist.
fn uq_points(cfg: &ExperimentConfig, setup: &Setup) -> Vec<Vec<f64>> {
    let fixed = match (setup.time_dim, cfg.report.t_slice) {
        (Some(t), Some(v)) => vec![(t, v)],
        _ => vec![],
    };
    physical_grid(setup, cfg.report.uq_grid, &fixed)
}

/// Monte Carlo moments of the reference at `points` (probes included).
fn mcs_reference(
    cfg: &ExperimentConfig,
    setup: &Setup,
    reference: &ReferenceModel,
    points: &[Vec<f64>],
    probes: &[usize],
    opts: &RunOptions,
) -> Result<(McsResult, String, bool)> {
    let n = cfg.reference.as_ref().expect("reference block").mcs_samples;
    let mut pts = String::new();
    for p in points {
        let _ = writeln!(pts, "{p:?}");
    }
    let key = format!(
        "{}|mcs={n}|seed={}|probes={probes:?}|points={}",
        reference.descriptor,
        cfg.seed,
        hex_digest(pts.as_bytes())
    );
    let stride = reference.default_stride();
    cached(opts, &key, || {
        mcs_moments(
            n,
            cfg.seed,
            probes,
            |rng| draw_stochastic(setup, rng),
            |xi: &Vec<f64>| {
                let sol = reference.solve(xi, stride)?;
                points.iter().map(|p| sol.interpolate(p)).collect()
            },
        )
    })
}

// ---------------------------------------------------------------- fitting

struct Prepared {
    setup: Setup,
    reference: Option<ReferenceModel>,
    full: SurrogateModel,
}

fn prepare(cfg: &ExperimentConfig) -> Result<Prepared> {
    let setup = build_setup(cfg)?;
    let reference = cfg.reference.as_ref().map(|_| ReferenceModel::new(cfg, &setup)).transpose()?;
    let full = setup.candidate(cfg.basis.p, cfg.seed)?;
    Ok(Prepared { setup, reference, full })
}

fn training_data(cfg: &ExperimentConfig, prep: &Prepared, block: DataBlock) -> Result<TrainingData> {
    if block.evaluations == 0 || block.points == 0 {
        return Ok(TrainingData::default());
    }
    let reference = prep
        .reference
        .as_ref()
        .ok_or_else(|| Error::Config("model evaluations need a [reference] block".into()))?;
    model_evaluations(&prep.setup, reference, block.evaluations, block.points, cfg.seed)
}

/// Squared error against the deterministic reference on the accuracy grid,
/// plus a field CSV at the report time slice.
fn accuracy(
    cfg: &ExperimentConfig,
    prep: &Prepared,
    model: &SurrogateModel,
    opts: &RunOptions,
    s: &mut RunSummary,
    out: &mut Outputs,
) -> Result<()> {
    let Some(reference) = &prep.reference else { return Ok(()) };
    if prep.setup.n_stochastic() > 0 {
        return Ok(());
    }
    let (sol, key, _) = deterministic_reference(reference, opts)?;
    let grid = physical_grid(&prep.setup, cfg.report.grid, &[]);
    let sq: Vec<f64> = grid
        .par_iter()
        .map(|x| Ok((model.evaluate(x)? - sol.interpolate(x)?).powi(2)))
        .collect::<Result<_>>()?;
    let mse = sq.iter().sum::<f64>() / sq.len() as f64;
    s.metrics.insert("mse".into(), mse);
    s.notes.insert("reference_key".into(), key);

    let field_pts = match prep.setup.time_dim {
        Some(t) => {
            let t_end = sol.axes[t].last().copied().unwrap_or(0.0);
            physical_grid(&prep.setup, cfg.report.uq_grid, &[(t, cfg.report.t_slice.unwrap_or(t_end))])
        }
        None => physical_grid(&prep.setup, cfg.report.uq_grid, &[]),
    };
    let mut csv = format!("{},model,reference\n", prep.setup.dim_names[..prep.setup.n_physical].join(","));
    let mut sq_slice = 0.0;
    for x in &field_pts {
        let coords: Vec<String> = x.iter().map(f64::to_string).collect();
        let (m, r) = (model.evaluate(x)?, sol.interpolate(x)?);
        sq_slice += (m - r).powi(2);
        let _ = writeln!(csv, "{},{m},{r}", coords.join(","));
    }
    s.metrics.insert("mse_slice".into(), sq_slice / field_pts.len() as f64);
    out.csv("field.csv", &csv);
    Ok(())
}

fn check_not_eos(cfg: &ExperimentConfig, command: &str) -> Result<()> {
    if let Problem::Eos(_) = cfg.problem {
        return Err(Error::Config(format!("{command} is not available for equation-of-state problems; use train")));
    }
    Ok(())
}

// ---------------------------------------------------------------- commands

/// Trains on the full basis. For equation-of-state problems this runs the
/// whole split study against the sparse PCE baseline.
pub fn run_train(cfg: &ExperimentConfig, opts: &RunOptions) -> Result<RunOutput> {
    cfg.validate()?;
    let start = Instant::now();
    let mut s = summary(cfg, "train");
    let mut out = Outputs::new(cfg);
    if let Problem::Eos(block) = &cfg.problem {
        let study = eos::run_study(block, cfg.basis.p, &cfg.training.train_config(), cfg.seed)?;
        let [pc2_bad, base_bad] = study.violating_splits();
        let med = study.median_errors();
        for (k, v) in [
            ("pc2_violating_splits", pc2_bad),
            ("baseline_violating_splits", base_bad),
            ("pc2_median_err_P", med[0]),
            ("pc2_median_err_E", med[1]),
            ("baseline_median_err_P", med[2]),
            ("baseline_median_err_E", med[3]),
        ] {
            s.metrics.insert(k.into(), v);
        }
        out.csv("eos_splits.csv", &study.to_csv());
        let names = ["model_pc2_P.pc2", "model_pc2_E.pc2", "model_baseline_P.pc2", "model_baseline_E.pc2"];
        for (name, m) in names.iter().zip(&study.first_models) {
            let mut m = m.clone();
            tag(&mut m, cfg, "train");
            out.model(name, &m);
        }
        s.basis_size = study.first_models[0].len();
        s.full_basis_size = s.basis_size;
        s.model_evaluations = block.n_train;
        s.wall_time_s = start.elapsed().as_secs_f64();
        return out.write(&opts.out, s, None);
    }

    let prep = prepare(cfg)?;
    let data = training_data(cfg, &prep, cfg.data)?;
    let (mut model, report) = train(&prep.full, &cfg.training.train_config(), &data, &prep.setup.constraints)?;
    tag(&mut model, cfg, "train");
    s.full_basis_size = prep.full.len();
    s.basis_size = model.len();
    s.model_evaluations = data.evaluations().len();
    s.stochastic = prep.setup.n_stochastic() > 0;
    record_losses(&mut s, &report);
    accuracy(cfg, &prep, &model, opts, &mut s, &mut out)?;
    out.model("model.pc2", &model);
    out.csv("convergence.csv", &convergence_csv(&report));
    s.wall_time_s = start.elapsed().as_secs_f64();
    out.write(&opts.out, s, Some(model))
}

fn sparse_fit(cfg: &ExperimentConfig, prep: &Prepared) -> Result<(SurrogateModel, crate::sparse::SparseReport, usize)> {
    let block = cfg.sparse.as_ref().ok_or_else(|| Error::Config("sparse needs a [sparse] block".into()))?;
    let data = training_data(cfg, prep, block.data.unwrap_or(cfg.data))?;
    if data.is_empty() {
        return Err(Error::Config("sparse training needs model evaluations ([data] or [sparse.data])".into()));
    }
    let (model, report) = sparse_pc2_train(
        &prep.full,
        &cfg.training.train_config(),
        &data,
        &prep.setup.constraints,
        &block.sparse_config(),
    )?;
    Ok((model, report, data.evaluations().len()))
}

/// Sparse PC²: LAR ranking on the model evaluations, then growing subsets
/// trained with the constraints until the loss drops below `tau`.
pub fn run_sparse(cfg: &ExperimentConfig, opts: &RunOptions) -> Result<RunOutput> {
    cfg.validate()?;
    check_not_eos(cfg, "sparse")?;
    let start = Instant::now();
    let mut s = summary(cfg, "sparse");
    let mut out = Outputs::new(cfg);
    let prep = prepare(cfg)?;
    let (mut model, report, n_eval) = sparse_fit(cfg, &prep)?;
    tag(&mut model, cfg, "sparse");
    s.full_basis_size = prep.full.len();
    s.basis_size = model.len();
    s.model_evaluations = n_eval;
    s.stochastic = prep.setup.n_stochastic() > 0;
    record_losses(&mut s, &report.final_train);
    s.iterations = report.iterations.len();
    s.notes.insert("above_threshold".into(), report.above_threshold.to_string());
    accuracy(cfg, &prep, &model, opts, &mut s, &mut out)?;
    out.model("model.pc2", &model);
    out.csv("sparse_losses.csv", &report.to_csv());
    s.wall_time_s = start.elapsed().as_secs_f64();
    out.write(&opts.out, s, Some(model))
}

/// Moment fields, Sobol indices and PDFs of `model`, or of a model trained
/// from the configuration (sparse when a `[sparse]` block is present).
pub fn run_uq(cfg: &ExperimentConfig, model: Option<SurrogateModel>, opts: &RunOptions) -> Result<RunOutput> {
    cfg.validate()?;
    check_not_eos(cfg, "uq")?;
    let start = Instant::now();
    let mut s = summary(cfg, "uq");
    let mut out = Outputs::new(cfg);
    let prep = prepare(cfg)?;
    let model = match model {
        Some(m) => {
            if m.dim_names() != prep.setup.dim_names.as_slice() || m.n_physical() != prep.setup.n_physical {
                return Err(Error::Config("model dimensions do not match the configuration".into()));
            }
            s.notes.insert("model_source".into(), "file".into());
            m
        }
        None if cfg.sparse.is_some() => {
            let (mut m, report, n_eval) = sparse_fit(cfg, &prep)?;
            tag(&mut m, cfg, "uq");
            record_losses(&mut s, &report.final_train);
            s.model_evaluations = n_eval;
            s.notes.insert("model_source".into(), "sparse".into());
            m
        }
        None => {
            let data = training_data(cfg, &prep, cfg.data)?;
            let (mut m, report) = train(&prep.full, &cfg.training.train_config(), &data, &prep.setup.constraints)?;
            tag(&mut m, cfg, "uq");
            record_losses(&mut s, &report);
            s.model_evaluations = data.evaluations().len();
            s.notes.insert("model_source".into(), "train".into());
            m
        }
    };
    let setup = &prep.setup;
    s.full_basis_size = prep.full.len();
    s.basis_size = model.len();
    s.stochastic = setup.n_stochastic() > 0;

    let points = uq_points(cfg, setup);
    for (i, probe) in cfg.report.probes.iter().enumerate() {
        if probe.len() != setup.n_physical {
            return Err(Error::Config(format!("probe {i} has {} coordinates, expected {}", probe.len(), setup.n_physical)));
        }
    }
    let moments: Vec<(f64, f64)> = points.par_iter().map(|x| conditional_moments(&model, x)).collect::<Result<_>>()?;

    // Reference moments: Monte Carlo for stochastic problems, the solution
    // itself (zero spread) for deterministic ones.
    let mut all_points = points.clone();
    all_points.extend(cfg.report.probes.iter().cloned());
    let probe_idx: Vec<usize> = (points.len()..all_points.len()).collect();
    let reference = match &prep.reference {
        Some(r) if setup.n_stochastic() > 0 => {
            let (mcs, key, hit) = mcs_reference(cfg, setup, r, &all_points, &probe_idx, opts)?;
            s.notes.insert("reference_key".into(), key);
            s.notes.insert("reference_cache_hit".into(), hit.to_string());
            s.metrics.insert("mcs_samples".into(), mcs.n as f64);
            Some(mcs)
        }
        Some(r) => {
            let (sol, key, _) = deterministic_reference(r, opts)?;
            s.notes.insert("reference_key".into(), key);
            let mean = all_points.iter().map(|p| sol.interpolate(p)).collect::<Result<Vec<_>>>()?;
            let n = all_points.len();
            Some(McsResult { n: 1, mean, std: vec![0.0; n], probes: vec![], samples: vec![] })
        }
        None => None,
    };

    let names = setup.dim_names[..setup.n_physical].join(",");
    let mut csv = format!("{names},mean,std{}\n", if reference.is_some() { ",ref_mean,ref_std" } else { "" });
    let (mut err_mean, mut err_std) = (0.0, 0.0);
    for (k, (x, (m, v))) in points.iter().zip(&moments).enumerate() {
        let coords: Vec<String> = x.iter().map(f64::to_string).collect();
        let sd = v.max(0.0).sqrt();
        let _ = write!(csv, "{},{m},{sd}", coords.join(","));
        if let Some(r) = &reference {
            let _ = write!(csv, ",{},{}", r.mean[k], r.std[k]);
            err_mean += (m - r.mean[k]).abs();
            err_std += (sd - r.std[k]).abs();
        }
        csv.push('\n');
    }
    out.csv("moments.csv", &csv);
    if reference.is_some() {
        s.metrics.insert("mae_mean".into(), err_mean / points.len() as f64);
        s.metrics.insert("mae_std".into(), err_std / points.len() as f64);
    }

    for (i, probe) in cfg.report.probes.iter().enumerate() {
        let reduced = reduce(&model, probe)?;
        let (m, v) = (reduced.mean(), reduced.variance().max(0.0));
        s.metrics.insert(format!("probe{i}_mean"), m);
        s.metrics.insert(format!("probe{i}_std"), v.sqrt());
        if let Some(r) = &reference {
            let k = probe_idx[i];
            s.metrics.insert(format!("probe{i}_ref_mean"), r.mean[k]);
            s.metrics.insert(format!("probe{i}_ref_std"), r.std[k]);
        }
        if setup.n_stochastic() == 0 {
            continue;
        }
        if v > 0.0 {
            let sobol = reduced.sobol()?;
            out.csv(&format!("sobol_{i}.csv"), &sobol.to_csv(&setup.dim_names[setup.n_physical..]));
        }
        let samples = sample_reduced(&reduced, cfg.report.pdf_samples, cfg.seed)?;
        if let Some(r) = reference.as_ref().filter(|r| !r.samples.is_empty()) {
            s.metrics.insert(format!("probe{i}_ks"), ks_statistic(&samples, &r.samples[i]));
            let d = density_of(r.samples[i].clone(), DensityMethod::Kernel { bandwidth: None })?;
            out.csv(&format!("pdf_ref_{i}.csv"), &d.to_csv());
        }
        let d = density_of(samples, DensityMethod::Kernel { bandwidth: None })?;
        out.csv(&format!("pdf_{i}.csv"), &d.to_csv());
    }
    out.model("model.pc2", &model);
    s.wall_time_s = start.elapsed().as_secs_f64();
    out.write(&opts.out, s, Some(model))
}

/// Outcome of the reference command.
#[derive(Debug, Clone)]
pub struct ReferenceOutput {
    pub key: String,
    pub cache_hit: bool,
    pub run: RunOutput,
}

/// Solves (or loads) the reference and exports it: the solution on the
/// accuracy grid for deterministic problems, Monte Carlo moments on the
/// moment grid for stochastic ones. `resolution` overrides `reference.n`.
pub fn run_reference(cfg: &ExperimentConfig, resolution: Option<usize>, opts: &RunOptions) -> Result<ReferenceOutput> {
    let mut cfg = cfg.clone();
    if let (Some(n), Some(r)) = (resolution, cfg.reference.as_mut()) {
        r.n = n;
    }
    cfg.validate()?;
    check_not_eos(&cfg, "reference")?;
    let start = Instant::now();
    let mut s = summary(&cfg, "reference");
    let mut out = Outputs::new(&cfg);
    let setup = build_setup(&cfg)?;
    let reference = ReferenceModel::new(&cfg, &setup)?;
    let names = setup.dim_names[..setup.n_physical].join(",");
    let (key, hit) = if setup.n_stochastic() == 0 {
        let (sol, key, hit) = deterministic_reference(&reference, opts)?;
        let mut csv = format!("{names},value\n");
        for x in physical_grid(&setup, cfg.report.grid, &[]) {
            let coords: Vec<String> = x.iter().map(f64::to_string).collect();
            let _ = writeln!(csv, "{},{}", coords.join(","), sol.interpolate(&x)?);
        }
        out.csv("reference.csv", &csv);
        for (k, v) in &sol.meta {
            s.notes.insert(k.clone(), v.clone());
        }
        (key, hit)
    } else {
        let mut points = uq_points(&cfg, &setup);
        let n_grid = points.len();
        points.extend(cfg.report.probes.iter().cloned());
        let probes: Vec<usize> = (n_grid..points.len()).collect();
        let (mcs, key, hit) = mcs_reference(&cfg, &setup, &reference, &points, &probes, opts)?;
        let mut csv = format!("{names},mean,std\n");
        for (k, x) in points[..n_grid].iter().enumerate() {
            let coords: Vec<String> = x.iter().map(f64::to_string).collect();
            let _ = writeln!(csv, "{},{},{}", coords.join(","), mcs.mean[k], mcs.std[k]);
        }
        out.csv("reference_moments.csv", &csv);
        for (i, samples) in mcs.samples.iter().enumerate() {
            let mut body = String::from("value\n");
            samples.iter().for_each(|v| {
                let _ = writeln!(body, "{v}");
            });
            out.csv(&format!("reference_samples_{i}.csv"), &body);
        }
        s.metrics.insert("mcs_samples".into(), mcs.n as f64);
        (key, hit)
    };
    s.notes.insert("reference_key".into(), key.clone());
    s.notes.insert("reference_cache_hit".into(), hit.to_string());
    s.stochastic = setup.n_stochastic() > 0;
    s.wall_time_s = start.elapsed().as_secs_f64();
    let run = out.write(&opts.out, s, None)?;
    Ok(ReferenceOutput { key, cache_hit: hit, run })
}
