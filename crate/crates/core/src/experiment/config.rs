//! Experiment configuration file (TOML). Unknown keys are rejected.

use std::collections::BTreeMap;
use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::basis::Marginal;
use crate::error::{Error, Result};
use crate::sparse::SparseConfig;
use crate::trainer::{Init, TrainConfig, Weighting};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub name: String,
    #[serde(default)]
    pub seed: u64,
    pub problem: Problem,
    pub basis: BasisBlock,
    #[serde(default)]
    pub training: TrainingBlock,
    pub sparse: Option<SparseBlock>,
    #[serde(default)]
    pub data: DataBlock,
    pub reference: Option<ReferenceBlock>,
    #[serde(default)]
    pub report: ReportBlock,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Problem {
    Pde(PdeBlock),
    Eos(EosBlock),
    Beam(BeamBlock),
}

/// One input dimension. Give `lower`/`upper` for a uniform marginal or
/// `mean`/`std` for a normal one. Physical dimensions come first.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DimSpec {
    pub name: String,
    pub lower: Option<f64>,
    pub upper: Option<f64>,
    pub mean: Option<f64>,
    pub std: Option<f64>,
    #[serde(default)]
    pub stochastic: bool,
}

impl DimSpec {
    pub fn marginal(&self) -> Result<Marginal> {
        let m = match (self.lower, self.upper, self.mean, self.std) {
            (Some(lower), Some(upper), None, None) => Marginal::Uniform { lower, upper },
            (None, None, Some(mean), Some(std)) => Marginal::Normal { mean, std_dev: std },
            _ => {
                return Err(Error::Config(format!(
                    "dimension {:?} needs either lower/upper or mean/std",
                    self.name
                )))
            }
        };
        m.validate().map_err(|e| Error::Config(format!("dimension {:?}: {e}", self.name)))?;
        Ok(m)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum FaceSide {
    Lower,
    Upper,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BcSpec {
    pub dim: String,
    pub side: FaceSide,
    pub expr: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct InequalitySpec {
    pub label: String,
    /// Residual required to be `>= 0`.
    pub expr: String,
    pub penalty: f64,
    pub points: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Collocation {
    #[serde(default)]
    pub domain: usize,
    #[serde(default)]
    pub ic: usize,
    #[serde(default)]
    pub bc: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PdeBlock {
    pub dims: Vec<DimSpec>,
    /// Name of the time dimension, if any.
    pub time: Option<String>,
    #[serde(default)]
    pub params: BTreeMap<String, f64>,
    pub pde: Option<String>,
    pub ic: Option<String>,
    #[serde(default)]
    pub bc: Vec<BcSpec>,
    #[serde(default)]
    pub inequality: Vec<InequalitySpec>,
    #[serde(default)]
    pub collocation: Collocation,
}

/// Synthetic equation-of-state study: pressure and energy surrogates over
/// (V, T) trained on a few tabulated points under stability constraints.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EosBlock {
    #[serde(default = "eos_defaults::n_volume")]
    pub n_volume: usize,
    #[serde(default = "eos_defaults::n_temperature")]
    pub n_temperature: usize,
    #[serde(default = "eos_defaults::n_train")]
    pub n_train: usize,
    #[serde(default = "eos_defaults::splits")]
    pub splits: usize,
    #[serde(default = "eos_defaults::collocation")]
    pub collocation: usize,
    #[serde(default = "eos_defaults::penalty")]
    pub penalty: f64,
    #[serde(default = "eos_defaults::test_grid")]
    pub test_grid: usize,
    /// Relative noise added to the tabulated values.
    #[serde(default = "eos_defaults::noise")]
    pub noise: f64,
    #[serde(default = "eos_defaults::baseline_degree")]
    pub baseline_degree: usize,
    #[serde(default = "eos_defaults::holdout")]
    pub baseline_holdout: usize,
}

mod eos_defaults {
    pub fn n_volume() -> usize {
        12
    }
    pub fn n_temperature() -> usize {
        8
    }
    pub fn n_train() -> usize {
        8
    }
    pub fn splits() -> usize {
        100
    }
    pub fn collocation() -> usize {
        600
    }
    pub fn penalty() -> f64 {
        1e3
    }
    pub fn test_grid() -> usize {
        100
    }
    pub fn noise() -> f64 {
        0.01
    }
    pub fn baseline_degree() -> usize {
        3
    }
    pub fn holdout() -> usize {
        2
    }
}

/// Simply supported beam with a KL random field for Young's modulus.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BeamBlock {
    pub length: f64,
    pub load: f64,
    pub inertia: f64,
    pub modulus: f64,
    /// Coefficient of variation of the modulus.
    pub cov: f64,
    pub corr_length: f64,
    pub kl_terms: usize,
    #[serde(default = "beam_kl_grid")]
    pub kl_grid: usize,
    #[serde(default)]
    pub collocation: Collocation,
}

fn beam_kl_grid() -> usize {
    crate::randomfield::DEFAULT_GRID
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BasisBlock {
    pub p: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum InitMode {
    Auto,
    Zero,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrainingBlock {
    #[serde(default = "train_defaults::grad_tol")]
    pub grad_tol: f64,
    pub max_iterations: Option<usize>,
    #[serde(default = "train_defaults::init")]
    pub init: InitMode,
    /// Fixed weights `[T, PDE, IC, BC]`; adaptive weighting when absent.
    pub weights: Option<[f64; 4]>,
    #[serde(default = "train_defaults::weight_smoothing")]
    pub weight_smoothing: f64,
    #[serde(default = "train_defaults::penalty_rounds")]
    pub penalty_rounds: usize,
    #[serde(default = "train_defaults::penalty_growth")]
    pub penalty_growth: f64,
    #[serde(default = "train_defaults::violation_tol")]
    pub violation_tol: f64,
}

mod train_defaults {
    pub fn grad_tol() -> f64 {
        1e-8
    }
    pub fn init() -> super::InitMode {
        super::InitMode::Auto
    }
    pub fn weight_smoothing() -> f64 {
        0.1
    }
    pub fn penalty_rounds() -> usize {
        3
    }
    pub fn penalty_growth() -> f64 {
        10.0
    }
    pub fn violation_tol() -> f64 {
        1e-6
    }
}

impl Default for TrainingBlock {
    fn default() -> Self {
        Self {
            grad_tol: train_defaults::grad_tol(),
            max_iterations: None,
            init: InitMode::Auto,
            weights: None,
            weight_smoothing: train_defaults::weight_smoothing(),
            penalty_rounds: train_defaults::penalty_rounds(),
            penalty_growth: train_defaults::penalty_growth(),
            violation_tol: train_defaults::violation_tol(),
        }
    }
}

impl TrainingBlock {
    pub fn train_config(&self) -> TrainConfig {
        TrainConfig {
            grad_tol: self.grad_tol,
            max_iterations: self.max_iterations,
            init: match self.init {
                InitMode::Auto => Init::Auto,
                InitMode::Zero => Init::Zero,
            },
            weighting: self.weights.map_or(Weighting::Adaptive, Weighting::Fixed),
            weight_smoothing: self.weight_smoothing,
            penalty_rounds: self.penalty_rounds,
            penalty_growth: self.penalty_growth,
            violation_tol: self.violation_tol,
            record_history: true,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SparseBlock {
    pub tau: f64,
    pub p_min: Option<usize>,
    pub step: Option<usize>,
    pub cap: Option<usize>,
    /// Replaces `[data]` for the sparse command, which needs training data
    /// to rank the basis.
    pub data: Option<DataBlock>,
}

impl SparseBlock {
    pub fn sparse_config(&self) -> SparseConfig {
        SparseConfig { tau: self.tau, p_min: self.p_min, step: self.step, cap: self.cap }
    }
}

/// Model evaluations drawn from the reference solver.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DataBlock {
    #[serde(default)]
    pub evaluations: usize,
    /// Physical points per evaluation.
    #[serde(default)]
    pub points: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SolverKind {
    Heat2d,
    Burgers,
    Beam,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ReferenceBlock {
    pub solver: SolverKind,
    /// Spatial intervals per side.
    pub n: usize,
    /// Time steps (ignored by the beam solver).
    #[serde(default)]
    pub nt: usize,
    /// Name of the diffusion coefficient among the parameters or the
    /// stochastic dimensions.
    pub coefficient: Option<String>,
    #[serde(default = "default_mcs")]
    pub mcs_samples: usize,
}

fn default_mcs() -> usize {
    500
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ReportBlock {
    /// Points per physical axis for the accuracy grid.
    #[serde(default = "report_defaults::grid")]
    pub grid: usize,
    /// Points per spatial axis for moment fields.
    #[serde(default = "report_defaults::uq_grid")]
    pub uq_grid: usize,
    /// Fix time at this value for moment fields.
    pub t_slice: Option<f64>,
    /// Physical points for PDF and Sobol output.
    #[serde(default)]
    pub probes: Vec<Vec<f64>>,
    #[serde(default = "report_defaults::pdf_samples")]
    pub pdf_samples: usize,
}

mod report_defaults {
    pub fn grid() -> usize {
        50
    }
    pub fn uq_grid() -> usize {
        100
    }
    pub fn pdf_samples() -> usize {
        crate::postprocess::DEFAULT_PDF_SAMPLES
    }
}

impl Default for ReportBlock {
    fn default() -> Self {
        Self {
            grid: report_defaults::grid(),
            uq_grid: report_defaults::uq_grid(),
            t_slice: None,
            probes: Vec::new(),
            pdf_samples: report_defaults::pdf_samples(),
        }
    }
}

impl ExperimentConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        let cfg: Self = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path)?;
        Self::from_toml(&text).map_err(|e| match e {
            Error::Config(m) => Error::Config(format!("{}: {m}", path.display())),
            e => e,
        })
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }

    /// SHA-256 of the normalized configuration, as hex.
    pub fn hash(&self) -> String {
        hex_digest(self.to_toml().as_bytes())
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::Config(m));
        if self.name.is_empty() || self.name.chars().any(|c| !(c.is_ascii_alphanumeric() || c == '_' || c == '-')) {
            return bad(format!("name {:?} must be nonempty [A-Za-z0-9_-]", self.name));
        }
        if self.basis.p == 0 {
            return bad("basis.p must be at least 1".into());
        }
        if !(self.training.grad_tol > 0.0) {
            return bad("training.grad_tol must be positive".into());
        }
        if let Some(s) = &self.sparse {
            if !(s.tau > 0.0) {
                return bad("sparse.tau must be positive".into());
            }
        }
        if self.report.grid < 2 || self.report.uq_grid < 2 {
            return bad("report grids need at least 2 points per axis".into());
        }
        match &self.problem {
            Problem::Pde(p) => {
                if p.dims.is_empty() {
                    return bad("problem.pde.dims is empty".into());
                }
                let mut seen_stochastic = false;
                for (i, d) in p.dims.iter().enumerate() {
                    d.marginal()?;
                    if d.stochastic {
                        seen_stochastic = true;
                    } else if seen_stochastic {
                        return bad(format!("physical dimension {:?} after a stochastic one", d.name));
                    }
                    if p.dims[..i].iter().any(|o| o.name == d.name) {
                        return bad(format!("duplicate dimension {:?}", d.name));
                    }
                }
                if let Some(t) = &p.time {
                    if !p.dims.iter().any(|d| &d.name == t && !d.stochastic) {
                        return bad(format!("time dimension {t:?} is not a physical dimension"));
                    }
                }
            }
            Problem::Eos(e) => {
                if e.n_train < 3 || e.n_train + e.baseline_holdout >= e.n_volume * e.n_temperature {
                    return bad("eos.n_train out of range".into());
                }
                if e.baseline_holdout == 0 || e.baseline_holdout >= e.n_train {
                    return bad("eos.baseline_holdout must be in [1, n_train)".into());
                }
                if e.splits == 0 || e.test_grid < 2 || !(e.penalty > 0.0) || !(e.noise >= 0.0) {
                    return bad("eos.splits, test_grid, penalty or noise out of range".into());
                }
            }
            Problem::Beam(b) => {
                if !(b.length > 0.0 && b.inertia > 0.0 && b.modulus > 0.0 && b.cov > 0.0 && b.corr_length > 0.0) {
                    return bad("beam length, inertia, modulus, cov and corr_length must be positive".into());
                }
                if b.kl_terms == 0 {
                    return bad("beam.kl_terms must be at least 1".into());
                }
            }
        }
        if let Some(r) = &self.reference {
            if r.n < 2 || r.mcs_samples < 2 {
                return bad("reference.n and reference.mcs_samples must be at least 2".into());
            }
            let want_beam = matches!(self.problem, Problem::Beam(_));
            if (r.solver == SolverKind::Beam) != want_beam {
                return bad("reference.solver does not match the problem".into());
            }
            if r.solver != SolverKind::Beam && r.nt == 0 {
                return bad("reference.nt must be positive".into());
            }
        }
        Ok(())
    }
}

pub fn hex_digest(bytes: &[u8]) -> String {
    Sha256::digest(bytes).iter().map(|b| format!("{b:02x}")).collect()
}

/// Presets shipped with the library.
pub const PRESETS: [(&str, &str); 6] = [
    ("heat2d_det", include_str!("../../presets/heat2d_det.toml")),
    ("heat2d_stoch", include_str!("../../presets/heat2d_stoch.toml")),
    ("burgers_det", include_str!("../../presets/burgers_det.toml")),
    ("burgers_stoch", include_str!("../../presets/burgers_stoch.toml")),
    ("eos_synthetic", include_str!("../../presets/eos_synthetic.toml")),
    ("beam_kl", include_str!("../../presets/beam_kl.toml")),
];

pub fn preset(name: &str) -> Result<ExperimentConfig> {
    let (_, text) = PRESETS
        .iter()
        .find(|(n, _)| *n == name)
        .ok_or_else(|| Error::Config(format!("unknown preset {name:?}")))?;
    ExperimentConfig::from_toml(text)
}

impl ExperimentConfig {
    pub fn problem_eos(&self) -> Option<&EosBlock> {
        match &self.problem {
            Problem::Eos(e) => Some(e),
            _ => None,
        }
    }

    pub fn problem_kind(&self) -> &'static str {
        match self.problem {
            Problem::Pde(_) => "pde",
            Problem::Eos(_) => "eos",
            Problem::Beam(_) => "beam",
        }
    }
}
