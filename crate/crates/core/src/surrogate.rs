//! Surrogate model container, design matrices, least squares and the model
//! file format.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::Path;

use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;
use sha2::{Digest, Sha256};

use crate::basis::{DomainScaling, Marginal, MultiIndexSet, TensorBasis};
use crate::error::{check_dims, Error, Result};

/// Version written to and required from model files.
pub const SCHEMA_VERSION: u32 = 1;
const MAGIC: &str = "pc2-model";

/// Relative tolerance on the diagonal of `R` below which a design is
/// treated as rank deficient.
pub const RANK_TOL: f64 = 1e-10;

/// Seeds and provenance stored alongside the coefficients.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct ModelMetadata {
    pub rng: String,
    pub seed: u64,
    /// Free-form key/value pairs; keys must not contain whitespace.
    pub provenance: BTreeMap<String, String>,
}

/// A polynomial chaos surrogate `sum_alpha y_alpha Psi_alpha(x)`.
///
/// The first `n_physical` dimensions are physical coordinates (space, time);
/// the rest are stochastic inputs.
#[derive(Debug, Clone, PartialEq)]
pub struct SurrogateModel {
    basis: TensorBasis,
    coefficients: Vec<f64>,
    dim_names: Vec<String>,
    n_physical: usize,
    pub metadata: ModelMetadata,
}

impl SurrogateModel {
    pub fn new(
        basis: TensorBasis,
        coefficients: Vec<f64>,
        dim_names: Vec<String>,
        n_physical: usize,
    ) -> Result<Self> {
        check_dims(basis.len(), coefficients.len())?;
        check_dims(basis.dims(), dim_names.len())?;
        if n_physical > basis.dims() {
            return Err(Error::InvalidInput(format!(
                "{n_physical} physical dims but only {} dims in total",
                basis.dims()
            )));
        }
        for name in &dim_names {
            if name.is_empty() || name.chars().any(char::is_whitespace) {
                return Err(Error::InvalidInput(format!("invalid dimension name {name:?}")));
            }
        }
        Ok(Self {
            basis,
            coefficients,
            dim_names,
            n_physical,
            metadata: ModelMetadata {
                rng: crate::sampling::RNG_NAME.to_string(),
                ..ModelMetadata::default()
            },
        })
    }

    /// Model with all coefficients zero.
    pub fn zeros(basis: TensorBasis, dim_names: Vec<String>, n_physical: usize) -> Result<Self> {
        let p = basis.len();
        Self::new(basis, vec![0.0; p], dim_names, n_physical)
    }

    pub fn basis(&self) -> &TensorBasis {
        &self.basis
    }

    pub fn indices(&self) -> &MultiIndexSet {
        self.basis.indices()
    }

    pub fn scaling(&self) -> &DomainScaling {
        self.basis.scaling()
    }

    pub fn coefficients(&self) -> &[f64] {
        &self.coefficients
    }

    pub fn set_coefficients(&mut self, coefficients: Vec<f64>) -> Result<()> {
        check_dims(self.coefficients.len(), coefficients.len())?;
        self.coefficients = coefficients;
        Ok(())
    }

    pub fn with_coefficients(&self, coefficients: Vec<f64>) -> Result<Self> {
        let mut m = self.clone();
        m.set_coefficients(coefficients)?;
        Ok(m)
    }

    pub fn dim_names(&self) -> &[String] {
        &self.dim_names
    }

    pub fn dims(&self) -> usize {
        self.basis.dims()
    }

    pub fn n_physical(&self) -> usize {
        self.n_physical
    }

    pub fn n_stochastic(&self) -> usize {
        self.dims() - self.n_physical
    }

    pub fn len(&self) -> usize {
        self.coefficients.len()
    }

    pub fn is_empty(&self) -> bool {
        self.coefficients.is_empty()
    }

    pub fn evaluate(&self, x: &[f64]) -> Result<f64> {
        let row = self.basis.row(x, None)?;
        Ok(dot(&row, &self.coefficients))
    }

    pub fn evaluate_partial(&self, x: &[f64], orders: &[u8]) -> Result<f64> {
        let row = self.basis.row(x, Some(orders))?;
        Ok(dot(&row, &self.coefficients))
    }

    pub fn evaluate_many(&self, points: &[Vec<f64>]) -> Result<Vec<f64>> {
        points.par_iter().map(|x| self.evaluate(x)).collect()
    }

    /// Writes the model in the line-based text format. Floats are stored as
    /// the hex digits of their IEEE-754 bits, so the round trip is exact.
    pub fn to_text(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(s, "{MAGIC} {SCHEMA_VERSION}");
        let _ = writeln!(s, "dims {} physical {}", self.dims(), self.n_physical);
        for (name, m) in self.dim_names.iter().zip(self.scaling().marginals()) {
            let (kind, a, b) = match *m {
                Marginal::Uniform { lower, upper } => ("uniform", lower, upper),
                Marginal::Normal { mean, std_dev } => ("normal", mean, std_dev),
            };
            let _ = writeln!(
                s,
                "dim {name} {} {kind} {} {} # {a:e} {b:e}",
                m.family().name(),
                hex(a),
                hex(b)
            );
        }
        let _ = writeln!(s, "rng {}", self.metadata.rng);
        let _ = writeln!(s, "seed {}", self.metadata.seed);
        for (k, v) in &self.metadata.provenance {
            let _ = writeln!(s, "meta {k} {}", v.replace(['\n', '#'], " "));
        }
        let _ = writeln!(s, "terms {}", self.len());
        for (alpha, &c) in self.indices().iter().zip(&self.coefficients) {
            let tuple: Vec<String> = alpha.iter().map(u16::to_string).collect();
            let _ = writeln!(s, "{} {} # {c:e}", tuple.join(","), hex(c));
        }
        let digest = Sha256::digest(s.as_bytes());
        let _ = writeln!(s, "checksum sha256 {}", to_hex(&digest));
        s
    }

    pub fn from_text(text: &str) -> Result<Self> {
        let body_end = text
            .rfind("checksum sha256 ")
            .ok_or_else(|| Error::Schema("missing checksum line (truncated file?)".into()))?;
        let (body, tail) = text.split_at(body_end);
        let stored = tail["checksum sha256 ".len()..].trim();
        let actual = to_hex(&Sha256::digest(body.as_bytes()));
        if stored != actual {
            return Err(Error::Checksum("<model text>".into()));
        }

        let mut lines = body.lines().map(strip_comment).filter(|l| !l.is_empty());
        let mut next = |what: &str| {
            lines
                .next()
                .ok_or_else(|| Error::Schema(format!("unexpected end of file, expected {what}")))
        };

        let header = next("header")?;
        let version = header
            .strip_prefix(MAGIC)
            .map(str::trim)
            .ok_or_else(|| Error::Schema("not a model file".into()))?;
        if version != SCHEMA_VERSION.to_string() {
            return Err(Error::Schema(format!(
                "schema version {version} is not supported (expected {SCHEMA_VERSION})"
            )));
        }

        let dims_line = fields(next("dims")?);
        let (dims, n_physical) = match dims_line.as_slice() {
            ["dims", d, "physical", p] => (parse_usize(d)?, parse_usize(p)?),
            _ => return Err(Error::Schema("malformed dims line".into())),
        };

        let mut names = Vec::with_capacity(dims);
        let mut marginals = Vec::with_capacity(dims);
        for _ in 0..dims {
            let f = fields(next("dim")?);
            let (name, kind, a, b) = match f.as_slice() {
                ["dim", name, _family, kind, a, b] => (*name, *kind, parse_hex(a)?, parse_hex(b)?),
                _ => return Err(Error::Schema("malformed dim line".into())),
            };
            names.push(name.to_string());
            marginals.push(match kind {
                "uniform" => Marginal::Uniform { lower: a, upper: b },
                "normal" => Marginal::Normal { mean: a, std_dev: b },
                other => return Err(Error::Schema(format!("unknown distribution {other}"))),
            });
        }

        let mut metadata = ModelMetadata::default();
        let mut terms = None;
        while terms.is_none() {
            let line = next("terms")?;
            let (key, rest) = line.split_once(' ').unwrap_or((line, ""));
            match key {
                "rng" => metadata.rng = rest.to_string(),
                "seed" => {
                    metadata.seed = rest
                        .parse()
                        .map_err(|_| Error::Schema(format!("bad seed {rest:?}")))?
                }
                "meta" => {
                    let (k, v) = rest.split_once(' ').unwrap_or((rest, ""));
                    metadata.provenance.insert(k.to_string(), v.to_string());
                }
                "terms" => terms = Some(parse_usize(rest)?),
                other => return Err(Error::Schema(format!("unexpected line {other:?}"))),
            }
        }

        let n_terms = terms.unwrap_or(0);
        let mut tuples = Vec::with_capacity(n_terms);
        let mut coefficients = Vec::with_capacity(n_terms);
        for _ in 0..n_terms {
            let f = fields(next("term")?);
            let [tuple, coef] = f.as_slice() else {
                return Err(Error::Schema("malformed term line".into()));
            };
            let alpha = tuple
                .split(',')
                .map(|v| v.parse::<u16>().map_err(|_| Error::Schema(format!("bad index {v:?}"))))
                .collect::<Result<Vec<_>>>()?;
            tuples.push(alpha);
            coefficients.push(parse_hex(coef)?);
        }
        if lines.next().is_some() {
            return Err(Error::Schema("trailing content after terms".into()));
        }

        let indices = MultiIndexSet::from_tuples(dims, tuples.clone())
            .map_err(|e| Error::Schema(e.to_string()))?;
        if indices.iter().zip(&tuples).any(|(a, b)| a != b.as_slice()) {
            return Err(Error::Schema("terms are not in graded lexicographic order".into()));
        }
        let scaling = DomainScaling::new(marginals).map_err(|e| Error::Schema(e.to_string()))?;
        let basis = TensorBasis::new(scaling, indices)?;
        let mut model = Self::new(basis, coefficients, names, n_physical)?;
        model.metadata = metadata;
        Ok(model)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        std::fs::write(path, self.to_text())?;
        Ok(())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path)?;
        Self::from_text(&text).map_err(|e| match e {
            Error::Checksum(_) => Error::Checksum(path.to_path_buf()),
            other => other,
        })
    }
}

fn strip_comment(line: &str) -> &str {
    line.split_once('#').map_or(line, |(a, _)| a).trim()
}

fn fields(line: &str) -> Vec<&str> {
    line.split_whitespace().collect()
}

fn parse_usize(s: &str) -> Result<usize> {
    s.trim().parse().map_err(|_| Error::Schema(format!("expected an integer, got {s:?}")))
}

fn hex(v: f64) -> String {
    format!("{:016x}", v.to_bits())
}

fn parse_hex(s: &str) -> Result<f64> {
    if s.len() != 16 {
        return Err(Error::Schema(format!("bad float encoding {s:?}")));
    }
    u64::from_str_radix(s, 16)
        .map(f64::from_bits)
        .map_err(|_| Error::Schema(format!("bad float encoding {s:?}")))
}

pub(crate) fn to_hex(bytes: &[u8]) -> String {
    bytes.iter().map(|b| format!("{b:02x}")).collect()
}

pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// `A_ij = Psi_j(x_i)` (or the `orders` partial when given).
pub fn build_design_matrix(
    basis: &TensorBasis,
    points: &[Vec<f64>],
    orders: Option<&[u8]>,
) -> Result<DMatrix<f64>> {
    let p = basis.len();
    let mut data = vec![0.0; points.len() * p];
    if p > 0 {
        data.par_chunks_mut(p)
            .zip(points.par_iter())
            .try_for_each(|(row, x)| basis.row_into(x, orders, row))?;
    }
    Ok(DMatrix::from_row_slice(points.len(), p, &data))
}

/// Least-squares solution of `A y = b` through a column-pivoted QR
/// factorization.
pub fn ols_solve(a: &DMatrix<f64>, b: &[f64]) -> Result<Vec<f64>> {
    let (rows, cols) = a.shape();
    check_dims(rows, b.len())?;
    if rows < cols {
        return Err(Error::UnderdeterminedSystem { rows, cols });
    }
    if cols == 0 {
        return Ok(Vec::new());
    }
    let qr = a.clone().col_piv_qr();
    let mut rhs = DVector::from_column_slice(b);
    qr.q_tr_mul(&mut rhs);
    let (_, r, perm) = qr.unpack();

    let r00 = r[(0, 0)].abs();
    let rank = (0..cols)
        .take_while(|&i| r[(i, i)].abs() > RANK_TOL * r00 && r00 > 0.0)
        .count();
    if rank < cols {
        return Err(Error::RankDeficient { rank, cols });
    }

    let mut z = rhs.rows(0, cols).into_owned();
    let r_sq = r.columns(0, cols).into_owned();
    if !r_sq.solve_upper_triangular_mut(&mut z) {
        return Err(Error::RankDeficient { rank: cols - 1, cols });
    }
    perm.inv_permute_rows(&mut z);
    Ok(z.iter().copied().collect())
}
