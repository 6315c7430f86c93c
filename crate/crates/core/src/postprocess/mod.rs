//! Statistics of a surrogate at a fixed physical location.
//!
//! Splitting every multi-index into its physical and stochastic parts turns
//! the surrogate, conditioned on the physical coordinates, into an ordinary
//! expansion in the random inputs. Orthonormality then gives the mean,
//! variance and Sobol indices directly from the reduced coefficients.

use std::collections::BTreeMap;
use std::fmt::Write as _;

use rayon::prelude::*;

use crate::basis::{graded_lex_cmp, multivariate_eval, DomainScaling, MultiIndexSet};
use crate::error::{check_dims, Error, Result};
use crate::sampling::{random_marginals, substream};
use crate::surrogate::SurrogateModel;

/// Draws per parallel work item in the sampling routines.
const MC_CHUNK: usize = 8192;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct IndexPartition {
    pub n_physical: usize,
    /// Unique stochastic sub-tuples in graded-lex order.
    pub stochastic: Vec<Vec<u16>>,
    /// For each stochastic sub-tuple, the paired physical sub-tuples (graded-lex
    /// order) and the position of the full index in the basis.
    pub physical: Vec<Vec<(Vec<u16>, usize)>>,
}

impl IndexPartition {
    pub fn len(&self) -> usize {
        self.stochastic.len()
    }

    pub fn is_empty(&self) -> bool {
        self.stochastic.is_empty()
    }
}

pub fn partition_indices(indices: &MultiIndexSet, n_physical: usize) -> Result<IndexPartition> {
    if n_physical >= indices.dims() {
        return Err(Error::InvalidInput(format!(
            "n_physical {n_physical} leaves no stochastic dimension out of {}",
            indices.dims()
        )));
    }
    let mut groups: BTreeMap<Vec<u16>, Vec<(Vec<u16>, usize)>> = BTreeMap::new();
    for (pos, alpha) in indices.iter().enumerate() {
        let (phys, stoch) = alpha.split_at(n_physical);
        groups.entry(stoch.to_vec()).or_default().push((phys.to_vec(), pos));
    }
    let mut entries: Vec<_> = groups.into_iter().collect();
    entries.sort_by(|a, b| graded_lex_cmp(&a.0, &b.0));
    let (stochastic, mut physical): (Vec<_>, Vec<_>) = entries.into_iter().unzip();
    for t in &mut physical {
        t.sort_by(|a: &(Vec<u16>, usize), b| graded_lex_cmp(&a.0, &b.0));
    }
    Ok(IndexPartition { n_physical, stochastic, physical })
}

/// Expansion in the stochastic inputs at fixed physical coordinates.
#[derive(Debug, Clone, PartialEq)]
pub struct ReducedExpansion {
    pub x_phys: Vec<f64>,
    pub indices: Vec<Vec<u16>>,
    pub coefficients: Vec<f64>,
    scaling: DomainScaling,
    max_degree: Vec<usize>,
}

impl ReducedExpansion {
    pub fn scaling(&self) -> &DomainScaling {
        &self.scaling
    }

    pub fn evaluate(&self, xi: &[f64]) -> Result<f64> {
        check_dims(self.scaling.dims(), xi.len())?;
        // One recurrence per dimension, then products of table entries.
        let tables: Vec<Vec<f64>> = self
            .scaling
            .marginals()
            .iter()
            .zip(xi)
            .zip(&self.max_degree)
            .map(|((m, &x), &p)| {
                let mut t = vec![0.0; p + 1];
                m.family().fill(p, 0, m.standardize(x), &mut t);
                t
            })
            .collect();
        let mut total = 0.0;
        for (alpha, c) in self.indices.iter().zip(&self.coefficients) {
            if *c != 0.0 {
                total += c * alpha.iter().zip(&tables).map(|(&a, t)| t[a as usize]).product::<f64>();
            }
        }
        Ok(total)
    }

    pub fn mean(&self) -> f64 {
        self.indices
            .iter()
            .zip(&self.coefficients)
            .find(|(a, _)| a.iter().all(|&d| d == 0))
            .map_or(0.0, |(_, c)| *c)
    }

    pub fn variance(&self) -> f64 {
        self.indices
            .iter()
            .zip(&self.coefficients)
            .filter(|(a, _)| a.iter().any(|&d| d != 0))
            .map(|(_, c)| c * c)
            .sum()
    }

    pub fn sobol(&self) -> Result<SobolIndices> {
        let var = self.variance();
        if !(var > 0.0) {
            return Err(Error::ZeroVariance);
        }
        let dims = self.scaling.dims();
        let mut first = vec![0.0; dims];
        let mut total = vec![0.0; dims];
        for (alpha, c) in self.indices.iter().zip(&self.coefficients) {
            let active: Vec<usize> = (0..dims).filter(|&i| alpha[i] != 0).collect();
            let share = c * c / var;
            if active.len() == 1 {
                first[active[0]] += share;
            }
            for &i in &active {
                total[i] += share;
            }
        }
        Ok(SobolIndices { first, total })
    }
}

/// `y_{a_xi}(X) = sum_{a_X} y_{(a_X, a_xi)} Psi_{a_X}(X)`.
pub fn reduce(model: &SurrogateModel, x_phys: &[f64]) -> Result<ReducedExpansion> {
    let n_phys = model.n_physical();
    check_dims(n_phys, x_phys.len())?;
    let part = partition_indices(model.indices(), n_phys)?;
    let all = model.scaling();
    let phys_scaling = if n_phys > 0 { Some(all.slice(0..n_phys)?) } else { None };
    let stoch_scaling = all.slice(n_phys..all.dims())?;
    let coef = model.coefficients();
    let coefficients = part
        .physical
        .iter()
        .map(|pairs| {
            pairs.iter().try_fold(0.0, |acc, (a_x, pos)| {
                let psi = match &phys_scaling {
                    Some(sc) => multivariate_eval(a_x, sc, x_phys)?,
                    None => 1.0,
                };
                Ok::<_, Error>(acc + coef[*pos] * psi)
            })
        })
        .collect::<Result<Vec<_>>>()?;
    let mut max_degree = vec![0; stoch_scaling.dims()];
    for alpha in &part.stochastic {
        for (m, &a) in max_degree.iter_mut().zip(alpha) {
            *m = (*m).max(a as usize);
        }
    }
    Ok(ReducedExpansion {
        x_phys: x_phys.to_vec(),
        indices: part.stochastic,
        coefficients,
        scaling: stoch_scaling,
        max_degree,
    })
}

/// `(mean, variance)` over the random inputs at `x_phys`.
pub fn conditional_moments(model: &SurrogateModel, x_phys: &[f64]) -> Result<(f64, f64)> {
    let r = reduce(model, x_phys)?;
    Ok((r.mean(), r.variance()))
}

#[derive(Debug, Clone, PartialEq)]
pub struct SobolIndices {
    pub first: Vec<f64>,
    pub total: Vec<f64>,
}

impl SobolIndices {
    /// CSV `dimension,S,S_T` using the given stochastic dimension names.
    pub fn to_csv(&self, names: &[String]) -> String {
        let mut out = String::from("dimension,S,S_T\n");
        for (i, (s, t)) in self.first.iter().zip(&self.total).enumerate() {
            let name = names.get(i).map_or_else(|| format!("xi{i}"), Clone::clone);
            let _ = writeln!(out, "{name},{s},{t}");
        }
        out
    }
}

pub fn sobol_indices(model: &SurrogateModel, x_phys: &[f64]) -> Result<SobolIndices> {
    reduce(model, x_phys)?.sobol()
}

pub fn sobol_first_order(model: &SurrogateModel, x_phys: &[f64]) -> Result<Vec<f64>> {
    Ok(sobol_indices(model, x_phys)?.first)
}

pub fn sobol_total(model: &SurrogateModel, x_phys: &[f64]) -> Result<Vec<f64>> {
    Ok(sobol_indices(model, x_phys)?.total)
}

/// Surrogate values at `x_phys` for `n` independent draws of the random
/// inputs. Chunk `i` uses the substream `mc/chunk_i`.
pub fn sample_reduced(reduced: &ReducedExpansion, n: usize, seed: u64) -> Result<Vec<f64>> {
    let marginals = reduced.scaling.marginals();
    let chunks: Vec<Vec<f64>> = (0..n.div_ceil(MC_CHUNK))
        .into_par_iter()
        .map(|c| {
            let len = MC_CHUNK.min(n - c * MC_CHUNK);
            let mut rng = substream(seed, &format!("mc/chunk_{c}"));
            random_marginals(len, marginals, &mut rng)
                .iter()
                .map(|xi| reduced.evaluate(xi))
                .collect::<Result<Vec<f64>>>()
        })
        .collect::<Result<_>>()?;
    Ok(chunks.concat())
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum DensityMethod {
    /// Gaussian kernel; `None` selects Silverman's rule.
    Kernel { bandwidth: Option<f64> },
    Histogram { bins: usize },
}

#[derive(Debug, Clone, PartialEq)]
pub struct Density {
    pub grid: Vec<f64>,
    pub density: Vec<f64>,
    /// Kernel bandwidth or bin width.
    pub width: f64,
    /// Set when every sample had the same value.
    pub point_mass: Option<f64>,
    pub samples: Vec<f64>,
}

impl Density {
    pub fn to_csv(&self) -> String {
        let mut out = String::from("value,density\n");
        for (x, d) in self.grid.iter().zip(&self.density) {
            let _ = writeln!(out, "{x},{d}");
        }
        out
    }
}

pub const DEFAULT_PDF_SAMPLES: usize = 100_000;
const GRID_POINTS: usize = 200;

pub fn pdf_estimate(
    model: &SurrogateModel,
    x_phys: &[f64],
    n_samples: usize,
    method: DensityMethod,
    seed: u64,
) -> Result<Density> {
    if n_samples < 1000 {
        return Err(Error::InvalidInput(format!("need at least 1000 samples, got {n_samples}")));
    }
    let samples = sample_reduced(&reduce(model, x_phys)?, n_samples, seed)?;
    density_of(samples, method)
}

/// Density estimate of arbitrary samples.
pub fn density_of(samples: Vec<f64>, method: DensityMethod) -> Result<Density> {
    if samples.is_empty() {
        return Err(Error::InvalidInput("no samples".into()));
    }
    if samples.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite { what: "density sample" });
    }
    let (lo, hi) = samples.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), &v| (a.min(v), b.max(v)));
    if hi == lo {
        return Ok(Density { grid: vec![], density: vec![], width: 0.0, point_mass: Some(lo), samples });
    }
    let n = samples.len() as f64;
    match method {
        DensityMethod::Kernel { bandwidth } => {
            let h = match bandwidth {
                Some(h) if h > 0.0 => h,
                Some(h) => return Err(Error::InvalidInput(format!("bandwidth must be positive, got {h}"))),
                None => silverman_bandwidth(&samples),
            };
            let (a, b) = (lo - 3.0 * h, hi + 3.0 * h);
            let grid: Vec<f64> = (0..GRID_POINTS).map(|i| a + (b - a) * i as f64 / (GRID_POINTS - 1) as f64).collect();
            let norm = 1.0 / (n * h * (2.0 * std::f64::consts::PI).sqrt());
            let density = grid
                .par_iter()
                .map(|&g| samples.iter().map(|&s| (-0.5 * ((g - s) / h).powi(2)).exp()).sum::<f64>() * norm)
                .collect();
            Ok(Density { grid, density, width: h, point_mass: None, samples })
        }
        DensityMethod::Histogram { bins } => {
            if bins == 0 {
                return Err(Error::InvalidInput("need at least one bin".into()));
            }
            let w = (hi - lo) / bins as f64;
            let mut counts = vec![0usize; bins];
            for &s in &samples {
                counts[(((s - lo) / w) as usize).min(bins - 1)] += 1;
            }
            let grid = (0..bins).map(|i| lo + (i as f64 + 0.5) * w).collect();
            let density = counts.iter().map(|&c| c as f64 / (n * w)).collect();
            Ok(Density { grid, density, width: w, point_mass: None, samples })
        }
    }
}

/// `0.9 min(sd, IQR/1.34) n^(-1/5)`.
pub fn silverman_bandwidth(samples: &[f64]) -> f64 {
    let n = samples.len() as f64;
    let mean = samples.iter().sum::<f64>() / n;
    let sd = (samples.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0).max(1.0)).sqrt();
    let mut sorted = samples.to_vec();
    sorted.sort_by(f64::total_cmp);
    let q = |p: f64| {
        let pos = p * (sorted.len() - 1) as f64;
        let i = pos.floor() as usize;
        let f = pos - i as f64;
        sorted[i] + f * (sorted[(i + 1).min(sorted.len() - 1)] - sorted[i])
    };
    let iqr = q(0.75) - q(0.25);
    let spread = if iqr > 0.0 { sd.min(iqr / 1.34) } else { sd };
    0.9 * spread * n.powf(-0.2)
}

/// Two-sample Kolmogorov–Smirnov statistic.
pub fn ks_statistic(a: &[f64], b: &[f64]) -> f64 {
    let mut a = a.to_vec();
    let mut b = b.to_vec();
    a.sort_by(f64::total_cmp);
    b.sort_by(f64::total_cmp);
    let (na, nb) = (a.len() as f64, b.len() as f64);
    let (mut i, mut j) = (0, 0);
    let mut d = 0.0f64;
    while i < a.len() && j < b.len() {
        let v = a[i].min(b[j]);
        while i < a.len() && a[i] <= v {
            i += 1;
        }
        while j < b.len() && b[j] <= v {
            j += 1;
        }
        d = d.max((i as f64 / na - j as f64 / nb).abs());
    }
    d
}

/// Mean and standard deviation of the surrogate over a grid of physical
/// points, as CSV rows `x..., mean, std`.
pub fn moment_table(model: &SurrogateModel, points: &[Vec<f64>]) -> Result<String> {
    let mut out = String::new();
    let names = &model.dim_names()[..model.n_physical()];
    let _ = writeln!(out, "{},mean,std", names.join(","));
    let rows = points
        .par_iter()
        .map(|x| conditional_moments(model, x))
        .collect::<Result<Vec<_>>>()?;
    for (x, (m, v)) in points.iter().zip(rows) {
        let coords: Vec<String> = x.iter().map(|v| v.to_string()).collect();
        let _ = writeln!(out, "{},{},{}", coords.join(","), m, v.max(0.0).sqrt());
    }
    Ok(out)
}

#[cfg(test)]
mod tests;
