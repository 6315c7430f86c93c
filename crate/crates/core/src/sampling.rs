//! Latin hypercube sampling and reproducible random streams.
//!
//! Every random draw in the crate goes through [`substream`]: a ChaCha20
//! generator keyed by SHA-256 of the root seed and a purpose tag, so adding
//! points of one kind never shifts the points of another.

use rand::distr::Open01;
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha20Rng;
use sha2::{Digest, Sha256};
use statrs::distribution::{ContinuousCDF, Normal};

use crate::basis::{DomainScaling, Marginal};
use crate::error::{Error, Result};

/// Name of the generator recorded in model metadata.
pub const RNG_NAME: &str = "chacha20/sha256-tagged";

/// Generator for the stream `(seed, tag)`.
pub fn substream(seed: u64, tag: &str) -> ChaCha20Rng {
    let mut h = Sha256::new();
    h.update(seed.to_le_bytes());
    h.update(b"/");
    h.update(tag.as_bytes());
    let digest: [u8; 32] = h.finalize().into();
    ChaCha20Rng::from_seed(digest)
}

/// Input to [`lhs_sample`].
#[derive(Debug, Clone, PartialEq)]
pub struct SampleSpec {
    pub n_points: usize,
    pub bounds: Vec<(f64, f64)>,
    pub seed: u64,
}

impl SampleSpec {
    pub fn validate(&self) -> Result<()> {
        if self.n_points == 0 {
            return Err(Error::InvalidInput("n_points must be >= 1".into()));
        }
        for &(lo, hi) in &self.bounds {
            if !(lo.is_finite() && hi.is_finite() && lo <= hi) {
                return Err(Error::InvalidInput(format!("invalid bounds [{lo}, {hi}]")));
            }
        }
        Ok(())
    }
}

/// Latin hypercube design over a box, drawn from the `"domain"` stream.
pub fn lhs_sample(spec: &SampleSpec) -> Result<Vec<Vec<f64>>> {
    spec.validate()?;
    let mut rng = substream(spec.seed, "domain");
    Ok(lhs_box(spec.n_points, &spec.bounds, &mut rng))
}

/// Unit-cube LHS: one point per stratum and dimension, strata paired by
/// independent permutations. Values lie in the open interval `(0, 1)`.
pub fn lhs_unit<R: Rng + ?Sized>(n: usize, dims: usize, rng: &mut R) -> Vec<Vec<f64>> {
    let mut points = vec![vec![0.0; dims]; n];
    let mut perm: Vec<usize> = (0..n).collect();
    let nf = n as f64;
    for d in 0..dims {
        perm.shuffle(rng);
        for (p, &stratum) in points.iter_mut().zip(&perm) {
            let u: f64 = rng.sample(Open01);
            p[d] = (stratum as f64 + u) / nf;
        }
    }
    points
}

pub fn lhs_box<R: Rng + ?Sized>(n: usize, bounds: &[(f64, f64)], rng: &mut R) -> Vec<Vec<f64>> {
    let mut points = lhs_unit(n, bounds.len(), rng);
    for p in &mut points {
        for (v, &(lo, hi)) in p.iter_mut().zip(bounds) {
            *v = lo + (hi - lo) * *v;
        }
    }
    points
}

/// Map a unit-interval probability to a marginal's quantile.
pub fn quantile(marginal: &Marginal, u: f64) -> f64 {
    match *marginal {
        Marginal::Uniform { lower, upper } => lower + (upper - lower) * u,
        Marginal::Normal { mean, std_dev } => {
            mean + std_dev * Normal::standard().inverse_cdf(u.clamp(1e-300, 1.0 - 1e-16))
        }
    }
}

/// LHS in probability space mapped through each marginal's quantile.
pub fn lhs_marginals<R: Rng + ?Sized>(
    n: usize,
    marginals: &[Marginal],
    rng: &mut R,
) -> Vec<Vec<f64>> {
    let mut points = lhs_unit(n, marginals.len(), rng);
    for p in &mut points {
        for (v, m) in p.iter_mut().zip(marginals) {
            *v = quantile(m, *v);
        }
    }
    points
}

/// Independent (non-stratified) draws from the marginals.
pub fn random_marginals<R: Rng + ?Sized>(
    n: usize,
    marginals: &[Marginal],
    rng: &mut R,
) -> Vec<Vec<f64>> {
    (0..n)
        .map(|_| {
            marginals
                .iter()
                .map(|m| quantile(m, rng.sample(Open01)))
                .collect()
        })
        .collect()
}

/// LHS on a face of the domain: coordinate `fixed_dim` is held at `value`
/// and the remaining dimensions are stratified over their marginals.
pub fn lhs_on_face<R: Rng + ?Sized>(
    n: usize,
    marginals: &[Marginal],
    fixed_dim: usize,
    value: f64,
    rng: &mut R,
) -> Vec<Vec<f64>> {
    let free: Vec<Marginal> = marginals
        .iter()
        .enumerate()
        .filter(|(i, _)| *i != fixed_dim)
        .map(|(_, m)| *m)
        .collect();
    lhs_marginals(n, &free, rng)
        .into_iter()
        .map(|mut p| {
            p.insert(fixed_dim, value);
            p
        })
        .collect()
}

/// Physical → standardized coordinates.
pub fn standardize(x: &[f64], scaling: &DomainScaling) -> Result<Vec<f64>> {
    scaling.standardize(x)
}

/// Standardized → physical coordinates.
pub fn unstandardize(z: &[f64], scaling: &DomainScaling) -> Result<Vec<f64>> {
    scaling.unstandardize(z)
}
