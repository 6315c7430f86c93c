//! Monte Carlo moments of a vector-valued solver output.
//!
//! Samples are processed in fixed chunks, each with its own substream
//! `mcs/chunk_i`. Chunk statistics are accumulated with Welford's update and
//! merged in chunk order, so results depend only on the seed.

use rand_chacha::ChaCha20Rng;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::sampling::substream;

const CHUNK: usize = 64;

#[derive(Debug, Clone, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct McsResult {
    pub n: usize,
    pub mean: Vec<f64>,
    pub std: Vec<f64>,
    /// Output indices whose sample values were kept.
    pub probes: Vec<usize>,
    /// `samples[p]` holds every value of output `probes[p]`, in sample order.
    pub samples: Vec<Vec<f64>>,
}

#[derive(Clone)]
struct Stats {
    n: usize,
    mean: Vec<f64>,
    m2: Vec<f64>,
    kept: Vec<Vec<f64>>,
}

impl Stats {
    fn push(&mut self, y: &[f64], probes: &[usize]) {
        if self.mean.is_empty() {
            self.mean = vec![0.0; y.len()];
            self.m2 = vec![0.0; y.len()];
        }
        self.n += 1;
        let n = self.n as f64;
        for ((m, s), v) in self.mean.iter_mut().zip(&mut self.m2).zip(y) {
            let d = v - *m;
            *m += d / n;
            *s += d * (v - *m);
        }
        for (k, &p) in self.kept.iter_mut().zip(probes) {
            k.push(y[p]);
        }
    }

    fn merge(&mut self, other: Stats) {
        if other.n == 0 {
            return;
        }
        if self.n == 0 {
            *self = other;
            return;
        }
        let (na, nb) = (self.n as f64, other.n as f64);
        let n = na + nb;
        for i in 0..self.mean.len() {
            let d = other.mean[i] - self.mean[i];
            self.mean[i] += d * nb / n;
            self.m2[i] += other.m2[i] + d * d * na * nb / n;
        }
        self.n += other.n;
        for (a, b) in self.kept.iter_mut().zip(other.kept) {
            a.extend(b);
        }
    }
}

/// Runs `solver(sampler(rng))` for `n` samples.
pub fn mcs_moments<I, S, F>(n: usize, seed: u64, probes: &[usize], sampler: S, solver: F) -> Result<McsResult>
where
    S: Fn(&mut ChaCha20Rng) -> I + Sync,
    F: Fn(&I) -> Result<Vec<f64>> + Sync,
{
    if n < 2 {
        return Err(Error::InvalidInput(format!("need at least 2 samples, got {n}")));
    }
    let chunks: Vec<Stats> = (0..n.div_ceil(CHUNK))
        .into_par_iter()
        .map(|c| {
            let mut rng = substream(seed, &format!("mcs/chunk_{c}"));
            let mut st = Stats { n: 0, mean: vec![], m2: vec![], kept: vec![Vec::new(); probes.len()] };
            for index in c * CHUNK..((c + 1) * CHUNK).min(n) {
                let input = sampler(&mut rng);
                let y = solver(&input).map_err(|e| Error::Sample { index, source: Box::new(e) })?;
                if let Some(&p) = probes.iter().find(|&&p| p >= y.len()) {
                    return Err(Error::InvalidInput(format!("probe {p} beyond output length {}", y.len())));
                }
                if !st.mean.is_empty() && st.mean.len() != y.len() {
                    return Err(Error::Sample {
                        index,
                        source: Box::new(Error::DimensionMismatch { expected: st.mean.len(), got: y.len() }),
                    });
                }
                st.push(&y, probes);
            }
            Ok(st)
        })
        .collect::<Result<_>>()?;

    let mut total = Stats { n: 0, mean: vec![], m2: vec![], kept: vec![Vec::new(); probes.len()] };
    for c in chunks {
        if !total.mean.is_empty() && !c.mean.is_empty() && c.mean.len() != total.mean.len() {
            return Err(Error::DimensionMismatch { expected: total.mean.len(), got: c.mean.len() });
        }
        total.merge(c);
    }
    let std = total.m2.iter().map(|s| (s / (total.n - 1) as f64).sqrt()).collect();
    Ok(McsResult { n: total.n, mean: total.mean, std, probes: probes.to_vec(), samples: total.kept })
}
