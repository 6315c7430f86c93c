//! Reference solvers and Monte Carlo harness used as ground truth.

mod beam;
mod burgers;
mod heat;
mod mcs;

pub use beam::{beam_solve, BeamProblem};
pub use burgers::{burgers_solve, cole_hopf, cole_hopf_integral, BurgersParams, ColeHopf};
pub use heat::{heat2d_solve, HeatParams};
pub use mcs::{mcs_moments, McsResult};

use std::collections::BTreeMap;
use std::fmt::Write as _;

use crate::error::{check_dims, Error, Result};

/// Field values on a tensor grid. The last axis varies fastest in `values`.
#[derive(Debug, Clone, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct GridSolution {
    pub names: Vec<String>,
    pub axes: Vec<Vec<f64>>,
    pub values: Vec<f64>,
    pub meta: BTreeMap<String, String>,
}

impl GridSolution {
    pub fn new(names: Vec<String>, axes: Vec<Vec<f64>>, values: Vec<f64>) -> Result<Self> {
        check_dims(axes.len(), names.len())?;
        check_dims(axes.iter().map(Vec::len).product(), values.len())?;
        if axes.iter().any(|a| a.is_empty() || a.windows(2).any(|w| w[1] <= w[0])) {
            return Err(Error::InvalidInput("grid axes must be nonempty and increasing".into()));
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite { what: "reference value" });
        }
        Ok(Self { names, axes, values, meta: BTreeMap::new() })
    }

    pub fn shape(&self) -> Vec<usize> {
        self.axes.iter().map(Vec::len).collect()
    }

    fn offset(&self, idx: &[usize]) -> usize {
        idx.iter().zip(&self.axes).fold(0, |acc, (i, a)| acc * a.len() + i)
    }

    pub fn get(&self, idx: &[usize]) -> f64 {
        self.values[self.offset(idx)]
    }

    /// Multilinear interpolation; coordinates outside the grid are clamped.
    pub fn interpolate(&self, x: &[f64]) -> Result<f64> {
        check_dims(self.axes.len(), x.len())?;
        let d = self.axes.len();
        let mut lo = vec![0usize; d];
        let mut frac = vec![0.0; d];
        for k in 0..d {
            let a = &self.axes[k];
            if a.len() == 1 {
                continue;
            }
            let v = x[k].clamp(a[0], a[a.len() - 1]);
            let i = a.partition_point(|&g| g <= v).clamp(1, a.len() - 1) - 1;
            lo[k] = i;
            frac[k] = (v - a[i]) / (a[i + 1] - a[i]);
        }
        let mut total = 0.0;
        let mut idx = vec![0usize; d];
        for corner in 0..1usize << d {
            let mut w = 1.0;
            for k in 0..d {
                let up = corner >> k & 1 == 1;
                if up && self.axes[k].len() == 1 {
                    w = 0.0;
                    break;
                }
                idx[k] = lo[k] + usize::from(up);
                w *= if up { frac[k] } else { 1.0 - frac[k] };
            }
            if w != 0.0 {
                total += w * self.get(&idx);
            }
        }
        Ok(total)
    }

    /// Values with the last axis fixed at index `k`.
    pub fn slice_last(&self, k: usize) -> Vec<f64> {
        let n = self.axes.last().map_or(1, Vec::len);
        self.values.iter().skip(k).step_by(n).copied().collect()
    }

    pub fn to_csv(&self) -> String {
        let mut out = self.names.join(",");
        out.push_str(",value\n");
        let shape = self.shape();
        let mut idx = vec![0usize; shape.len()];
        for v in &self.values {
            for (k, &i) in idx.iter().enumerate() {
                let _ = write!(out, "{},", self.axes[k][i]);
            }
            let _ = writeln!(out, "{v}");
            for k in (0..shape.len()).rev() {
                idx[k] += 1;
                if idx[k] < shape[k] {
                    break;
                }
                idx[k] = 0;
            }
        }
        out
    }
}

/// `n + 1` evenly spaced nodes on `[a, b]`.
pub fn linspace(a: f64, b: f64, n: usize) -> Vec<f64> {
    (0..=n).map(|i| if i == n { b } else { a + (b - a) * i as f64 / n as f64 }).collect()
}

/// Solves a tridiagonal system in place (Thomas algorithm). `lower[0]` and
/// `upper[n-1]` are ignored; `rhs` receives the solution.
pub(crate) fn thomas(lower: &[f64], diag: &[f64], upper: &[f64], rhs: &mut [f64]) -> Result<()> {
    let n = diag.len();
    let mut c = vec![0.0; n];
    let mut beta = diag[0];
    if beta == 0.0 {
        return Err(Error::Solver("zero pivot in tridiagonal solve".into()));
    }
    rhs[0] /= beta;
    for i in 1..n {
        c[i - 1] = upper[i - 1] / beta;
        beta = diag[i] - lower[i] * c[i - 1];
        if beta == 0.0 || !beta.is_finite() {
            return Err(Error::Solver("zero pivot in tridiagonal solve".into()));
        }
        rhs[i] = (rhs[i] - lower[i] * rhs[i - 1]) / beta;
    }
    for i in (0..n - 1).rev() {
        rhs[i] -= c[i] * rhs[i + 1];
    }
    Ok(())
}
