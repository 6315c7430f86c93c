//! Least angle regression.
//!
//! Columns are scaled to unit norm. When the design contains a constant
//! column it acts as the intercept: it is entered first, the response and
//! the remaining columns are centered, and the path continues on the centered
//! problem. Columns that are linearly dependent on the active set cannot
//! enter; they are recorded in [`LarPath::degenerate`] and skipped.

use nalgebra::DMatrix;

use crate::error::{Error, Result};

#[derive(Debug, Clone, Default)]
pub struct LarOptions {
    /// Stop after this many entries (including the intercept).
    pub max_steps: Option<usize>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct LarPath {
    /// Column indices in the order they entered.
    pub entry_order: Vec<usize>,
    /// Coefficients in the original column scale after each step.
    pub coefficients: Vec<Vec<f64>>,
    /// Largest absolute correlation with the residual at the start of each step.
    pub correlations: Vec<f64>,
    /// Columns skipped because they were dependent on the active set (or
    /// constant when an intercept was already present).
    pub degenerate: Vec<usize>,
}

impl LarPath {
    pub fn len(&self) -> usize {
        self.entry_order.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entry_order.is_empty()
    }
}

/// Relative tolerance for detecting constant and dependent columns.
const DEP_TOL: f64 = 1e-10;

pub fn lar_path(a: &DMatrix<f64>, y: &[f64], opts: &LarOptions) -> Result<LarPath> {
    let (n, m) = a.shape();
    if n < 2 {
        return Err(Error::InvalidInput(format!("LAR needs at least 2 rows, got {n}")));
    }
    if y.len() != n {
        return Err(Error::DimensionMismatch { expected: n, got: y.len() });
    }
    let max_steps = opts.max_steps.unwrap_or(usize::MAX);

    // Intercept: lowest-index column with zero spread.
    let spread = |j: usize| {
        let col = a.column(j);
        let mean = col.mean();
        let dev = col.iter().map(|v| (v - mean).powi(2)).sum::<f64>().sqrt();
        (mean, dev, col.norm())
    };
    let intercept = (0..m).find(|&j| {
        let (mean, dev, norm) = spread(j);
        norm > 0.0 && dev <= DEP_TOL * norm && mean != 0.0
    });

    let mut degenerate = Vec::new();
    let mut centers = vec![0.0; m];
    let mut scales = vec![0.0; m];
    let mut x = DMatrix::<f64>::zeros(n, m);
    let mut usable = vec![false; m];
    for j in 0..m {
        if Some(j) == intercept {
            continue;
        }
        let (mean, dev, norm) = spread(j);
        let (center, scale) = if intercept.is_some() { (mean, dev) } else { (0.0, norm) };
        if scale <= DEP_TOL * norm.max(f64::MIN_POSITIVE) || scale == 0.0 {
            degenerate.push(j);
            continue;
        }
        centers[j] = center;
        scales[j] = scale;
        usable[j] = true;
        for i in 0..n {
            x[(i, j)] = (a[(i, j)] - center) / scale;
        }
    }

    let y_mean = if intercept.is_some() { y.iter().sum::<f64>() / n as f64 } else { 0.0 };
    let mut resid: Vec<f64> = y.iter().map(|v| v - y_mean).collect();
    let mut beta = vec![0.0; m];
    let mut entry_order = Vec::new();
    let mut coefficients = Vec::new();
    let mut correlations = Vec::new();

    let to_original = |beta: &[f64]| -> Vec<f64> {
        let mut out = vec![0.0; m];
        let mut shift = 0.0;
        for j in 0..m {
            if usable[j] {
                out[j] = beta[j] / scales[j];
                shift += out[j] * centers[j];
            }
        }
        if let Some(j0) = intercept {
            out[j0] = (y_mean - shift) / a[(0, j0)];
        }
        out
    };

    let corr = |resid: &[f64]| -> Vec<f64> {
        (0..m)
            .map(|j| if usable[j] { (0..n).map(|i| x[(i, j)] * resid[i]).sum() } else { 0.0 })
            .collect()
    };

    if let Some(j0) = intercept {
        let c = corr(&resid);
        correlations.push(c.iter().fold(0.0f64, |acc, v| acc.max(v.abs())));
        entry_order.push(j0);
        coefficients.push(to_original(&beta));
    }

    // Cholesky factor of X_A^T X_A, row-major lower triangle.
    let mut active: Vec<usize> = Vec::new();
    let mut chol: Vec<Vec<f64>> = Vec::new();
    let mut in_active = vec![false; m];
    let mut dependent = vec![false; m];

    // Row of the Cholesky factor that column j would add, and its squared
    // pivot (near zero when j is dependent on the active set).
    let extend = |j: usize, active: &[usize], chol: &[Vec<f64>]| -> (Vec<f64>, f64) {
        let xj = x.column(j);
        let mut l = vec![0.0; active.len()];
        for (r, &a_) in active.iter().enumerate() {
            let s: f64 = (0..r).map(|c| chol[r][c] * l[c]).sum();
            l[r] = (x.column(a_).dot(&xj) - s) / chol[r][r];
        }
        let d2 = xj.dot(&xj) - l.iter().map(|v| v * v).sum::<f64>();
        (l, d2)
    };

    let mut c = corr(&resid);
    let mut next: Option<usize> = None;
    while entry_order.len() < max_steps {
        let c_max = (0..m)
            .filter(|&j| usable[j] && !in_active[j] && !dependent[j])
            .map(|j| c[j].abs())
            .fold(0.0f64, f64::max);
        let c_act = active.iter().map(|&j| c[j].abs()).fold(0.0f64, f64::max);
        let big_c = c_max.max(c_act);

        // Pick the entering column (lowest index on ties).
        let candidate = next.take().or_else(|| {
            (0..m)
                .filter(|&j| usable[j] && !in_active[j] && !dependent[j])
                .fold(None, |best: Option<usize>, j| match best {
                    Some(b) if c[b].abs() >= c[j].abs() => Some(b),
                    _ => Some(j),
                })
        });
        let Some(j) = candidate else { break };
        if big_c <= 1e-14 * (1.0 + y.iter().map(|v| v.abs()).fold(0.0, f64::max)) && !active.is_empty() {
            break;
        }
        let (mut row, d2) = extend(j, &active, &chol);
        if d2 <= DEP_TOL {
            dependent[j] = true;
            degenerate.push(j);
            continue;
        }
        row.push(d2.sqrt());
        chol.push(row);
        active.push(j);
        in_active[j] = true;
        entry_order.push(j);
        correlations.push(big_c.max(c[j].abs()));

        // Equiangular direction: solve G q = s.
        let k = active.len();
        let s: Vec<f64> = active.iter().map(|&j| c[j].signum()).collect();
        let mut z = vec![0.0; k];
        for r in 0..k {
            let t: f64 = (0..r).map(|cc| chol[r][cc] * z[cc]).sum();
            z[r] = (s[r] - t) / chol[r][r];
        }
        let mut q = vec![0.0; k];
        for r in (0..k).rev() {
            let t: f64 = (r + 1..k).map(|cc| chol[cc][r] * q[cc]).sum();
            q[r] = (z[r] - t) / chol[r][r];
        }
        let sq: f64 = s.iter().zip(&q).map(|(a, b)| a * b).sum();
        let big_a = 1.0 / sq.sqrt();
        let dir: Vec<f64> = q.iter().map(|v| v * big_a).collect();
        let mut u = vec![0.0; n];
        for (t, &jj) in active.iter().enumerate() {
            for i in 0..n {
                u[i] += dir[t] * x[(i, jj)];
            }
        }
        let big_c_now = active.iter().map(|&jj| c[jj].abs()).fold(0.0f64, f64::max);

        // Step length to the next entry event.
        let mut gamma = big_c_now / big_a;
        let mut entering = None;
        for jj in 0..m {
            if !usable[jj] || in_active[jj] || dependent[jj] {
                continue;
            }
            let aj: f64 = (0..n).map(|i| x[(i, jj)] * u[i]).sum();
            for g in [(big_c_now - c[jj]) / (big_a - aj), (big_c_now + c[jj]) / (big_a + aj)] {
                if g.is_finite() && g > 1e-15 * gamma.max(1e-300) && g < gamma {
                    gamma = g;
                    entering = Some(jj);
                }
            }
        }

        for (t, &jj) in active.iter().enumerate() {
            beta[jj] += gamma * dir[t];
        }
        for i in 0..n {
            resid[i] -= gamma * u[i];
        }
        coefficients.push(to_original(&beta));
        c = corr(&resid);
        next = entering;
    }

    // Columns never reached because they duplicate the active span.
    for j in 0..m {
        if usable[j] && !in_active[j] && !dependent[j] && extend(j, &active, &chol).1 <= DEP_TOL {
            degenerate.push(j);
        }
    }
    degenerate.sort_unstable();

    Ok(LarPath { entry_order, coefficients, correlations, degenerate })
}
