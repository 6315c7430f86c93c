//! Cached residual evaluation over a fixed point set.
//!
//! Basis-derivative rows are computed once per point and term. Affine
//! residuals collapse to a single row plus an offset, so each objective
//! evaluation is one matrix-vector product; nonlinear residuals keep a row per
//! term and propagate term sensitivities through the compiled tree.

use rayon::prelude::*;

use super::expr::{CompiledExpr, Expr, MAX_TERMS};
use crate::basis::TensorBasis;
use crate::error::{check_dims, Result};
use crate::surrogate::dot;

/// Points per parallel work item. Partial sums are merged in chunk order so
/// results do not depend on the thread count.
const CHUNK: usize = 64;

#[derive(Debug, Clone)]
enum Mode {
    Affine { offsets: Vec<f64> },
    General { expr: CompiledExpr, points: Vec<Vec<f64>> },
}

/// Residuals of one expression at a fixed set of points.
#[derive(Debug, Clone)]
pub struct ResidualBatch {
    p: usize,
    n: usize,
    /// Affine: `n x p`; general: `n x k x p`, row-major.
    rows: Vec<f64>,
    k: usize,
    mode: Mode,
    weights: Option<Vec<f64>>,
}

impl ResidualBatch {
    pub fn new(expr: &Expr, basis: &TensorBasis, points: &[Vec<f64>]) -> Result<Self> {
        let dims = basis.dims();
        for x in points {
            check_dims(dims, x.len())?;
        }
        let compiled = expr.compile(dims)?;
        let p = basis.len();
        let k = compiled.terms().len();
        let n = points.len();
        let mut term_rows = vec![0.0; n * k * p];
        if k > 0 && p > 0 {
            term_rows
                .par_chunks_mut(k * p)
                .zip(points.par_iter())
                .try_for_each(|(block, x)| -> Result<()> {
                    for (t, orders) in compiled.terms().iter().enumerate() {
                        basis.row_into(x, Some(orders), &mut block[t * p..(t + 1) * p])?;
                    }
                    Ok(())
                })?;
        }

        if !expr.is_linear() {
            return Ok(Self {
                p,
                n,
                rows: term_rows,
                k,
                mode: Mode::General { expr: compiled, points: points.to_vec() },
                weights: None,
            });
        }

        // Affine in the term values: the sensitivities are constant and the
        // value at zero terms is the offset.
        let zeros = [0.0; MAX_TERMS];
        let mut rows = vec![0.0; n * p];
        let mut offsets = vec![0.0; n];
        rows.par_chunks_mut(p.max(1))
            .zip(offsets.par_iter_mut())
            .enumerate()
            .for_each(|(i, (row, off))| {
                let mut sens = [0.0; MAX_TERMS];
                *off = compiled.forward(&points[i], &zeros[..k], &mut sens);
                if p == 0 {
                    return;
                }
                for (t, &s) in sens[..k].iter().enumerate() {
                    if s != 0.0 {
                        let src = &term_rows[(i * k + t) * p..(i * k + t + 1) * p];
                        row.iter_mut().zip(src).for_each(|(a, b)| *a += s * b);
                    }
                }
            });
        Ok(Self { p, n, rows, k: 1, mode: Mode::Affine { offsets }, weights: None })
    }

    /// Data misfit `Psi(x_i) . c - y_i` as an affine batch.
    pub fn data(basis: &TensorBasis, points: &[Vec<f64>], targets: &[f64]) -> Result<Self> {
        check_dims(points.len(), targets.len())?;
        let rows = crate::surrogate::build_design_matrix(basis, points, None)?;
        let p = basis.len();
        let mut flat = vec![0.0; points.len() * p];
        for (i, row) in flat.chunks_exact_mut(p.max(1)).enumerate().take(points.len()) {
            for (j, v) in row.iter_mut().enumerate().take(p) {
                *v = rows[(i, j)];
            }
        }
        Ok(Self {
            p,
            n: points.len(),
            rows: flat,
            k: 1,
            mode: Mode::Affine { offsets: targets.iter().map(|y| -y).collect() },
            weights: None,
        })
    }

    /// Per-point multipliers applied to the loss in [`Self::accumulate`] and
    /// [`Self::value`].
    pub fn with_weights(mut self, weights: Vec<f64>) -> Result<Self> {
        check_dims(self.n, weights.len())?;
        self.weights = Some(weights);
        Ok(self)
    }

    fn weight(&self, i: usize) -> f64 {
        self.weights.as_ref().map_or(1.0, |w| w[i])
    }

    pub fn len(&self) -> usize {
        self.n
    }

    pub fn is_empty(&self) -> bool {
        self.n == 0
    }

    pub fn is_affine(&self) -> bool {
        matches!(self.mode, Mode::Affine { .. })
    }

    /// Residual and coefficient gradient at point `i`.
    fn point(&self, i: usize, coef: &[f64], grad: Option<&mut [f64]>, scale_grad: impl Fn(f64) -> f64) -> f64 {
        let p = self.p;
        match &self.mode {
            Mode::Affine { offsets } => {
                let row = &self.rows[i * p..(i + 1) * p];
                let r = dot(row, coef) + offsets[i];
                if let Some(g) = grad {
                    let s = scale_grad(r);
                    if s != 0.0 {
                        g.iter_mut().zip(row).for_each(|(a, b)| *a += s * b);
                    }
                }
                r
            }
            Mode::General { expr, points } => {
                let k = self.k;
                let base = i * k * p;
                let mut tv = [0.0; MAX_TERMS];
                for (t, v) in tv[..k].iter_mut().enumerate() {
                    *v = dot(&self.rows[base + t * p..base + (t + 1) * p], coef);
                }
                let mut sens = [0.0; MAX_TERMS];
                let r = expr.forward(&points[i], &tv[..k], &mut sens);
                if let Some(g) = grad {
                    let s = scale_grad(r);
                    if s != 0.0 {
                        for (t, &st) in sens[..k].iter().enumerate() {
                            let w = s * st;
                            if w != 0.0 {
                                let row = &self.rows[base + t * p..base + (t + 1) * p];
                                g.iter_mut().zip(row).for_each(|(a, b)| *a += w * b);
                            }
                        }
                    }
                }
                r
            }
        }
    }

    pub fn residuals(&self, coef: &[f64]) -> Vec<f64> {
        (0..self.n)
            .into_par_iter()
            .map(|i| self.point(i, coef, None, |_| 0.0))
            .collect()
    }

    /// Returns `sum_i loss(r_i)` and adds `sum_i loss'(r_i) dr_i/dc` to
    /// `grad`, where `loss` yields `(value, derivative)`.
    pub fn accumulate<F>(&self, coef: &[f64], loss: F, grad: &mut [f64]) -> f64
    where
        F: Fn(f64) -> (f64, f64) + Sync,
    {
        let p = self.p;
        let chunks: Vec<(f64, Vec<f64>)> = (0..self.n.div_ceil(CHUNK))
            .into_par_iter()
            .map(|c| {
                let mut g = vec![0.0; p];
                let mut total = 0.0;
                for i in c * CHUNK..((c + 1) * CHUNK).min(self.n) {
                    let w = self.weight(i);
                    let r = self.point(i, coef, Some(&mut g), |r| w * loss(r).1);
                    total += w * loss(r).0;
                }
                (total, g)
            })
            .collect();
        let mut total = 0.0;
        for (t, g) in chunks {
            total += t;
            grad.iter_mut().zip(&g).for_each(|(a, b)| *a += b);
        }
        total
    }

    /// `sum_i loss(r_i)` without gradient.
    pub fn value<F>(&self, coef: &[f64], loss: F) -> f64
    where
        F: Fn(f64) -> f64 + Sync,
    {
        let chunks: Vec<f64> = (0..self.n.div_ceil(CHUNK))
            .into_par_iter()
            .map(|c| {
                (c * CHUNK..((c + 1) * CHUNK).min(self.n))
                    .map(|i| self.weight(i) * loss(self.point(i, coef, None, |_| 0.0)))
                    .sum()
            })
            .collect();
        chunks.iter().sum()
    }

    /// Stacked rows and offsets of an affine batch (`None` otherwise).
    pub fn affine_system(&self) -> Option<(&[f64], &[f64])> {
        match &self.mode {
            Mode::Affine { offsets } => Some((&self.rows, offsets)),
            Mode::General { .. } => None,
        }
    }
}
