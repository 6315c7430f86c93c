//! Dense BFGS with a strong-Wolfe line search.

use crate::error::{Error, Result};

/// Smooth objective with an optional hook that runs after each accepted step.
pub trait Problem {
    fn eval(&mut self, x: &[f64]) -> Result<(f64, Vec<f64>)>;

    /// Called with each accepted iterate; returning `true` means the objective
    /// itself changed (e.g. reweighted) and must be re-evaluated.
    fn accepted(&mut self, _x: &[f64]) -> Result<bool> {
        Ok(false)
    }
}

#[derive(Debug, Clone, Copy)]
pub struct BfgsOptions {
    pub grad_tol: f64,
    pub max_iterations: usize,
    pub c1: f64,
    pub c2: f64,
    pub max_line_search: usize,
}

impl Default for BfgsOptions {
    fn default() -> Self {
        Self { grad_tol: 1e-8, max_iterations: 5000, c1: 1e-4, c2: 0.1, max_line_search: 40 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Termination {
    /// `||g||_inf` fell below the tolerance.
    GradientTolerance,
    IterationCap,
    /// No step along a descent direction decreased the objective; the
    /// iterate is at the limit of floating-point resolution.
    Stalled,
}

#[derive(Debug, Clone)]
pub struct BfgsResult {
    pub x: Vec<f64>,
    pub f: f64,
    pub grad_inf: f64,
    pub iterations: usize,
    pub termination: Termination,
    /// Objective at each accepted iterate, measured before any reweighting.
    pub accepted_values: Vec<f64>,
    /// `(f before, f after)` of every step under the weights that were frozen
    /// during that step.
    pub frozen_steps: Vec<(f64, f64)>,
}

fn inf_norm(v: &[f64]) -> f64 {
    v.iter().fold(0.0, |m, x| m.max(x.abs()))
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn check(f: f64, g: &[f64]) -> Result<()> {
    if !f.is_finite() {
        return Err(Error::NonFinite { what: "objective" });
    }
    if g.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite { what: "gradient" });
    }
    Ok(())
}

pub fn minimize<P: Problem>(problem: &mut P, x0: Vec<f64>, opts: &BfgsOptions) -> Result<BfgsResult> {
    let n = x0.len();
    let mut x = x0;
    let (mut f, mut g) = problem.eval(&x)?;
    check(f, &g)?;
    let mut h = identity(n);
    let mut fresh = true;
    let mut accepted_values = vec![f];
    let mut frozen_steps = Vec::new();
    let mut iterations = 0;

    let termination = loop {
        if inf_norm(&g) < opts.grad_tol {
            break Termination::GradientTolerance;
        }
        if iterations >= opts.max_iterations {
            break Termination::IterationCap;
        }

        let mut d = mat_vec(&h, &g, n);
        d.iter_mut().for_each(|v| *v = -*v);
        if dot(&d, &g) >= 0.0 {
            h = identity(n);
            fresh = true;
            d = g.iter().map(|v| -v).collect();
        }
        let alpha0 = if fresh { (1.0 / norm2(&g)).min(1.0) } else { 1.0 };

        let step = line_search(problem, &x, f, &g, &d, alpha0, opts)?;
        let Some((alpha, f_new, g_new)) = step else {
            if fresh {
                break Termination::Stalled;
            }
            h = identity(n);
            fresh = true;
            continue;
        };

        let s: Vec<f64> = d.iter().map(|v| alpha * v).collect();
        let x_new: Vec<f64> = x.iter().zip(&s).map(|(a, b)| a + b).collect();
        let y: Vec<f64> = g_new.iter().zip(&g).map(|(a, b)| a - b).collect();
        let sy = dot(&s, &y);
        if sy > 1e-12 * norm2(&s) * norm2(&y) && sy > 0.0 {
            if fresh {
                let scale = sy / dot(&y, &y);
                h.iter_mut().for_each(|v| *v *= scale);
            }
            bfgs_update(&mut h, &s, &y, sy, n);
            fresh = false;
        }
        frozen_steps.push((f, f_new));
        accepted_values.push(f_new);
        iterations += 1;
        x = x_new;
        f = f_new;
        g = g_new;

        if problem.accepted(&x)? {
            let (f2, g2) = problem.eval(&x)?;
            check(f2, &g2)?;
            f = f2;
            g = g2;
        }
    };

    Ok(BfgsResult {
        grad_inf: inf_norm(&g),
        x,
        f,
        iterations,
        termination,
        accepted_values,
        frozen_steps,
    })
}

fn identity(n: usize) -> Vec<f64> {
    let mut h = vec![0.0; n * n];
    for i in 0..n {
        h[i * n + i] = 1.0;
    }
    h
}

fn norm2(v: &[f64]) -> f64 {
    dot(v, v).sqrt()
}

fn mat_vec(h: &[f64], v: &[f64], n: usize) -> Vec<f64> {
    (0..n).map(|i| dot(&h[i * n..(i + 1) * n], v)).collect()
}

/// `H <- (I - rho s y^T) H (I - rho y s^T) + rho s s^T`.
fn bfgs_update(h: &mut [f64], s: &[f64], y: &[f64], sy: f64, n: usize) {
    let rho = 1.0 / sy;
    let hy = mat_vec(h, y, n);
    let yhy = dot(y, &hy);
    let coef = rho * rho * yhy + rho;
    for i in 0..n {
        let row = &mut h[i * n..(i + 1) * n];
        for j in 0..n {
            row[j] += coef * s[i] * s[j] - rho * (hy[i] * s[j] + s[i] * hy[j]);
        }
    }
}

type Trial = (f64, f64, Vec<f64>);

fn trial<P: Problem>(problem: &mut P, x: &[f64], d: &[f64], a: f64) -> Result<Trial> {
    let xt: Vec<f64> = x.iter().zip(d).map(|(xi, di)| xi + a * di).collect();
    let (f, g) = problem.eval(&xt)?;
    Ok((f, dot(&g, d), g))
}

/// Strong-Wolfe search along `d`. Returns `None` when no step achieves
/// sufficient decrease.
fn line_search<P: Problem>(
    problem: &mut P,
    x: &[f64],
    f0: f64,
    g0: &[f64],
    d: &[f64],
    alpha0: f64,
    opts: &BfgsOptions,
) -> Result<Option<(f64, f64, Vec<f64>)>> {
    let dphi0 = dot(g0, d);
    let armijo = |a: f64, fa: f64| fa <= f0 + opts.c1 * a * dphi0;
    let curvature = |dphi: f64| dphi.abs() <= -opts.c2 * dphi0;

    // (alpha, f, dphi, g) of the best point satisfying sufficient decrease.
    let mut best: Option<(f64, f64, Vec<f64>)> = None;
    let consider = |a: f64, fa: f64, ga: &[f64], best: &mut Option<(f64, f64, Vec<f64>)>| {
        if fa.is_finite() && armijo(a, fa) && fa < f0 && best.as_ref().is_none_or(|b| fa < b.1) {
            *best = Some((a, fa, ga.to_vec()));
        }
    };

    let mut a_prev = 0.0;
    let mut f_prev = f0;
    let mut dphi_prev = dphi0;
    let mut a = alpha0;
    let mut bracket = None;
    for i in 0..opts.max_line_search {
        let (fa, dphi, ga) = trial(problem, x, d, a)?;
        let finite = fa.is_finite() && dphi.is_finite();
        if finite {
            consider(a, fa, &ga, &mut best);
        }
        if !finite || !armijo(a, fa) || (i > 0 && fa >= f_prev) {
            bracket = Some(((a_prev, f_prev, dphi_prev), (a, fa, dphi)));
            break;
        }
        if curvature(dphi) {
            return Ok(Some((a, fa, ga)));
        }
        if dphi >= 0.0 {
            bracket = Some(((a, fa, dphi), (a_prev, f_prev, dphi_prev)));
            break;
        }
        a_prev = a;
        f_prev = fa;
        dphi_prev = dphi;
        a *= 2.0;
    }

    if let Some(((mut lo, mut f_lo, mut d_lo), (mut hi, mut f_hi, mut d_hi))) = bracket {
        for _ in 0..opts.max_line_search {
            let width = (hi - lo).abs();
            if width <= 1e-16 * lo.abs().max(hi.abs()).max(1e-300) {
                break;
            }
            let mut a = cubic_min(lo, f_lo, d_lo, hi, f_hi, d_hi);
            let (left, right) = (lo.min(hi), lo.max(hi));
            if !(a.is_finite() && a > left + 0.1 * width && a < right - 0.1 * width) {
                a = 0.5 * (lo + hi);
            }
            let (fa, dphi, ga) = trial(problem, x, d, a)?;
            let finite = fa.is_finite() && dphi.is_finite();
            if finite {
                consider(a, fa, &ga, &mut best);
            }
            if !finite || !armijo(a, fa) || fa >= f_lo {
                hi = a;
                f_hi = if finite { fa } else { f64::INFINITY };
                d_hi = if finite { dphi } else { f64::NAN };
            } else {
                if curvature(dphi) {
                    return Ok(Some((a, fa, ga)));
                }
                if dphi * (hi - lo) >= 0.0 {
                    hi = lo;
                    f_hi = f_lo;
                    d_hi = d_lo;
                }
                lo = a;
                f_lo = fa;
                d_lo = dphi;
            }
        }
    }
    Ok(best)
}

/// Minimizer of the cubic interpolating values and slopes at `a` and `b`.
fn cubic_min(a: f64, fa: f64, da: f64, b: f64, fb: f64, db: f64) -> f64 {
    if !(fa.is_finite() && fb.is_finite() && da.is_finite() && db.is_finite()) {
        return f64::NAN;
    }
    let d1 = da + db - 3.0 * (fa - fb) / (a - b);
    let disc = d1 * d1 - da * db;
    if disc < 0.0 {
        return f64::NAN;
    }
    let d2 = (b - a).signum() * disc.sqrt();
    b - (b - a) * (db + d2 - d1) / (db - da + 2.0 * d2)
}
