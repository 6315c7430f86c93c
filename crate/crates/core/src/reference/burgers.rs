//! Viscous Burgers `u_t + u u_x = nu u_xx` on `[0, 1]` with zero ends.
//!
//! Crank–Nicolson in time for both the conservative convection
//! `(u^2 / 2)_x` and the diffusion, central differences in space, and a
//! Newton solve per step with a tridiagonal Jacobian.

use super::{linspace, thomas, GridSolution};
use crate::error::{Error, Result};
use crate::quadrature::gauss_legendre;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BurgersParams {
    pub nu: f64,
    pub nx: usize,
    pub nt: usize,
    pub t_end: f64,
    pub save_every: usize,
}

impl BurgersParams {
    pub fn new(nu: f64, nx: usize, nt: usize, t_end: f64) -> Self {
        Self { nu, nx, nt, t_end, save_every: 1 }
    }
}

const NEWTON_TOL: f64 = 1e-12;
const NEWTON_MAX: usize = 50;

pub fn burgers_solve(params: &BurgersParams, ic: &dyn Fn(f64) -> f64) -> Result<GridSolution> {
    let BurgersParams { nu, nx, nt, t_end, save_every } = *params;
    if !(nu > 0.0 && t_end > 0.0) || nx < 3 || nt == 0 || save_every == 0 {
        return Err(Error::InvalidInput(format!("bad Burgers parameters {params:?}")));
    }
    let h = 1.0 / nx as f64;
    let dt = t_end / nt as f64;
    let xs = linspace(0.0, 1.0, nx);
    let mut u: Vec<f64> = xs.iter().map(|&x| ic(x)).collect();
    u[0] = 0.0;
    u[nx] = 0.0;

    // Interior operator F(u)_j = (u_{j+1}^2 - u_{j-1}^2)/(4h) - nu (u_{j+1} - 2u_j + u_{j-1})/h^2.
    let op = |v: &[f64], j: usize| {
        (v[j + 1] * v[j + 1] - v[j - 1] * v[j - 1]) / (4.0 * h) - nu * (v[j + 1] - 2.0 * v[j] + v[j - 1]) / (h * h)
    };
    let m = nx - 1;
    let mut saved_t = vec![0.0];
    let mut saved = vec![u.clone()];
    let mut max_peclet = 0.0f64;
    let (mut lower, mut diag, mut upper, mut rhs) = (vec![0.0; m], vec![0.0; m], vec![0.0; m], vec![0.0; m]);
    for step in 1..=nt {
        let f_old: Vec<f64> = (1..nx).map(|j| op(&u, j)).collect();
        let mut v = u.clone();
        let mut converged = false;
        for _ in 0..NEWTON_MAX {
            for j in 1..nx {
                let r = j - 1;
                rhs[r] = -(v[j] - u[j] + 0.5 * dt * (op(&v, j) + f_old[r]));
                diag[r] = 1.0 + 0.5 * dt * 2.0 * nu / (h * h);
                lower[r] = 0.5 * dt * (-v[j - 1] / (2.0 * h) - nu / (h * h));
                upper[r] = 0.5 * dt * (v[j + 1] / (2.0 * h) - nu / (h * h));
            }
            thomas(&lower, &diag, &upper, &mut rhs)?;
            let mut change = 0.0f64;
            for j in 1..nx {
                v[j] += rhs[j - 1];
                change = change.max(rhs[j - 1].abs());
            }
            if !change.is_finite() {
                break;
            }
            if change < NEWTON_TOL * (1.0 + v.iter().fold(0.0f64, |a, b| a.max(b.abs()))) {
                converged = true;
                break;
            }
        }
        if !converged {
            return Err(Error::Solver(format!("Newton did not converge at step {step}")));
        }
        u = v;
        max_peclet = max_peclet.max(u.iter().fold(0.0f64, |a, b| a.max(b.abs())) * h / nu);
        if step % save_every == 0 || step == nt {
            saved_t.push(step as f64 * dt);
            saved.push(u.clone());
        }
    }

    let ns = saved_t.len();
    let mut values = vec![0.0; (nx + 1) * ns];
    for (k, field) in saved.iter().enumerate() {
        for (j, v) in field.iter().enumerate() {
            values[j * ns + k] = *v;
        }
    }
    let mut sol = GridSolution::new(vec!["x".into(), "t".into()], vec![xs, saved_t], values)?;
    sol.meta.insert("scheme".into(), "crank-nicolson/newton/central".into());
    sol.meta.insert("nu".into(), nu.to_string());
    sol.meta.insert("nx".into(), nx.to_string());
    sol.meta.insert("nt".into(), nt.to_string());
    sol.meta.insert("max_cell_peclet".into(), max_peclet.to_string());
    Ok(sol)
}

/// Exact solution for the initial state `sin(pi x)` through the Cole–Hopf
/// transform, as a cosine series with `terms` terms whose coefficients are
/// computed by Gauss–Legendre quadrature.
pub struct ColeHopf {
    nu: f64,
    coef: Vec<f64>,
}

pub fn cole_hopf(nu: f64, terms: usize) -> Result<ColeHopf> {
    if !(nu > 0.0) || terms == 0 {
        return Err(Error::InvalidInput("Cole–Hopf needs nu > 0 and at least one term".into()));
    }
    // theta_0(x) = exp(-(1 - cos pi x) / (2 pi nu)).
    let k = 1.0 / (2.0 * std::f64::consts::PI * nu);
    let rule = gauss_legendre(8 * terms + 200).mapped(0.0, 1.0);
    let coef = (0..=terms)
        .map(|n| {
            let scale = if n == 0 { 1.0 } else { 2.0 };
            scale
                * rule.integrate(|x| {
                    (-k * (1.0 - (std::f64::consts::PI * x).cos())).exp() * (n as f64 * std::f64::consts::PI * x).cos()
                })
        })
        .collect();
    Ok(ColeHopf { nu, coef })
}

impl ColeHopf {
    pub fn eval(&self, x: f64, t: f64) -> f64 {
        let pi = std::f64::consts::PI;
        let mut num = 0.0;
        let mut den = self.coef[0];
        for (n, a) in self.coef.iter().enumerate().skip(1) {
            let nf = n as f64;
            let decay = (-nf * nf * pi * pi * self.nu * t).exp();
            num += a * nf * decay * (nf * pi * x).sin();
            den += a * decay * (nf * pi * x).cos();
        }
        2.0 * pi * self.nu * num / den
    }
}

/// Cole–Hopf solution for the initial state `sin(pi x)` in its whole-line
/// integral form,
/// `u = int (x - s)/t e^{-G/2nu} ds / int e^{-G/2nu} ds` with
/// `G(s) = (1 - cos pi s)/pi + (x - s)^2 / (2t)`.
/// The exponent is shifted by its minimum so the quotient stays well
/// conditioned for small `nu`, where the cosine series cancels badly.
pub fn cole_hopf_integral(nu: f64, x: f64, t: f64) -> f64 {
    use std::f64::consts::PI;
    if t <= 0.0 {
        return (PI * x).sin();
    }
    let width = 14.0 * (4.0 * nu * t).sqrt();
    let panels = 400;
    let rule = gauss_legendre(10);
    let g = |s: f64| (1.0 - (PI * s).cos()) / PI + (x - s).powi(2) / (2.0 * t);
    let mut nodes = Vec::with_capacity(panels * rule.nodes.len());
    for p in 0..panels {
        let a = x - width + 2.0 * width * p as f64 / panels as f64;
        let b = a + 2.0 * width / panels as f64;
        let r = rule.mapped(a, b);
        nodes.extend(r.nodes.iter().zip(&r.weights).map(|(&s, &w)| (s, w, g(s))));
    }
    let g_min = nodes.iter().map(|n| n.2).fold(f64::INFINITY, f64::min);
    let (mut num, mut den) = (0.0, 0.0);
    for (s, w, gs) in nodes {
        let e = w * (-(gs - g_min) / (2.0 * nu)).exp();
        num += e * (x - s) / t;
        den += e;
    }
    num / den
}
