//! Analytic checks of the reference solvers, run by `reference --self-test`.

use std::f64::consts::PI;

use crate::error::Result;
use crate::reference::{
    beam_solve, burgers_solve, cole_hopf, cole_hopf_integral, heat2d_solve, BeamProblem, BurgersParams, HeatParams,
};

#[derive(Debug, Clone, PartialEq)]
pub struct SelfCheck {
    pub name: String,
    pub error: f64,
    pub tolerance: f64,
}

impl SelfCheck {
    pub fn passed(&self) -> bool {
        self.error < self.tolerance
    }
}

fn heat_cosine_mode() -> Result<f64> {
    let alpha = 0.01;
    let ic = |x: f64, y: f64| 0.5 * ((4.0 * PI * x).cos() + (4.0 * PI * y).cos());
    let sol = heat2d_solve(&HeatParams::new(alpha, 128, 50, 0.05), &ic)?;
    let shape = sol.shape();
    let mut err = 0.0f64;
    for i in 0..shape[0] {
        for j in 0..shape[1] {
            for k in 0..shape[2] {
                let (x, y, t) = (sol.axes[0][i], sol.axes[1][j], sol.axes[2][k]);
                let exact = (-16.0 * PI * PI * alpha * t).exp() * ic(x, y);
                err = err.max((sol.get(&[i, j, k]) - exact).abs());
            }
        }
    }
    Ok(err)
}

fn burgers_error(nu: f64, nx: usize, nt: usize) -> Result<f64> {
    let sol = burgers_solve(&BurgersParams::new(nu, nx, nt, 0.3), &|x| (PI * x).sin())?;
    let last = sol.axes[1].len() - 1;
    let series = cole_hopf(nu, 50)?;
    let mut err = 0.0f64;
    for j in (0..=nx).step_by((nx / 100).max(1)) {
        let x = sol.axes[0][j];
        let exact = if nu >= 0.05 { series.eval(x, 0.3) } else { cole_hopf_integral(nu, x, 0.3) };
        err = err.max((sol.get(&[j, last]) - exact).abs());
    }
    Ok(err)
}

fn beam_midpoint() -> Result<f64> {
    let p = BeamProblem::uniform(10.0, -5000.0, 1e-4, 80e9, 1000);
    let w = beam_solve(&p)?;
    let exact = 5.0 * -5000.0 * 1e4 / (384.0 * 80e9 * 1e-4);
    Ok((w[500] - exact).abs() / exact.abs())
}

/// Runs every check; each reports its own maximum error.
pub fn reference_self_test() -> Result<Vec<SelfCheck>> {
    let check = |name: &str, error: f64, tolerance: f64| SelfCheck { name: name.into(), error, tolerance };
    Ok(vec![
        check("heat2d: separable cosine mode, 128^2, t <= 0.05 (max abs error)", heat_cosine_mode()?, 1e-4),
        check("burgers: nu = 0.1 vs Cole-Hopf series, t = 0.3 (max abs error)", burgers_error(0.1, 400, 300)?, 1e-3),
        check("burgers: nu = 0.01 vs Cole-Hopf integral, t = 0.3 (max abs error)", burgers_error(0.01, 1000, 600)?, 5e-3),
        check("beam: uniform stiffness midpoint vs 5qL^4/(384EI) (relative error)", beam_midpoint()?, 1e-6),
    ])
}
