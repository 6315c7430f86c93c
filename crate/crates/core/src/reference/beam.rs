//! Simply supported Euler–Bernoulli beam under a uniform load with
//! spatially varying stiffness.
//!
//! Statics gives the bending moment exactly; the deflection follows from
//! `E(x) I w'' = q x (x - L) / 2` by integrating the nodal curvature twice
//! and the support conditions `w(0) = w(L) = 0`. With this sign convention a
//! negative (downward) load gives negative deflection.

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct BeamProblem {
    pub length: f64,
    pub load: f64,
    pub inertia: f64,
    /// Young's modulus at `n + 1` evenly spaced nodes on `[0, L]`.
    pub stiffness: Vec<f64>,
}

impl BeamProblem {
    pub fn uniform(length: f64, load: f64, inertia: f64, modulus: f64, n: usize) -> Self {
        Self { length, load, inertia, stiffness: vec![modulus; n + 1] }
    }

    pub fn nodes(&self) -> Vec<f64> {
        super::linspace(0.0, self.length, self.stiffness.len() - 1)
    }

    /// `q x (x - L) / 2`.
    pub fn moment(&self, x: f64) -> f64 {
        0.5 * self.load * x * (x - self.length)
    }
}

/// Deflection at the stiffness nodes.
pub fn beam_solve(problem: &BeamProblem) -> Result<Vec<f64>> {
    let n = problem.stiffness.len();
    if !(problem.length > 0.0 && problem.inertia > 0.0) || n < 3 {
        return Err(Error::InvalidInput("beam needs L > 0, I > 0 and at least 3 nodes".into()));
    }
    if let Some(k) = problem.stiffness.iter().position(|&e| !(e > 0.0)) {
        return Err(Error::InvalidInput(format!("nonpositive stiffness {} at node {k}", problem.stiffness[k])));
    }
    let xs = problem.nodes();
    let h = problem.length / (n - 1) as f64;
    let curvature: Vec<f64> =
        xs.iter().zip(&problem.stiffness).map(|(&x, e)| problem.moment(x) / (e * problem.inertia)).collect();
    // Integrate the piecewise-linear curvature twice, exactly per segment.
    let mut slope = 0.0;
    let mut w = vec![0.0; n];
    for i in 1..n {
        let (k0, k1) = (curvature[i - 1], curvature[i]);
        w[i] = w[i - 1] + h * slope + h * h * (2.0 * k0 + k1) / 6.0;
        slope += 0.5 * h * (k0 + k1);
    }
    let end = w[n - 1];
    Ok(xs.iter().zip(&w).map(|(x, v)| v - x / problem.length * end).collect())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn uniform_beam_midpoint() {
        let p = BeamProblem::uniform(10.0, -5000.0, 1e-4, 80e9, 1000);
        let w = beam_solve(&p).unwrap();
        let closed = 5.0 * -5000.0 * 1e4 / (384.0 * 80e9 * 1e-4);
        assert!((w[500] - closed).abs() < 1e-6 * closed.abs());
        assert!((w[500] + 0.08138).abs() < 1e-3 * 0.08138);
        assert_eq!(w[0], 0.0);
        assert!(w[1000].abs() < 1e-15);
    }

    #[test]
    fn zero_load_and_linearity() {
        let mut p = BeamProblem::uniform(3.0, 0.0, 2e-4, 70e9, 200);
        for (i, e) in p.stiffness.iter_mut().enumerate() {
            *e *= 1.0 + 0.1 * (i as f64 * 0.05).sin();
        }
        assert!(beam_solve(&p).unwrap().iter().all(|&v| v == 0.0));
        p.load = -1200.0;
        let w1 = beam_solve(&p).unwrap();
        p.load = -2400.0;
        let w2 = beam_solve(&p).unwrap();
        for (a, b) in w1.iter().zip(&w2) {
            assert!((2.0 * a - b).abs() <= 1e-12 * b.abs().max(1e-30));
        }
    }

    #[test]
    fn rejects_nonpositive_stiffness() {
        let mut p = BeamProblem::uniform(1.0, 1.0, 1.0, 1.0, 10);
        p.stiffness[4] = 0.0;
        assert!(beam_solve(&p).is_err());
    }
}
