//! Karhunen–Loève expansion of a 1-D Gaussian field with exponential
//! covariance `sigma^2 exp(-|x1 - x2| / l_c)` on `[0, L]`.

use nalgebra::{DMatrix, SymmetricEigen};

use crate::error::{check_dims, Error, Result};

pub const DEFAULT_GRID: usize = 256;

#[derive(Debug, Clone, PartialEq)]
pub struct KlExpansion {
    pub mean: f64,
    pub sigma: f64,
    pub corr_length: f64,
    pub length: f64,
    pub grid: Vec<f64>,
    /// Trapezoid weights of the grid.
    pub weights: Vec<f64>,
    /// Nonincreasing and positive.
    pub eigenvalues: Vec<f64>,
    /// `eigenfunctions[i][k]` is mode `i` at node `k`; orthonormal under the
    /// trapezoid inner product.
    pub eigenfunctions: Vec<Vec<f64>>,
}

pub fn exponential_kernel(sigma: f64, corr_length: f64, x1: f64, x2: f64) -> f64 {
    sigma * sigma * (-(x1 - x2).abs() / corr_length).exp()
}

/// Nyström discretization on a uniform grid of `n_grid` nodes.
pub fn kl_expand(
    mean: f64,
    sigma: f64,
    corr_length: f64,
    length: f64,
    r: usize,
    n_grid: usize,
) -> Result<KlExpansion> {
    if !(sigma > 0.0 && corr_length > 0.0 && length > 0.0) || !mean.is_finite() {
        return Err(Error::InvalidInput(format!(
            "need sigma, l_c, L > 0 (got {sigma}, {corr_length}, {length})"
        )));
    }
    if r == 0 {
        return Err(Error::InvalidInput("need at least one KL term".into()));
    }
    if n_grid < 4 * r {
        return Err(Error::InvalidInput(format!("grid of {n_grid} nodes is too coarse for {r} terms")));
    }
    let h = length / (n_grid - 1) as f64;
    let grid: Vec<f64> = (0..n_grid).map(|k| k as f64 * h).collect();
    let weights: Vec<f64> = (0..n_grid)
        .map(|k| if k == 0 || k == n_grid - 1 { h / 2.0 } else { h })
        .collect();
    let sw: Vec<f64> = weights.iter().map(|w| w.sqrt()).collect();
    let a = DMatrix::from_fn(n_grid, n_grid, |i, j| {
        sw[i] * exponential_kernel(sigma, corr_length, grid[i], grid[j]) * sw[j]
    });
    let eig = SymmetricEigen::new(a);
    let mut order: Vec<usize> = (0..n_grid).collect();
    order.sort_by(|&i, &j| eig.eigenvalues[j].total_cmp(&eig.eigenvalues[i]));

    let mut eigenvalues = Vec::with_capacity(r);
    let mut eigenfunctions = Vec::with_capacity(r);
    for &i in &order[..r] {
        let lambda = eig.eigenvalues[i];
        if !(lambda > 0.0) {
            return Err(Error::InvalidInput(format!("nonpositive eigenvalue {lambda} at resolution {n_grid}")));
        }
        let mut phi: Vec<f64> = (0..n_grid).map(|k| eig.eigenvectors[(k, i)] / sw[k]).collect();
        let norm = phi.iter().zip(&weights).map(|(p, w)| w * p * p).sum::<f64>().sqrt();
        let first = phi.iter().copied().find(|v| v.abs() > 1e-12 * norm).unwrap_or(1.0);
        let s = first.signum() / norm;
        phi.iter_mut().for_each(|v| *v *= s);
        eigenvalues.push(lambda);
        eigenfunctions.push(phi);
    }
    if eigenvalues.windows(2).any(|w| w[1] > w[0]) {
        return Err(Error::Solver("eigenvalues out of order".into()));
    }
    Ok(KlExpansion { mean, sigma, corr_length, length, grid, weights, eigenvalues, eigenfunctions })
}

impl KlExpansion {
    pub fn terms(&self) -> usize {
        self.eigenvalues.len()
    }

    /// Fraction of `sigma^2 L` carried by the retained terms.
    pub fn captured_variance(&self) -> f64 {
        self.eigenvalues.iter().sum::<f64>() / (self.sigma * self.sigma * self.length)
    }

    /// `mean + sum_i sqrt(lambda_i) phi_i xi_i` at the grid nodes.
    pub fn sample_field(&self, xi: &[f64]) -> Result<Vec<f64>> {
        check_dims(self.terms(), xi.len())?;
        let mut out = vec![self.mean; self.grid.len()];
        for ((lambda, phi), z) in self.eigenvalues.iter().zip(&self.eigenfunctions).zip(xi) {
            let s = lambda.sqrt() * z;
            out.iter_mut().zip(phi).for_each(|(o, p)| *o += s * p);
        }
        Ok(out)
    }

    /// Linear interpolation of grid values at `x` (clamped to `[0, L]`).
    pub fn interpolate(&self, values: &[f64], x: f64) -> f64 {
        let n = self.grid.len();
        let t = (x / self.length).clamp(0.0, 1.0) * (n - 1) as f64;
        let k = (t.floor() as usize).min(n - 2);
        let f = t - k as f64;
        values[k] * (1.0 - f) + values[k + 1] * f
    }

    /// Field value at an arbitrary point.
    pub fn field_at(&self, xi: &[f64], x: f64) -> Result<f64> {
        check_dims(self.terms(), xi.len())?;
        let mut v = self.mean;
        for ((lambda, phi), z) in self.eigenvalues.iter().zip(&self.eigenfunctions).zip(xi) {
            v += lambda.sqrt() * z * self.interpolate(phi, x);
        }
        Ok(v)
    }

    /// Truncated covariance `sum_i lambda_i phi_i(x_j) phi_i(x_k)` on the grid.
    pub fn covariance(&self) -> DMatrix<f64> {
        let n = self.grid.len();
        let mut c = DMatrix::zeros(n, n);
        for (lambda, phi) in self.eigenvalues.iter().zip(&self.eigenfunctions) {
            for j in 0..n {
                for k in 0..n {
                    c[(j, k)] += lambda * phi[j] * phi[k];
                }
            }
        }
        c
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::sampling::substream;
    use rand::Rng;
    use rand_distr::StandardNormal;

    /// Exact eigenvalues of the exponential kernel on an interval of length
    /// `L`: `2 sigma^2 c / (omega^2 + c^2)` with `c = 1/l_c` and `omega` the
    /// roots of `c - omega tan(omega a) = 0` (even modes) and
    /// `omega + c tan(omega a) = 0` (odd modes), `a = L/2`.
    fn analytic_eigenvalues(sigma: f64, lc: f64, length: f64, r: usize) -> Vec<f64> {
        let c = 1.0 / lc;
        let a = length / 2.0;
        let bisect = |f: &dyn Fn(f64) -> f64, mut lo: f64, mut hi: f64| {
            for _ in 0..200 {
                let mid = 0.5 * (lo + hi);
                if f(lo).signum() == f(mid).signum() {
                    lo = mid;
                } else {
                    hi = mid;
                }
            }
            0.5 * (lo + hi)
        };
        let pi = std::f64::consts::PI;
        let eps = 1e-12;
        let mut omegas = Vec::new();
        for k in 0..r {
            // Even: root in (k pi, (k + 1/2) pi) / a.
            let even = |w: f64| c * (w * a).cos() - w * (w * a).sin();
            omegas.push(bisect(&even, (k as f64 * pi + eps) / a, ((k as f64 + 0.5) * pi - eps) / a));
            // Odd: root in ((k + 1/2) pi, (k + 1) pi) / a.
            let odd = |w: f64| w * (w * a).cos() + c * (w * a).sin();
            omegas.push(bisect(&odd, ((k as f64 + 0.5) * pi + eps) / a, ((k as f64 + 1.0) * pi - eps) / a));
        }
        let mut lambdas: Vec<f64> = omegas.iter().map(|w| 2.0 * sigma * sigma * c / (w * w + c * c)).collect();
        lambdas.sort_by(|x, y| y.total_cmp(x));
        lambdas.truncate(r);
        lambdas
    }

    #[test]
    fn matches_analytic_eigenvalues() {
        let kl = kl_expand(0.0, 1.0, 0.5, 1.0, 10, 512).unwrap();
        let exact = analytic_eigenvalues(1.0, 0.5, 1.0, 10);
        for (a, b) in kl.eigenvalues.iter().zip(&exact) {
            assert!((a - b).abs() < 2e-3 * b, "{a} vs {b}");
        }
    }

    #[test]
    fn eigenvalues_decrease_and_are_orthonormal() {
        let kl = kl_expand(0.0, 2.0, 0.5, 1.0, 20, DEFAULT_GRID).unwrap();
        assert!(kl.eigenvalues.windows(2).all(|w| w[1] <= w[0]));
        assert!(kl.eigenvalues.iter().all(|&l| l > 0.0));
        for i in 0..20 {
            for j in 0..20 {
                let ip: f64 = (0..kl.grid.len())
                    .map(|k| kl.weights[k] * kl.eigenfunctions[i][k] * kl.eigenfunctions[j][k])
                    .sum();
                let want = if i == j { 1.0 } else { 0.0 };
                assert!((ip - want).abs() < 1e-10);
            }
            let first = kl.eigenfunctions[i].iter().find(|v| v.abs() > 1e-12).unwrap();
            assert!(*first > 0.0);
        }
    }

    #[test]
    fn trace_fractions() {
        let kl = kl_expand(0.0, 1.0, 0.5, 1.0, 50, 1024).unwrap();
        assert!(kl.captured_variance() > 0.99, "{}", kl.captured_variance());
        // Seven terms at l_c = L/2 carry about 94% of the variance.
        let exact: f64 = analytic_eigenvalues(1.0, 0.5, 1.0, 7).iter().sum();
        let kl7 = kl_expand(0.0, 1.0, 0.5, 1.0, 7, 1024).unwrap();
        assert!((kl7.captured_variance() - exact).abs() < 1e-3);
        assert!(exact > 0.93 && exact < 0.95, "{exact}");
    }

    #[test]
    fn rejects_bad_inputs() {
        assert!(kl_expand(0.0, 1.0, 0.5, 1.0, 0, 64).is_err());
        assert!(kl_expand(0.0, 1.0, 0.5, 1.0, 20, 40).is_err());
        assert!(kl_expand(0.0, -1.0, 0.5, 1.0, 2, 64).is_err());
    }

    #[test]
    fn sampling_structure() {
        let kl = kl_expand(80e9, 4e9, 1.5, 3.0, 7, 128).unwrap();
        assert!(kl.sample_field(&[0.0; 7]).unwrap().iter().all(|&v| v == 80e9));
        assert!(kl.sample_field(&[0.0; 6]).is_err());
        let x1 = [0.3, -1.0, 0.2, 0.0, 1.4, -0.5, 0.9];
        let x2 = [1.1, 0.4, -0.7, 0.3, 0.0, 0.2, -1.2];
        let (a, b) = (0.7, -1.9);
        let mix: Vec<f64> = x1.iter().zip(&x2).map(|(u, v)| a * u + b * v).collect();
        let f1 = kl.sample_field(&x1).unwrap();
        let f2 = kl.sample_field(&x2).unwrap();
        let fm = kl.sample_field(&mix).unwrap();
        for k in 0..f1.len() {
            let want = a * f1[k] + b * f2[k] - (a + b - 1.0) * kl.mean;
            assert!((fm[k] - want).abs() < 1e-6 * kl.mean);
        }
        // Interpolation reproduces nodes and is linear between them.
        let node = kl.grid[10];
        assert!((kl.field_at(&x1, node).unwrap() - f1[10]).abs() < 1e-3);
        let mid = 0.5 * (kl.grid[10] + kl.grid[11]);
        assert!((kl.field_at(&x1, mid).unwrap() - 0.5 * (f1[10] + f1[11])).abs() < 1e-3);
    }

    #[test]
    fn monte_carlo_covariance() {
        let kl = kl_expand(5.0, 1.0, 0.5, 1.0, 7, 32).unwrap();
        let n = 100_000;
        let g = kl.grid.len();
        let mut rng = substream(3, "kl");
        let mut sum = vec![0.0; g];
        let mut cov = DMatrix::<f64>::zeros(g, g);
        for _ in 0..n {
            let xi: Vec<f64> = (0..7).map(|_| rng.sample(StandardNormal)).collect();
            let f = kl.sample_field(&xi).unwrap();
            for j in 0..g {
                sum[j] += f[j];
                for k in 0..g {
                    cov[(j, k)] += (f[j] - 5.0) * (f[k] - 5.0);
                }
            }
        }
        cov /= n as f64;
        let want = kl.covariance();
        assert!((&cov - &want).norm() < 0.02 * want.norm());
        for j in 0..g {
            let se = want[(j, j)].sqrt() / (n as f64).sqrt();
            assert!((sum[j] / n as f64 - 5.0).abs() < 3.0 * se);
        }
    }
}
