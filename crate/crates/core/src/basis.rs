//! Orthonormal polynomial families, multi-index truncation sets and the
//! tensor-product basis used by every surrogate.
//!
//! Univariate polynomials are evaluated in a standardized coordinate: `[-1, 1]`
//! for Legendre (uniform inputs) and the unit normal for Hermite (Gaussian
//! inputs). Derivatives come from differentiating the three-term recurrence,
//! so a `k`-th derivative table costs `O(k * p)` and stays stable at high
//! degree.

use std::cmp::Ordering;
use std::collections::HashMap;
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{check_dims, Error, Result};

/// Default upper bound on the number of terms a total-degree set may hold.
pub const DEFAULT_MAX_TERMS: usize = 1_000_000;

/// Univariate orthonormal polynomial family.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum PolynomialFamily {
    /// Orthonormal w.r.t. the uniform density on `[-1, 1]`: `sqrt(2n+1) P_n`.
    Legendre,
    /// Probabilists' Hermite, orthonormal w.r.t. the standard normal: `He_n / sqrt(n!)`.
    Hermite,
}

impl PolynomialFamily {
    pub fn name(self) -> &'static str {
        match self {
            PolynomialFamily::Legendre => "legendre",
            PolynomialFamily::Hermite => "hermite",
        }
    }

    /// Value of the degree-`degree` orthonormal polynomial at `x`.
    pub fn eval(self, degree: usize, x: f64) -> f64 {
        let mut table = vec![0.0; degree + 1];
        self.fill(degree, 0, x, &mut table);
        table[degree]
    }

    /// `order`-th derivative (in the standardized coordinate) of the
    /// degree-`degree` polynomial at `x`.
    pub fn derivative(self, degree: usize, order: usize, x: f64) -> f64 {
        let mut table = vec![0.0; degree + 1];
        self.fill(degree, order, x, &mut table);
        table[degree]
    }

    /// Writes `d^order/dx^order phi_n(x)` for `n = 0..=max_degree` into `out`.
    pub fn fill(self, max_degree: usize, order: usize, x: f64, out: &mut [f64]) {
        let n = max_degree + 1;
        assert!(out.len() >= n, "output table too short");
        // `prev` holds the (order - 1) table while `cur` is being built.
        let mut prev = vec![0.0; n];
        let mut cur = vec![0.0; n];
        for j in 0..=order {
            std::mem::swap(&mut prev, &mut cur);
            let jf = j as f64;
            match self {
                PolynomialFamily::Legendre => {
                    // Standard (non-normalized) Legendre recurrence, differentiated j times.
                    cur[0] = if j == 0 { 1.0 } else { 0.0 };
                    let mut before = 0.0;
                    for k in 0..max_degree {
                        let kf = k as f64;
                        let lower = if j == 0 { 0.0 } else { prev[k] };
                        let next = ((2.0 * kf + 1.0) * (x * cur[k] + jf * lower) - kf * before)
                            / (kf + 1.0);
                        before = cur[k];
                        cur[k + 1] = next;
                    }
                }
                PolynomialFamily::Hermite => {
                    cur[0] = if j == 0 { 1.0 } else { 0.0 };
                    let mut before = 0.0;
                    for k in 0..max_degree {
                        let kf = k as f64;
                        let lower = if j == 0 { 0.0 } else { prev[k] };
                        let next =
                            (x * cur[k] + jf * lower - kf.sqrt() * before) / (kf + 1.0).sqrt();
                        before = cur[k];
                        cur[k + 1] = next;
                    }
                }
            }
        }
        match self {
            PolynomialFamily::Legendre => {
                for (k, v) in cur.iter().enumerate() {
                    out[k] = v * ((2 * k + 1) as f64).sqrt();
                }
            }
            PolynomialFamily::Hermite => out[..n].copy_from_slice(&cur),
        }
    }
}

/// Distribution assumed for one input dimension. Physical coordinates are
/// always `Uniform` over their bounds.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "distribution", rename_all = "lowercase")]
pub enum Marginal {
    Uniform { lower: f64, upper: f64 },
    Normal { mean: f64, std_dev: f64 },
}

impl Marginal {
    pub fn family(&self) -> PolynomialFamily {
        match self {
            Marginal::Uniform { .. } => PolynomialFamily::Legendre,
            Marginal::Normal { .. } => PolynomialFamily::Hermite,
        }
    }

    /// d(standardized)/d(physical).
    pub fn scale_factor(&self) -> f64 {
        match *self {
            Marginal::Uniform { lower, upper } => 2.0 / (upper - lower),
            Marginal::Normal { std_dev, .. } => 1.0 / std_dev,
        }
    }

    pub fn standardize(&self, x: f64) -> f64 {
        match *self {
            Marginal::Uniform { lower, upper } => (2.0 * x - lower - upper) / (upper - lower),
            Marginal::Normal { mean, std_dev } => (x - mean) / std_dev,
        }
    }

    pub fn unstandardize(&self, z: f64) -> f64 {
        match *self {
            Marginal::Uniform { lower, upper } => 0.5 * (lower + upper) + 0.5 * (upper - lower) * z,
            Marginal::Normal { mean, std_dev } => mean + std_dev * z,
        }
    }

    /// True when `x` lies outside the support (uniform) or beyond 8 standard
    /// deviations (normal).
    pub fn is_extrapolating(&self, x: f64) -> bool {
        match *self {
            Marginal::Uniform { lower, upper } => {
                let slack = 1e-12 * (upper - lower);
                x < lower - slack || x > upper + slack
            }
            Marginal::Normal { mean, std_dev } => ((x - mean) / std_dev).abs() > 8.0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        match *self {
            Marginal::Uniform { lower, upper } => {
                if !(lower.is_finite() && upper.is_finite() && lower < upper) {
                    return Err(Error::InvalidInput(format!(
                        "uniform bounds must satisfy lower < upper, got [{lower}, {upper}]"
                    )));
                }
            }
            Marginal::Normal { mean, std_dev } => {
                if !(mean.is_finite() && std_dev.is_finite() && std_dev > 0.0) {
                    return Err(Error::InvalidInput(format!(
                        "normal marginal needs a positive std_dev, got {std_dev}"
                    )));
                }
            }
        }
        Ok(())
    }
}

/// Per-dimension map between physical and standardized coordinates.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DomainScaling {
    marginals: Vec<Marginal>,
}

impl DomainScaling {
    pub fn new(marginals: Vec<Marginal>) -> Result<Self> {
        if marginals.is_empty() {
            return Err(Error::InvalidInput("scaling needs at least one dimension".into()));
        }
        for m in &marginals {
            m.validate()?;
        }
        Ok(Self { marginals })
    }

    /// Uniform dimensions from `(lower, upper)` pairs.
    pub fn uniform(bounds: &[(f64, f64)]) -> Result<Self> {
        Self::new(
            bounds
                .iter()
                .map(|&(lower, upper)| Marginal::Uniform { lower, upper })
                .collect(),
        )
    }

    pub fn dims(&self) -> usize {
        self.marginals.len()
    }

    pub fn marginals(&self) -> &[Marginal] {
        &self.marginals
    }

    pub fn marginal(&self, dim: usize) -> &Marginal {
        &self.marginals[dim]
    }

    pub fn families(&self) -> Vec<PolynomialFamily> {
        self.marginals.iter().map(Marginal::family).collect()
    }

    pub fn standardize(&self, x: &[f64]) -> Result<Vec<f64>> {
        check_dims(self.dims(), x.len())?;
        Ok(self.marginals.iter().zip(x).map(|(m, &v)| m.standardize(v)).collect())
    }

    pub fn unstandardize(&self, z: &[f64]) -> Result<Vec<f64>> {
        check_dims(self.dims(), z.len())?;
        Ok(self.marginals.iter().zip(z).map(|(m, &v)| m.unstandardize(v)).collect())
    }

    pub fn is_extrapolating(&self, x: &[f64]) -> bool {
        self.marginals.iter().zip(x).any(|(m, &v)| m.is_extrapolating(v))
    }

    /// Restriction to a contiguous range of dimensions.
    pub fn slice(&self, range: std::ops::Range<usize>) -> Result<Self> {
        Self::new(self.marginals[range].to_vec())
    }
}

/// Ordered, duplicate-free set of multi-indices in graded lexicographic order.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct MultiIndexSet {
    dims: usize,
    data: Vec<u16>,
}

/// Total degree first, then lexicographic.
pub fn graded_lex_cmp(a: &[u16], b: &[u16]) -> Ordering {
    let sa: u32 = a.iter().map(|&v| v as u32).sum();
    let sb: u32 = b.iter().map(|&v| v as u32).sum();
    sa.cmp(&sb).then_with(|| a.cmp(b))
}

/// `(dims + p)! / (dims! p!)`, saturating at `usize::MAX`.
pub fn total_degree_cardinality(dims: usize, p: usize) -> usize {
    let k = dims.min(p) as u128;
    let n = (dims + p) as u128;
    let mut acc: u128 = 1;
    for i in 0..k {
        acc = match acc.checked_mul(n - i) {
            Some(v) => v / (i + 1),
            None => return usize::MAX,
        };
        if acc > usize::MAX as u128 {
            return usize::MAX;
        }
    }
    acc as usize
}

impl MultiIndexSet {
    /// All multi-indices with `|alpha|_1 <= p`.
    pub fn total_degree(dims: usize, p: usize) -> Result<Self> {
        Self::total_degree_with_limit(dims, p, DEFAULT_MAX_TERMS)
    }

    pub fn total_degree_with_limit(dims: usize, p: usize, limit: usize) -> Result<Self> {
        if dims == 0 {
            return Err(Error::InvalidInput("index set needs dims >= 1".into()));
        }
        if p > u16::MAX as usize {
            return Err(Error::InvalidInput(format!("degree {p} is too large")));
        }
        let count = total_degree_cardinality(dims, p);
        if count > limit {
            return Err(Error::CardinalityOverflow { count, limit });
        }
        let mut data = Vec::with_capacity(count * dims);
        let mut scratch = vec![0u16; dims];
        for degree in 0..=p {
            push_compositions(&mut data, &mut scratch, 0, degree as u16);
        }
        debug_assert_eq!(data.len(), count * dims);
        Ok(Self { dims, data })
    }

    /// Builds a set from explicit tuples; they are sorted into graded
    /// lexicographic order and must be unique.
    pub fn from_tuples(dims: usize, tuples: Vec<Vec<u16>>) -> Result<Self> {
        if dims == 0 {
            return Err(Error::InvalidInput("index set needs dims >= 1".into()));
        }
        let mut tuples = tuples;
        for t in &tuples {
            check_dims(dims, t.len())?;
        }
        tuples.sort_by(|a, b| graded_lex_cmp(a, b));
        if let Some(w) = tuples.windows(2).find(|w| w[0] == w[1]) {
            return Err(Error::InvalidInput(format!("duplicate multi-index {:?}", w[0])));
        }
        Ok(Self {
            dims,
            data: tuples.into_iter().flatten().collect(),
        })
    }

    pub fn dims(&self) -> usize {
        self.dims
    }

    pub fn len(&self) -> usize {
        self.data.len() / self.dims
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn get(&self, j: usize) -> &[u16] {
        &self.data[j * self.dims..(j + 1) * self.dims]
    }

    pub fn iter(&self) -> impl ExactSizeIterator<Item = &[u16]> + '_ {
        self.data.chunks_exact(self.dims)
    }

    /// Largest total degree present.
    pub fn max_degree(&self) -> usize {
        self.iter()
            .map(|a| a.iter().map(|&v| v as usize).sum::<usize>())
            .max()
            .unwrap_or(0)
    }

    /// Largest degree per dimension.
    pub fn max_degree_per_dim(&self) -> Vec<usize> {
        let mut out = vec![0usize; self.dims];
        for a in self.iter() {
            for (m, &v) in out.iter_mut().zip(a) {
                *m = (*m).max(v as usize);
            }
        }
        out
    }

    /// Position of the all-zero index, if present.
    pub fn constant_position(&self) -> Option<usize> {
        self.iter().position(|a| a.iter().all(|&v| v == 0))
    }

    pub fn position_map(&self) -> HashMap<&[u16], usize> {
        self.iter().enumerate().map(|(j, a)| (a, j)).collect()
    }

    /// Sub-set made of the listed positions, re-sorted.
    pub fn subset(&self, positions: &[usize]) -> Result<Self> {
        let tuples = positions
            .iter()
            .map(|&j| {
                if j >= self.len() {
                    Err(Error::InvalidInput(format!("index position {j} out of range")))
                } else {
                    Ok(self.get(j).to_vec())
                }
            })
            .collect::<Result<Vec<_>>>()?;
        Self::from_tuples(self.dims, tuples)
    }
}

fn push_compositions(data: &mut Vec<u16>, scratch: &mut [u16], pos: usize, remaining: u16) {
    if pos + 1 == scratch.len() {
        scratch[pos] = remaining;
        data.extend_from_slice(scratch);
        return;
    }
    for v in 0..=remaining {
        scratch[pos] = v;
        push_compositions(data, scratch, pos + 1, remaining - v);
    }
}

impl fmt::Display for MultiIndexSet {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{{")?;
        for (j, a) in self.iter().enumerate() {
            if j > 0 {
                write!(f, ", ")?;
            }
            write!(f, "(")?;
            for (i, v) in a.iter().enumerate() {
                if i > 0 {
                    write!(f, ",")?;
                }
                write!(f, "{v}")?;
            }
            write!(f, ")")?;
        }
        write!(f, "}}")
    }
}

/// Tensor-product basis function value: `prod_i phi_{alpha_i}(x_std_i)`.
pub fn multivariate_eval(alpha: &[u16], scaling: &DomainScaling, x: &[f64]) -> Result<f64> {
    multivariate_partial(alpha, scaling, x, &vec![0; alpha.len()])
}

/// Physical-coordinate partial derivative of one basis function.
pub fn multivariate_partial(
    alpha: &[u16],
    scaling: &DomainScaling,
    x: &[f64],
    orders: &[u8],
) -> Result<f64> {
    check_dims(scaling.dims(), alpha.len())?;
    check_dims(scaling.dims(), x.len())?;
    check_dims(scaling.dims(), orders.len())?;
    let mut value = 1.0;
    for (((&a, m), &xi), &o) in alpha.iter().zip(scaling.marginals()).zip(x).zip(orders) {
        let z = m.standardize(xi);
        value *= m.family().derivative(a as usize, o as usize, z) * m.scale_factor().powi(o as i32);
    }
    Ok(value)
}

/// A multi-index set paired with the scaling of each input dimension.
#[derive(Debug, Clone, PartialEq)]
pub struct TensorBasis {
    scaling: DomainScaling,
    indices: MultiIndexSet,
    dim_max: Vec<usize>,
}

impl TensorBasis {
    pub fn new(scaling: DomainScaling, indices: MultiIndexSet) -> Result<Self> {
        check_dims(scaling.dims(), indices.dims())?;
        let dim_max = indices.max_degree_per_dim();
        Ok(Self {
            scaling,
            indices,
            dim_max,
        })
    }

    pub fn total_degree(scaling: DomainScaling, p: usize) -> Result<Self> {
        let indices = MultiIndexSet::total_degree(scaling.dims(), p)?;
        Self::new(scaling, indices)
    }

    pub fn scaling(&self) -> &DomainScaling {
        &self.scaling
    }

    pub fn indices(&self) -> &MultiIndexSet {
        &self.indices
    }

    pub fn dims(&self) -> usize {
        self.scaling.dims()
    }

    pub fn len(&self) -> usize {
        self.indices.len()
    }

    pub fn is_empty(&self) -> bool {
        self.indices.is_empty()
    }

    /// Same scaling restricted to a subset of terms.
    pub fn restrict(&self, positions: &[usize]) -> Result<Self> {
        Self::new(self.scaling.clone(), self.indices.subset(positions)?)
    }

    pub fn eval_term(&self, j: usize, x: &[f64]) -> Result<f64> {
        multivariate_eval(self.indices.get(j), &self.scaling, x)
    }

    pub fn partial_term(&self, j: usize, x: &[f64], orders: &[u8]) -> Result<f64> {
        multivariate_partial(self.indices.get(j), &self.scaling, x, orders)
    }

    /// Fills `out[j]` with the `orders` partial of basis function `j` at `x`
    /// (physical coordinates). `orders = None` means plain values.
    pub fn row_into(&self, x: &[f64], orders: Option<&[u8]>, out: &mut [f64]) -> Result<()> {
        let dims = self.dims();
        check_dims(dims, x.len())?;
        if let Some(o) = orders {
            check_dims(dims, o.len())?;
        }
        check_dims(self.len(), out.len())?;
        let tables = self.tables(x, orders);
        for (slot, alpha) in out.iter_mut().zip(self.indices.iter()) {
            let mut v = 1.0;
            for (table, &a) in tables.iter().zip(alpha) {
                v *= table[a as usize];
            }
            *slot = v;
        }
        Ok(())
    }

    pub fn row(&self, x: &[f64], orders: Option<&[u8]>) -> Result<Vec<f64>> {
        let mut out = vec![0.0; self.len()];
        self.row_into(x, orders, &mut out)?;
        Ok(out)
    }

    /// Per-dimension univariate tables, already multiplied by the physical
    /// scale factors.
    fn tables(&self, x: &[f64], orders: Option<&[u8]>) -> Vec<Vec<f64>> {
        (0..self.dims())
            .map(|d| {
                let m = self.scaling.marginal(d);
                let order = orders.map_or(0, |o| o[d] as usize);
                let mut t = vec![0.0; self.dim_max[d] + 1];
                m.family().fill(self.dim_max[d], order, m.standardize(x[d]), &mut t);
                if order > 0 {
                    let s = m.scale_factor().powi(order as i32);
                    t.iter_mut().for_each(|v| *v *= s);
                }
                t
            })
            .collect()
    }
}
