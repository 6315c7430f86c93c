//! Physics-constrained polynomial chaos expansions.
//!
//! A surrogate `Y(x, xi) = sum_alpha y_alpha Psi_alpha(x, xi)` over physical
//! coordinates `x` and random inputs `xi` is fitted by minimizing a data
//! misfit plus squared residuals of differential equations, initial and
//! boundary conditions, and hinge penalties for inequality constraints, all
//! evaluated at virtual collocation points.

// `!(x > 0.0)` is used on purpose: it also rejects NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod basis;
pub mod constraints;
pub mod error;
pub mod experiment;
pub mod postprocess;
pub mod randomfield;
pub mod reference;
pub mod quadrature;
pub mod sampling;
pub mod sparse;
pub mod surrogate;
pub mod trainer;

pub use basis::{DomainScaling, Marginal, MultiIndexSet, PolynomialFamily, TensorBasis};
pub use error::{Error, Result};
pub use surrogate::SurrogateModel;
