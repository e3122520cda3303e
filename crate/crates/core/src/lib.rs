//! Optimization over the Wasserstein space of probability measures:
//! exact discrete transport, Wasserstein gradients, first-order optimality
//! checks, gradient flows and closed-form distributionally robust solvers.

// `!(x > 0.0)` is used on purpose so that NaN inputs fail validation.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod dro;
pub mod error;
pub mod linalg;
pub mod measure;
pub mod flows;
pub mod functionals;
pub mod gaussian;
pub mod optimality;
pub mod oracles;
pub mod ot;
pub mod poly;

pub use error::{Error, Result};
pub use measure::{DiscreteMeasure, GaussianMeasure, Measure, MeasureSpec, Moments, VelocityField};
