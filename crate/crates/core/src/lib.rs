// `!(x > 0.0)` is used on purpose so that NaN is rejected; numeric kernels index several arrays per loop.
#![allow(clippy::neg_cmp_op_on_partial_ord, clippy::needless_range_loop)]

pub mod dataset;
pub mod error;
pub mod evaluation;
pub mod inference;
pub mod kernel;
pub mod ks_estimator;
pub mod model;
pub mod penalized_regression;
pub mod seed;
pub mod simulation;
pub mod spline_estimator;

pub use error::{Error, Result};
