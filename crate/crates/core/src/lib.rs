//! Data-dependent sparse regression models, LSH bucket learners, dense
//! random-feature baselines and a synthetic Lipschitz experiment harness.
//!
//! With the `parallel` feature (default) batch evaluation, sweeps and
//! Monte-Carlo loops run on rayon. Without it the same code runs
//! sequentially and produces bit-identical results.

// `!(x > 0.0)` style checks are deliberate: they also reject NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod error;
pub mod experiment;
pub mod linalg;
pub mod lsh;
pub mod metrics;
pub mod models;
pub mod monomial;
pub mod par;
pub mod rng;
pub mod targets;
pub mod training;

pub use error::{Error, Result};
