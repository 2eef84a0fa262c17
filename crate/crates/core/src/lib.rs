//! Empirical kernel Bayes' rule and the classifiers built on it, with seeded
//! experiment sweeps and numerical diagnostics.

// `!(x > 0.0)` also rejects NaN
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod classifiers;
pub mod diagnostics;
pub mod embedding;
pub mod error;
pub mod experiments;
pub mod kernels;
pub mod numerics;

pub use error::{KbrError, Result, Stage};
