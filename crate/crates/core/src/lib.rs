//! ANOVA-boosted sparse random Fourier feature regression.
//!
//! The crate finds the important variable interactions of a function from
//! scattered samples (independent or correlated inputs), then fits a sparse
//! trigonometric model restricted to those interactions.

// `!(x > 0.0)` style checks deliberately reject NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod boosting;
pub mod error;
pub mod experiment;
pub mod features;
pub mod index_sets;
pub mod io;
pub mod oracle;
pub mod quadrature;
pub mod rng;
pub mod sampling;
pub mod sensitivity;
pub mod solvers;
pub mod sparse_fit;
pub mod stats;

pub use error::{Error, Result};
pub use index_sets::{AnovaIndexSet, VarSubset};
