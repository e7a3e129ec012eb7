//! Predictive mutation analysis.
//!
//! Learns the relation between tests and mutants from one program version's
//! kill matrix and predicts full kill matrices for later versions.

pub mod baselines;
pub mod corpus;
pub mod error;
pub mod eval;
pub mod mbfl;
pub mod model;
pub mod preprocess;
pub mod synth;

pub use error::{Error, Result};
