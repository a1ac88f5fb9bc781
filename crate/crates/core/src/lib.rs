//! Unified skew-elliptical (SUE) distributions: densities, orthant
//! probabilities, sampling, closure operations, and closed-form conjugate
//! posteriors for linear, dichotomized and censored regression.

pub mod conjugate;
pub mod error;
pub mod generators;
pub mod linalg;
pub mod mvprob;
pub mod oracle;
pub mod sue;

pub use error::{Error, Result};
