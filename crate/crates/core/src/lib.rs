//! Exact and numerical tools for simultaneously small fractional parts of
//! real polynomials: exhaustive oracles, Weyl-sum dichotomies, rational
//! relations, denominator combinatorics and the density-increment descent.

pub mod arith;
pub mod cli;
pub mod denominators;
pub mod driver;
pub mod error;
pub mod eval;
pub mod expsum;
pub mod increment;
pub mod model;
pub mod oracle;
pub mod relations;

pub use error::{Error, Result};
