//! Exact tools for bipartite nonsignaling correlation tables: construction,
//! validation, classification into equivalence classes, convex decomposition
//! into extremal boxes, and simulation of any binary-output box from PR
//! boxes.
//!
//! Everything in the exact pipeline works over arbitrary-precision
//! rationals; floating point appears only in the quantum front end, whose
//! output is projected back onto the nonsignaling subspace exactly.

pub mod catalog;
pub mod error;
pub mod format;
pub mod interconvert;
pub mod linalg;
pub mod model;
pub mod onezero;
pub mod polytope;
pub mod quantum;
pub mod rational;

pub use error::Error;
pub use model::{CorrelationTable, LocalRelabeling, Marginals, Scenario};
pub use rational::Rational;
