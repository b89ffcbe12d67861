//! Correlated-equilibrium relaxations in concave games and Phi-regret minimization.
//!
//! Modules follow the computational pipeline: convex geometry, finite-support distributions,
//! expected-fixed-point solvers, games, low-dimensional deviation sets, equilibrium computation,
//! regret minimization, the tree-form lower-bound harness, reductions, and the experiment harness.

pub mod certificate;
pub mod distributions;
pub mod eqcomp;
pub mod error;
pub mod fixedpoint;
pub mod games;
pub mod geometry;
pub mod harness;
pub mod hope;
pub mod linalg;
pub mod lowerbound;
pub mod phi;
pub mod reductions;
pub mod regret;
pub mod sampling;

pub use error::{Error, Result};
pub use linalg::{Matrix, Vector};
