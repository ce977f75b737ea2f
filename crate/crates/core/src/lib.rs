//! Sensitivity of min-cost network flows and localized warm-start
//! reoptimization.
//!
//! The crate solves separable convex flow problems `min f(x) s.t. Ax = b`,
//! computes how the optimum moves when the external flow `b` is perturbed,
//! relates that sensitivity to random walks on the weighted graph, and
//! bounds how fast it decays with distance. The solver module runs a
//! projected gradient method restricted to a subgraph around a
//! perturbation.

// `!(x > 0.0)` is used on purpose so NaN fails validation
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod error;
pub mod graph;
pub mod laplacian;
pub mod locality;
pub mod objective;
pub mod sensitivity;
pub mod solver;

pub use error::{Error, Result};
