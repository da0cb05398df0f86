//! Recovery of modular latent-to-observed structure from decoder Jacobians.
//!
//! The crate generates sparse bipartite latent/feature structures, simulates a
//! nonlinear non-Gaussian latent process decoded through a sparsity-respecting
//! decoder, solves the sparse self-expression problem over the expected
//! Jacobian Gram matrix, clusters features (disjoint and overlapping) and
//! scores the result. The `stability` and `geometry` modules provide the
//! empirical checks for the identifiability, stability and generalization
//! guarantees of the method.
//!
//! Orientation convention used everywhere: a Jacobian is a `d_z × d_x` matrix
//! whose column `i` is the gradient of feature `i` with respect to the latent
//! vector, and the self-expression loss is `‖J − J C‖²_F`.

// `!(x > 0.0)` is used on purpose so that NaN inputs are rejected too.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod clustering;
pub mod error;
pub mod geometry;
pub mod io;
pub mod jacobian;
pub mod latentgen;
pub mod linalg;
pub mod metrics;
pub mod pipeline;
pub mod rng;
pub mod selfexpr;
pub mod stability;
pub mod structure;

pub use error::{Error, Result};
