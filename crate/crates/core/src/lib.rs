//! Numerical laboratory for neural controlled differential equations (NCDEs).
//!
//! The crate covers the whole loop from data to theory:
//!
//! - [`paths`]: sampling grids, fractional Brownian motion, fill-forward
//!   embedding, random downsampling and path statistics.
//! - [`model`]: the deep neural vector field, the initialization layer and
//!   the discrete controlled-ResNet recursion `z_k = z_{k-1} + G(z_{k-1}) Δx_k`.
//! - [`training`]: losses, exact reverse-mode gradients through the
//!   recursion, Adam, projection onto the norm ball and the ERM loop.
//! - [`bounds`]: closed-form capacity, Lipschitz, flow-continuity and bias
//!   constants.
//! - [`verify`]: randomized harness that checks every inequality from
//!   [`bounds`] against simulated instances.
//! - [`experiments`]: end-to-end drivers emitting tidy CSV artifacts plus a
//!   reproducibility manifest.

pub mod bounds;
pub mod error;
pub mod experiments;
pub mod linalg;
pub mod model;
pub mod paths;
pub mod rng;
pub mod training;
pub mod verify;

pub use error::{Error, Result};
