//! Stochastic approximation on Riemannian manifolds and general constraint sets.
//!
//! The crate provides retraction-based, approximate-projection and relaxed
//! two-rate stochastic approximation drivers, the deterministic limit flows
//! they track, and the harness used to check one against the other.

pub mod constraint_sets;
pub mod error;
pub mod harness;
pub mod manifolds;
pub mod numkernels;
pub mod ode_flow;
pub mod sa_core;

pub use error::{Error, Result};
pub use numkernels::DenseMatrix;
