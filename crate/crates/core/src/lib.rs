//! Numerical laboratory for value distribution of meromorphic maps on
//! rotationally symmetric Kähler manifolds, with Brownian-motion estimators.

pub mod error;
pub mod greens;
pub mod manifold;
pub mod nevanlinna;
pub mod ode;
pub mod quadrature;
pub mod rng;
pub mod stats;
pub mod stochastic;
pub mod targets;
pub mod theorems;

pub use error::{Error, Result};
