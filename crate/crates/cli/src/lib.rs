//! Config-driven experiment runner behind the `nevlab` binary.

pub mod charts;
pub mod config;
pub mod experiment;
pub mod summary;

pub use config::ExperimentConfig;
pub use experiment::{Experiment, Overrides, RunReport};
