//! Experiment harness: inputs, sweeps, metrics and artifacts.

pub mod config;
pub mod error;
pub mod experiment;
pub mod image;
pub mod metrics;
pub mod plot;
pub mod signals;

pub use error::{Error, Result};
