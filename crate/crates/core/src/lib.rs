//! Bayesian distributed compressed sensing with tree-structured wavelet priors.

pub mod decentralized;
pub mod distributions;
pub mod error;
pub mod jsm;
pub mod metrics;
pub mod special;
pub mod vb;
pub mod wavelet;

pub use error::{Error, Result};

pub const VERSION: &str = env!("CARGO_PKG_VERSION");
