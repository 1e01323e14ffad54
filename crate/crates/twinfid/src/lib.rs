//! File formats, run configuration, plot data and the experiment pipeline
//! for `twinfid-core`.
//!
//! Structured artifacts are JSON, ledgers and plot data are CSV. Floats are
//! written as the shortest decimal that parses back to the same `f64`, so
//! every save/load round trip is bit-exact.

pub mod config;
pub mod error;
pub mod formats;
pub mod fsio;
pub mod pipeline;
pub mod plot;

pub use error::{IoError, Result};
