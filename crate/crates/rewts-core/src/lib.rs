//! Chunk-based ensemble forecasting for non-stationary streams.
//!
//! The stream is segmented into fixed-length chunks, one forecaster is
//! trained per chunk, and at prediction time a simplex-constrained convex
//! quadratic program over recent look-back forecasts weights the models.
//! A retrain-from-scratch global baseline, the strided multi-horizon loss,
//! parameter sweeps, and timing benchmarks complete the harness.

pub mod engine;
pub mod error;
pub mod eval;
pub mod forecast;
pub mod global;
pub mod ingest;
pub mod qp;
pub mod svg;
pub mod synthetic;
pub mod timeseries;
pub mod timing;

pub use error::{Result, RewtsError};
