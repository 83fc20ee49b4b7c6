//! Valley-cliff order determination for large-dimensional spiked models.
//!
//! The crate estimates the number of spikes (signals, factors) in spiked
//! population covariance matrices, spiked Fisher matrices and lag-1
//! auto-covariance factor models when the dimension grows with the sample
//! size. The core criteria are ridge ratios of successive eigenvalue gaps
//! ([`estimators::vacle`]) and their transformed variant
//! ([`estimators::tvacle`]); [`rmt`] supplies the random-matrix oracles,
//! [`spectra`] the data generators, [`calibration`] the pure-noise tuning and
//! [`harness`] the Monte-Carlo experiment runner.

// NaN must fail these range checks, so `!(x > 0.0)` is deliberate.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod calibration;
pub mod config;
pub mod error;
pub mod estimators;
pub mod exec;
pub mod harness;
pub mod rmt;
pub mod rng;
pub mod spectra;

pub use error::{Error, Result};
pub use exec::Execution;
