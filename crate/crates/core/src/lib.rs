//! Deterministic simulator for continuous learning on edge cameras.
//!
//! Edges run a small softmax student over synthetic drifting streams, keep a
//! window of recent frames, and upload the most informative fraction. A single
//! cloud server labels uploads, tunes hyperparameters, retrains one edge at a
//! time, and ships the model back. [`sim::run_simulation`] drives the whole
//! loop on a virtual clock; [`experiments`] runs multi-seed comparisons.

// `!(x > 0.0)` is how validation rejects NaN along with the bad range.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod bho;
pub mod config;
pub mod error;
pub mod experiments;
pub mod filter;
pub mod model;
pub mod stream;
pub mod trainer;
pub mod types;
pub mod urgency;
pub mod util;

pub use error::{Error, Result};
pub mod sim;
