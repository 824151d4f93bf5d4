//! Click-through-rate models built around a separated Hadamard cross network.
//!
//! * [`numeric`] small dense algebra, activations, seeded randomness
//! * [`data`] Criteo TSV parsing, feature hashing, batching, synthetic data
//! * [`models`] separated cross network, factorization machine, self-attention
//! * [`training`] optimizers, the mini-batch fit loop, gradient checking
//! * [`metrics`] logloss and AUC

pub mod data;
pub mod error;
pub mod metrics;
pub mod models;
pub mod numeric;
pub mod training;

pub use error::{Error, Result};
