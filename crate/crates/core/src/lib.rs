//! Adaptive crowd-scoring algorithms for selecting the top-quality object
//! among `N` items from noisy, biased worker scores.
//!
//! The crate is organised bottom-up:
//!
//! - [`model`]: the generative world (qualities, workers, answers).
//! - [`posterior`]: joint Gaussian posterior over qualities and worker biases.
//! - [`fitness`]: probability-of-being-best indices and elimination.
//! - [`policy`]: allocation, worker batching and termination rules.
//! - [`quantizer`]: uniform and Lloyd-optimal scalar answer quantizers.
//! - [`algorithms`]: the round loop and the baseline algorithms.
//! - [`analytics`]: closed-form scoring vs. comparison error probabilities.
//! - [`harness`]: Monte Carlo sweeps, CSV output and the CLI driver.

// Validation is written as `!(x > 0.0)` so that NaN is rejected too.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod algorithms;
pub mod analytics;
pub mod cli;
pub mod error;
pub mod exec;
pub mod fitness;
pub mod harness;
pub mod model;
pub mod policy;
pub mod posterior;
pub mod quantizer;
pub mod seed;
pub mod special;

pub use error::{Error, Result};
