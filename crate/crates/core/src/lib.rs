//! Personalized decentralized learning with shared random weights and
//! per-agent binary masks.
//!
//! Every agent holds the same frozen, randomly initialized parameter set `w`
//! and learns a real-valued score tensor `z` whose top-magnitude entries
//! select a binary mask `m`. The effective model of an agent is `w ⊙ m`.
//! Only masks travel over the network, one bit per entry.
//!
//! Module map:
//! - [`nn`]: dense tensors, a small convolutional network, reverse-mode gradients.
//! - [`masking`]: thresholding, filter zeroing and the group-sparsity regularizer.
//! - [`topology`]: communication graphs.
//! - [`data`]: datasets and label-skew partitioning.
//! - [`protocol`]: mask wire frames, synchronous exchange, bit accounting.
//! - [`trainer`]: the collaborative round, baselines, verification harnesses.
//! - [`config`] and [`experiment`]: the experiment driver used by the CLI.

pub mod config;
pub mod data;
pub mod error;
pub mod experiment;
pub mod masking;
pub mod nn;
pub mod protocol;
pub mod rng;
pub mod topology;
pub mod trainer;

pub use error::{Error, Result};
