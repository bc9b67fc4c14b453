//! Adversarial graph contrastive learning on a minimal reverse-mode tape.
//!
//! The crate trains graph encoders by contrasting two random augmentations
//! of a graph with a third, adversarial view produced by projected gradient
//! descent on edge flips and feature offsets. An information regularizer
//! bounds how far the views may drift apart. Everything runs on `f64` with
//! seeded randomness, so runs are reproducible end to end.
//!
//! Modules:
//! - [`numkit`]: dense/sparse matrices and the differentiation tape
//! - [`graph`]: graph type, normalization, augmentation, sampling, file IO
//! - [`encoders`]: two-layer GCN, three-layer GIN, projection head
//! - [`contrastive`]: InfoNCE losses and the information regularizer
//! - [`adversary`]: PGD attack with budget projection and discretization
//! - [`training`]: the full training loop with Adam and the curriculum
//! - [`eval`]: linear probes, splits, and the degradation study
//! - [`cli`]: the `train` / `eval` / `attack-study` / `gen-sbm` commands
//!
//! The `examples/` directory demonstrates each capability end to end.

pub mod adversary;
pub mod checkpoint;
pub mod cli;
pub mod contrastive;
pub mod encoders;
pub mod error;
pub mod eval;
pub mod graph;
pub mod numkit;
pub mod training;

pub use error::{Error, Result};
