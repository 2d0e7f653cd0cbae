//! Transfer-learned CNN ensembles for binary defect classification.
//!
//! Backbones are pretrained on a synthetic source task, grafted with a new
//! input layer and sigmoid head, fine-tuned with their middle layers frozen,
//! and combined either by minimum validation loss or by loss-reciprocal
//! weighting. Training histories are certified for reuse by checking that
//! successive validation-loss changes stay within a tolerance.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod cli;
pub mod data;
pub mod ensemble;
pub mod error;
pub mod monitor;
pub mod nn;
pub mod rng;
pub mod tensor;
pub mod transfer;

pub use error::{Error, Result};
pub use tensor::Tensor;
