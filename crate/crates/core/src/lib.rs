//! Mask-based neural network sparsification.
//!
//! A pruning technique is described along four independent axes:
//!
//! * **granularity**: the shape of a removable block ([`granularity`])
//! * **context**: whether blocks compete per layer or model-wide ([`selection`])
//! * **criterion**: how a weight's importance is scored ([`criteria`])
//! * **schedule**: how the target sparsity evolves during training ([`schedule`])
//!
//! [`sparsifier`] combines them into a static pruner and a training callback
//! (including lottery ticket experiments) on top of the small training
//! harness in [`harness`]. [`experiment`] runs declarative experiments and
//! persists their artifacts.

pub mod criteria;
pub mod error;
pub mod experiment;
pub mod granularity;
pub mod harness;
pub mod rng;
pub mod schedule;
pub mod selection;
pub mod sparsifier;
pub mod tensor;

pub use error::{Error, Result};
