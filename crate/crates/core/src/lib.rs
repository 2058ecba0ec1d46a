//! Multi-task multi-label text classification with co-task aware sharing.
//!
//! Two small transformer towers read the same token sequence, one per task.
//! The first-token states of the top tapped layers are mixed across tasks by
//! a learnable co-task factor matrix and a per-layer factor array, projected,
//! mean-pooled and fed to independent sigmoid heads. Baseline sharing
//! strategies (single task, hard sharing, cross-stitch) reuse the same
//! machinery.
//!
//! The crate is `no_std` and only needs `alloc`; file formats and the
//! command-line harness live in the companion `cotask` crate.
#![cfg_attr(not(feature = "std"), no_std)]

extern crate alloc;

pub mod autodiff;
pub mod cotask;
pub mod data;
pub mod encoder;
pub mod error;
pub mod finite_diff;
pub mod metrics;
pub mod model;
pub mod params;
pub mod rng;
pub mod tensor;
pub mod train;

pub use autodiff::{Tape, Var};
pub use cotask::{ShareForm, SharingStrategy};
pub use encoder::{EncoderConfig, TokenBatch};
pub use error::{Error, Result};
pub use finite_diff::finite_difference_grad;
pub use model::{Mode, Model, ModelConfig, TaskConfig};
pub use params::{Gradients, Parameters};
pub use rng::Rng;
pub use tensor::Tensor;
