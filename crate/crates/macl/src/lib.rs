//! Multi-modal adaptive contrastive learning for session-based
//! recommendation: gated fusion of ID/image/text item features, a
//! self-attention session encoder, semantics-preserving multi-modal
//! augmentation, and an adaptively reweighted contrastive objective,
//! trained jointly with next-item prediction.
//!
//! Start with the runnable examples (`cargo run --example train_quickstart`)
//! or the `macl` binary (`macl synth`, `macl train`, `macl evaluate`,
//! `macl recommend`, `macl augment-preview`, `macl ingest`).

pub mod augment;
pub mod autodiff;
pub mod cli;
pub mod data;
pub mod embed;
pub mod error;
pub mod eval;
pub mod loss;
pub mod model;
pub mod rng;
pub mod synth;
pub mod train;

pub use error::{Error, Result};
