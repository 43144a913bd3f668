//! Minimal reverse-mode automatic differentiation over dense tensors,
//! plus the Adam optimizer. Sufficient to express gated fusion, the
//! self-attention encoder, and every contrastive objective in this crate.

mod adam;
pub mod gradcheck;
mod tape;
mod tensor;

pub use adam::AdamState;
pub use tape::{NodeId, Tape};
pub use tensor::{Shape, Tensor};
