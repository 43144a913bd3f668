//! The neural model: gated multi-modal fusion and the self-attention
//! session encoder, plus all parameter state.

mod encoder;
mod fusion;
mod params;

pub use encoder::{
    encode_session, encode_session_full, BlockDropout, EncoderContext, LAYER_NORM_EPS,
};
pub use fusion::{fuse_item, FusionInputs};
pub use params::{
    BoundBlock, BoundFusion, BoundModel, BoundWeightNet, EncoderBlock, EncoderParams,
    FusionParams, ModelDims, ModelState, WeightNet,
};
