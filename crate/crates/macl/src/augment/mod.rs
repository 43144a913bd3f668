//! Multi-modal augmentation: the technique pool, image and text view
//! generation, and item/session signal-set planning.

mod image_aug;
mod signal;
mod technique;
mod text_aug;

pub use image_aug::augment_image;
pub use signal::{
    embed_augmented_view, plan_item_signal_set, plan_session_signal_sets, PlannedItemSet,
    PlannedSessionSet, SessionNegativeMode, SessionNegatives,
};
pub use technique::{sample_technique, AugmentParams, Modality, Technique};
pub use text_aug::{augment_text, NeighborIndex};
