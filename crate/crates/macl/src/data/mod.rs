//! Catalog and session ingestion, preprocessing, batching, and
//! stratification.

mod batch;
mod catalog;
mod corpus;
mod image;
mod session;
mod stratify;
mod text;

pub use batch::{make_batches, Batch, BatchMode};
pub use catalog::{item_of_slot, slot_of, Catalog, Item, ItemId, PADDING_SLOT};
pub use corpus::{
    chronological_split, filter_corpus, item_counts, DatasetSplit, DEFAULT_MIN_ITEM_COUNT,
};
pub use image::{RasterImage, MIN_AUGMENT_SIZE};
pub use session::{load_sessions_jsonl, Session};
pub use stratify::{
    partition_by_value, stratify_items_by_popularity, stratify_sessions_by_length,
    stratify_sessions_by_target_popularity, Stratum, StratifyAxis,
};
pub use text::TokenText;
