//! Crate-wide error type.

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    /// Tensor dimension mismatch, names both offending shapes.
    #[error("shape mismatch: {0}")]
    Shape(String),

    /// Mathematically invalid input (empty softmax, negative extent, ...).
    #[error("domain error: {0}")]
    Domain(String),

    /// Input too small or ill-conditioned for the requested operation.
    #[error("degenerate input: {0}")]
    DegenerateInput(String),

    /// An internal API contract was violated by the caller.
    #[error("contract violation: {0}")]
    Contract(String),

    /// Invalid configuration value or unknown configuration key.
    #[error("configuration error: {0}")]
    Config(String),

    /// Malformed catalog or session input.
    #[error("ingest error: {0}")]
    Ingest(String),

    /// The same external item id appears on two catalog lines.
    #[error("duplicate item id {id:?} on lines {first_line} and {second_line}")]
    DuplicateId {
        id: String,
        first_line: usize,
        second_line: usize,
    },

    /// Filtering removed every session or every item.
    #[error("empty corpus after filtering")]
    EmptyCorpus,

    /// Evaluation was asked to run over zero sessions.
    #[error("empty evaluation set")]
    EmptyEvaluation,

    /// Not enough sessions to honor the requested split.
    #[error("split error: {0}")]
    Split(String),

    /// Unknown item id or out-of-range index.
    #[error("lookup error: {0}")]
    Lookup(String),

    /// Not enough candidates to draw the requested sample.
    #[error("sampling error: {0}")]
    Sampling(String),

    /// No augmentation technique is admissible for the given input.
    #[error("augmentation unavailable: {0}")]
    AugmentationUnavailable(String),

    /// The item does not carry the requested modality.
    #[error("modality absent: item {item} has no {modality}")]
    ModalityAbsent { item: u32, modality: &'static str },

    /// NaN/Inf encountered during optimization.
    #[error("training diverged: {0}")]
    TrainingDivergence(String),

    /// Checkpoint does not match the loaded catalog or configuration.
    #[error("incompatible checkpoint: {0}")]
    IncompatibleCheckpoint(String),

    /// Malformed binary or text artifact.
    #[error("format error: {0}")]
    Format(String),

    /// Projector fitting failed (too few samples, no convergence).
    #[error("fit error: {0}")]
    Fit(String),

    #[error("io error: {0}")]
    Io(#[from] std::io::Error),

    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),
}
