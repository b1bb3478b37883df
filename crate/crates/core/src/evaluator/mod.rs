//! Detection metrics, Fréchet distance between embedding sets, critic-score
//! filtering and a small built-in embedder.

mod critic;
mod detection;
mod embed;
mod frechet;

use thiserror::Error;

pub use critic::{critic_filter, ScoredSample};
pub use detection::{
    average_precision_50, evaluate_map, match_detections, precision_recall_at, pr_curve, Detection,
    MapReport, PrPoint, ScoredDetection,
};
pub use embed::{toy_embed, EmbeddingBlob, BLOB_MAGIC, TOY_EMBED_SIDE};
pub use frechet::{frechet_distance, EmbeddingSet, DEFAULT_EPSILON};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum EvalError {
    #[error("average precision needs at least one ground-truth box")]
    ZeroGroundTruth,
    #[error("embedding dimensions differ: {0} vs {1}")]
    DimensionMismatch(usize, usize),
    #[error("embedding set needs at least 2 samples, got {0}")]
    TooFewSamples(usize),
    #[error("embedding data length {len} does not match {n}x{d}")]
    ShapeMismatch { n: usize, d: usize, len: usize },
    #[error("non-finite value in input")]
    NonFiniteInput,
    #[error("covariance product has eigenvalue {0:e} below the clamp tolerance")]
    IndefiniteProduct(f64),
    #[error("input is empty")]
    EmptyInput,
    #[error("keep fraction must lie in (0, 1], got {0}")]
    InvalidFraction(f64),
    #[error("invalid detection: {0}")]
    InvalidDetection(String),
    #[error("malformed embedding blob: {0}")]
    Blob(String),
}
