//! Dataset pipeline for dual-modality (optical / holographic) microscopy
//! object detection: label transfer between modality frames, box expansion,
//! tiling, grain extraction, alpha-blend compositing, dataset assembly, and
//! the evaluation numerics (mAP50, precision/recall, Fréchet distance).
//!
//! Geometry and statistics are generic over [`Real`] (`f32` or `f64`); the
//! aliases below fix the scalar to `f64`, with `*32` variants for `f32`.

// `!(x > y)` is used on purpose: it also rejects NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod assembler;
pub mod compositor;
pub mod evaluator;
pub mod formats;
pub mod geometry;
pub mod scalar;
pub mod tiler;

pub use scalar::Real;

pub type BBox = geometry::BBox<f64>;
pub type BBox32 = geometry::BBox<f32>;
pub type Rect = geometry::Rect<f64>;
pub type AffineTransform = geometry::AffineTransform<f64>;
pub type AffineTransform32 = geometry::AffineTransform<f32>;
pub type Transferred = geometry::Transferred<f64>;
pub type Detection = evaluator::Detection<f64>;
pub type ScoredDetection = evaluator::ScoredDetection<f64>;
pub type ScoredSample = evaluator::ScoredSample<f64>;
pub type EmbeddingSet = evaluator::EmbeddingSet<f64>;
pub type EmbeddingSet32 = evaluator::EmbeddingSet<f32>;
pub type MapReport = evaluator::MapReport<f64>;

pub use geometry::ImageGeometry;
