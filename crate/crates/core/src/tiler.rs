//! Sliding-window tiling of slide images, label re-indexing into patch
//! frames and grain-crop extraction with quality flags.

use image::{DynamicImage, GenericImageView, GrayImage};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::geometry::{aspect_ratio_ok, BBox, ImageGeometry, Rect};
use crate::scalar::Real;

pub const DEFAULT_TILE_SIZE: u32 = 640;
pub const DEFAULT_STEP: u32 = 320;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum TilerError {
    #[error("tile size {tile} exceeds image {width}x{height}")]
    TileLargerThanImage { tile: u32, width: u32, height: u32 },
    #[error("step must be in 1..={tile}, got {step}")]
    InvalidStep { step: u32, tile: u32 },
}

/// One tile origin inside a source image.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct PatchPlan {
    pub image_id: String,
    pub origin_x: u32,
    pub origin_y: u32,
    pub tile_size: u32,
    pub step: u32,
}

impl PatchPlan {
    /// `<image-id>_x<origin_x>_y<origin_y>`
    pub fn stem(&self) -> String {
        format!("{}_x{}_y{}", self.image_id, self.origin_x, self.origin_y)
    }

    pub fn geometry(&self) -> ImageGeometry {
        ImageGeometry::new(self.tile_size, self.tile_size).expect("tile size is positive")
    }

    fn contains_center<T: Real>(&self, (x, y): (T, T), src: ImageGeometry) -> bool {
        let axis = |c: T, origin: u32, dim: u32| {
            let lo = T::lit(f64::from(origin));
            let end = origin + self.tile_size;
            let hi = T::lit(f64::from(end));
            // Half-open, except that the far image edge belongs to the last tile.
            c >= lo && (c < hi || (end == dim && c == hi))
        };
        axis(x, self.origin_x, src.width()) && axis(y, self.origin_y, src.height())
    }
}

fn axis_origins(dim: u32, tile: u32, step: u32) -> Vec<u32> {
    let mut origins: Vec<u32> = (0..)
        .map(|i: u32| i * step)
        .take_while(|o| o + tile <= dim)
        .collect();
    let last = *origins.last().expect("tile fits at origin 0");
    if last + tile < dim {
        origins.push(dim - tile);
    }
    origins
}

/// Plans tiles on a regular stride, adding a tail tile anchored at
/// `dim - tile_size` whenever the stride leaves pixels uncovered.
pub fn plan_tiles(
    image_id: &str,
    geom: ImageGeometry,
    tile_size: u32,
    step: u32,
) -> Result<Vec<PatchPlan>, TilerError> {
    if tile_size > geom.width() || tile_size > geom.height() || tile_size == 0 {
        return Err(TilerError::TileLargerThanImage {
            tile: tile_size,
            width: geom.width(),
            height: geom.height(),
        });
    }
    if step == 0 || step > tile_size {
        return Err(TilerError::InvalidStep {
            step,
            tile: tile_size,
        });
    }
    let xs = axis_origins(geom.width(), tile_size, step);
    let ys = axis_origins(geom.height(), tile_size, step);
    Ok(ys
        .iter()
        .flat_map(|&oy| {
            xs.iter().map(move |&ox| PatchPlan {
                image_id: image_id.to_string(),
                origin_x: ox,
                origin_y: oy,
                tile_size,
                step,
            })
        })
        .collect())
}

/// Labels whose center falls in the patch, clipped to it and renormalized to
/// the patch frame. With overlapping tiles a label can land in several
/// patches.
pub fn tile_labels<T: Real>(labels: &[BBox<T>], src: ImageGeometry, plan: &PatchPlan) -> Vec<BBox<T>> {
    let ts = T::lit(f64::from(plan.tile_size));
    let (ox, oy) = (T::lit(f64::from(plan.origin_x)), T::lit(f64::from(plan.origin_y)));
    labels
        .iter()
        .filter(|b| plan.contains_center(b.pixel_center(src), src))
        .filter_map(|b| {
            let r = b.pixel_rect(src);
            BBox::from_rect_clipped(
                b.category_id,
                Rect {
                    x0: (r.x0 - ox) / ts,
                    y0: (r.y0 - oy) / ts,
                    x1: (r.x1 - ox) / ts,
                    y1: (r.y1 - oy) / ts,
                },
            )
        })
        .collect()
}

/// Assigns each label to exactly one owning tile: the tile with the largest
/// origin not exceeding the label center on each axis. Used where labels must
/// be counted once. `None` for centers outside every tile.
pub fn assign_owners<T: Real>(
    labels: &[BBox<T>],
    src: ImageGeometry,
    plans: &[PatchPlan],
) -> Vec<Option<usize>> {
    labels
        .iter()
        .map(|b| {
            let c = b.pixel_center(src);
            plans
                .iter()
                .enumerate()
                .filter(|(_, p)| p.contains_center(c, src))
                .max_by_key(|(_, p)| (p.origin_y, p.origin_x))
                .map(|(i, _)| i)
        })
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum PatchKind {
    Background,
    Annotated,
}

pub fn classify_patch<T>(labels_in_patch: &[BBox<T>]) -> PatchKind {
    if labels_in_patch.is_empty() {
        PatchKind::Background
    } else {
        PatchKind::Annotated
    }
}

/// Cuts the planned patch out of a decoded image, keeping its color type.
pub fn crop_patch(image: &DynamicImage, plan: &PatchPlan) -> DynamicImage {
    image.crop_imm(plan.origin_x, plan.origin_y, plan.tile_size, plan.tile_size)
}

/// Integer pixel rectangle.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct PixelRect {
    pub x: u32,
    pub y: u32,
    pub width: u32,
    pub height: u32,
}

impl PixelRect {
    /// Smallest pixel rectangle covering the box, clipped to the image.
    pub fn covering<T: Real>(bbox: &BBox<T>, geom: ImageGeometry) -> Self {
        let r = bbox.pixel_rect(geom);
        let clamp = |v: f64, max: u32| v.max(0.0).min(f64::from(max)) as u32;
        // normalized coordinates rarely land exactly on pixel edges
        let snap = |v: f64| if (v - v.round()).abs() < 1e-6 { v.round() } else { v };
        let x0 = clamp(snap(r.x0.as_f64()).floor(), geom.width() - 1);
        let y0 = clamp(snap(r.y0.as_f64()).floor(), geom.height() - 1);
        let x1 = clamp(snap(r.x1.as_f64()).ceil(), geom.width()).max(x0 + 1);
        let y1 = clamp(snap(r.y1.as_f64()).ceil(), geom.height()).max(y0 + 1);
        Self {
            x: x0,
            y: y0,
            width: x1 - x0,
            height: y1 - y0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Provenance {
    Manual,
    Automated,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct QualityFlags {
    pub blackened: bool,
    pub lopsided: bool,
}

impl QualityFlags {
    pub fn is_clean(&self) -> bool {
        !self.blackened && !self.lopsided
    }
}

/// Thresholds for the blackened-crop predicate.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BlackenedRule {
    /// Pixels strictly below this 8-bit intensity count as black.
    pub intensity_floor: u8,
    /// A crop is blackened when the black fraction exceeds this.
    pub zero_fraction_threshold: f64,
}

impl Default for BlackenedRule {
    fn default() -> Self {
        Self {
            intensity_floor: 2,
            zero_fraction_threshold: 0.60,
        }
    }
}

pub fn is_blackened(crop: &GrayImage, rule: &BlackenedRule) -> bool {
    let total = crop.as_raw().len();
    if total == 0 {
        return false;
    }
    let dark = crop.as_raw().iter().filter(|&&p| p < rule.intensity_floor).count();
    dark as f64 / total as f64 > rule.zero_fraction_threshold
}

/// One grain cut out of a slide image.
#[derive(Debug, Clone, PartialEq)]
pub struct GrainCrop {
    pub image_id: String,
    pub index: usize,
    pub rect: PixelRect,
    pub pixels: GrayImage,
    pub provenance: Provenance,
    pub flags: QualityFlags,
}

impl GrainCrop {
    pub fn stem(&self) -> String {
        format!("{}_g{:05}", self.image_id, self.index)
    }
}

/// One crop per label, flagged as blackened and/or lopsided. Filtering is
/// left to the caller (see [`QualityFlags::is_clean`]).
pub fn crop_grains<T: Real>(
    image_id: &str,
    image: &GrayImage,
    labels: &[BBox<T>],
    provenance: Provenance,
    rule: &BlackenedRule,
) -> Vec<GrainCrop> {
    let geom = ImageGeometry::new(image.width(), image.height()).expect("decoded image is non-empty");
    labels
        .iter()
        .enumerate()
        .map(|(index, b)| {
            let rect = PixelRect::covering(b, geom);
            let pixels = image.view(rect.x, rect.y, rect.width, rect.height).to_image();
            let flags = QualityFlags {
                blackened: is_blackened(&pixels, rule),
                lopsided: !aspect_ratio_ok(rect.width, rect.height),
            };
            GrainCrop {
                image_id: image_id.to_string(),
                index,
                rect,
                pixels,
                provenance,
                flags,
            }
        })
        .collect()
}
