//! Alpha-blended placement of grain crops onto empty background patches.
//!
//! Every composite is a pure function of its inputs and a 64-bit seed, so a
//! batch rendered in parallel matches one rendered serially, byte for byte.

use std::collections::HashMap;
use std::fmt::Write as _;

use image::GrayImage;
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Poisson};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::geometry::{rect_iou, BBox, ImageGeometry, Rect};
use crate::tiler::{GrainCrop, PixelRect};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum CompositorError {
    #[error("grain {grain} ({gw}x{gh}) does not fit in a {pw}x{ph} patch")]
    GrainLargerThanPatch {
        grain: String,
        gw: u32,
        gh: u32,
        pw: u32,
        ph: u32,
    },
    #[error("grain {0} is fully transparent under the alpha mask")]
    DegenerateMask(String),
    #[error("{0} pool is empty")]
    EmptyPool(&'static str),
    #[error("invalid placement policy: {0}")]
    InvalidPolicy(String),
}

/// How many grains go on a patch and how they may overlap.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PlacementPolicy {
    /// Mean of the Poisson grain count before truncation.
    pub grains_per_patch_mean: f64,
    pub min_grains: u32,
    pub max_grains: u32,
    /// A candidate overlapping an accepted placement above this is resampled.
    pub max_pairwise_iou: f64,
    pub max_retries_per_grain: u32,
    /// Width of the linear alpha ramp at the crop border.
    pub feather_px: u32,
}

impl Default for PlacementPolicy {
    fn default() -> Self {
        Self {
            grains_per_patch_mean: 14.3,
            min_grains: 1,
            max_grains: 40,
            max_pairwise_iou: 0.2,
            max_retries_per_grain: 30,
            feather_px: 8,
        }
    }
}

impl PlacementPolicy {
    pub fn validate(&self) -> Result<(), CompositorError> {
        let bad = |m: &str| Err(CompositorError::InvalidPolicy(m.to_string()));
        if !(self.grains_per_patch_mean > 0.0 && self.grains_per_patch_mean.is_finite()) {
            return bad("grains_per_patch_mean must be positive");
        }
        if self.min_grains > self.max_grains {
            return bad("min_grains exceeds max_grains");
        }
        if !(0.0..1.0).contains(&self.max_pairwise_iou) {
            return bad("max_pairwise_iou must lie in [0, 1)");
        }
        if self.max_retries_per_grain == 0 {
            return bad("max_retries_per_grain must be at least 1");
        }
        Ok(())
    }

    /// Draws a grain count from the truncated Poisson distribution.
    pub fn sample_grain_count<R: Rng + ?Sized>(&self, rng: &mut R) -> u32 {
        let poisson = Poisson::new(self.grains_per_patch_mean).expect("validated mean");
        for _ in 0..1000 {
            let k = poisson.sample(rng) as u32;
            if (self.min_grains..=self.max_grains).contains(&k) {
                return k;
            }
        }
        (self.grains_per_patch_mean.round() as u32).clamp(self.min_grains, self.max_grains)
    }
}

/// Per-pixel opacity of a grain crop, in `[0, 1]`.
pub trait AlphaMask: Sync {
    fn alpha(&self, width: u32, height: u32, x: u32, y: u32) -> f64;
}

/// Opaque interior with a linear ramp towards the crop border.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct FeatheredRect {
    pub feather_px: u32,
}

impl AlphaMask for FeatheredRect {
    fn alpha(&self, width: u32, height: u32, x: u32, y: u32) -> f64 {
        if self.feather_px == 0 {
            return 1.0;
        }
        let dx = f64::from(x.min(width - 1 - x)) + 0.5;
        let dy = f64::from(y.min(height - 1 - y)) + 0.5;
        (dx.min(dy) / f64::from(self.feather_px)).min(1.0)
    }
}

/// A grain image ready for pasting.
#[derive(Debug, Clone, PartialEq)]
pub struct Grain {
    pub id: String,
    pub pixels: GrayImage,
}

impl From<GrainCrop> for Grain {
    fn from(crop: GrainCrop) -> Self {
        Self {
            id: crop.stem(),
            pixels: crop.pixels,
        }
    }
}

/// An empty background patch.
#[derive(Debug, Clone, PartialEq)]
pub struct Background {
    pub id: String,
    pub pixels: GrayImage,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Placement {
    pub grain_id: String,
    pub rect: PixelRect,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CompositeRecord {
    pub composite_id: String,
    pub background_id: String,
    pub placements: Vec<Placement>,
    /// One label per placement, same order.
    pub labels: Vec<BBox<f64>>,
    pub content_hash: String,
    pub seed: u64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Composite {
    pub pixels: GrayImage,
    pub record: CompositeRecord,
}

/// SHA-256 over dimensions and raw pixels, lowercase hex.
pub fn content_hash(pixels: &GrayImage) -> String {
    let mut h = Sha256::new();
    h.update(pixels.width().to_le_bytes());
    h.update(pixels.height().to_le_bytes());
    h.update(pixels.as_raw());
    h.finalize().iter().fold(String::with_capacity(64), |mut s, b| {
        let _ = write!(s, "{b:02x}");
        s
    })
}

/// SplitMix64 finalizer over `(master, index)`; gives each composite an
/// independent seed regardless of scheduling.
pub fn derive_seed(master: u64, index: u64) -> u64 {
    let mut z = master ^ index.wrapping_add(1).wrapping_mul(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

fn check_grain(grain: &Grain, patch: (u32, u32), mask: &dyn AlphaMask) -> Result<(), CompositorError> {
    let (gw, gh) = grain.pixels.dimensions();
    if gw == 0 || gh == 0 || gw > patch.0 || gh > patch.1 {
        return Err(CompositorError::GrainLargerThanPatch {
            grain: grain.id.clone(),
            gw,
            gh,
            pw: patch.0,
            ph: patch.1,
        });
    }
    let opaque = (0..gh).any(|y| (0..gw).any(|x| mask.alpha(gw, gh, x, y) > 0.0));
    if !opaque {
        return Err(CompositorError::DegenerateMask(grain.id.clone()));
    }
    Ok(())
}

fn to_rect(r: &PixelRect) -> Rect<f64> {
    Rect {
        x0: f64::from(r.x),
        y0: f64::from(r.y),
        x1: f64::from(r.x + r.width),
        y1: f64::from(r.y + r.height),
    }
}

fn blend(out: &mut GrayImage, grain: &GrayImage, at: &PixelRect, mask: &dyn AlphaMask) {
    let (gw, gh) = grain.dimensions();
    for y in 0..gh {
        for x in 0..gw {
            let a = mask.alpha(gw, gh, x, y).clamp(0.0, 1.0);
            let g = f64::from(grain.get_pixel(x, y)[0]);
            let px = out.get_pixel_mut(at.x + x, at.y + y);
            let b = f64::from(px[0]);
            px[0] = (a * g + (1.0 - a) * b).round().clamp(0.0, 255.0) as u8;
        }
    }
}

/// Places `grains` at uniformly random positions on `background` using the
/// policy's feathered rectangular mask.
pub fn composite_patch(
    composite_id: &str,
    background: &Background,
    grains: &[&Grain],
    policy: &PlacementPolicy,
    seed: u64,
) -> Result<Composite, CompositorError> {
    let mask = FeatheredRect {
        feather_px: policy.feather_px,
    };
    composite_patch_with_mask(composite_id, background, grains, policy, &mask, seed)
}

/// [`composite_patch`] with a caller-supplied alpha mask.
pub fn composite_patch_with_mask(
    composite_id: &str,
    background: &Background,
    grains: &[&Grain],
    policy: &PlacementPolicy,
    mask: &dyn AlphaMask,
    seed: u64,
) -> Result<Composite, CompositorError> {
    policy.validate()?;
    let (pw, ph) = background.pixels.dimensions();
    for g in grains {
        check_grain(g, (pw, ph), mask)?;
    }
    let geom = ImageGeometry::new(pw, ph).map_err(|e| CompositorError::InvalidPolicy(e.to_string()))?;

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut placements: Vec<Placement> = Vec::with_capacity(grains.len());
    let mut placed: Vec<usize> = Vec::with_capacity(grains.len());
    for (gi, g) in grains.iter().enumerate() {
        let (gw, gh) = g.pixels.dimensions();
        for _ in 0..policy.max_retries_per_grain {
            let cand = PixelRect {
                x: rng.random_range(0..=pw - gw),
                y: rng.random_range(0..=ph - gh),
                width: gw,
                height: gh,
            };
            let cr = to_rect(&cand);
            if placements
                .iter()
                .all(|p| rect_iou(&cr, &to_rect(&p.rect)) <= policy.max_pairwise_iou)
            {
                placements.push(Placement {
                    grain_id: g.id.clone(),
                    rect: cand,
                });
                placed.push(gi);
                break;
            }
        }
    }

    let mut pixels = background.pixels.clone();
    for (p, &gi) in placements.iter().zip(&placed) {
        blend(&mut pixels, &grains[gi].pixels, &p.rect, mask);
    }
    let labels = placements
        .iter()
        .map(|p| {
            BBox::from_pixel_rect(0, to_rect(&p.rect), geom).expect("placement lies inside the patch")
        })
        .collect();

    let record = CompositeRecord {
        composite_id: composite_id.to_string(),
        background_id: background.id.clone(),
        placements,
        labels,
        content_hash: content_hash(&pixels),
        seed,
    };
    Ok(Composite { pixels, record })
}

/// Everything needed to render one composite of a batch.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CompositeJob {
    pub composite_id: String,
    pub background: usize,
    pub grains: Vec<usize>,
    pub seed: u64,
}

/// Decides backgrounds, grain selections and per-composite seeds.
/// Backgrounds are drawn without replacement while the pool lasts.
pub fn plan_batch(
    n_backgrounds: usize,
    n_grains: usize,
    n_composites: usize,
    policy: &PlacementPolicy,
    seed: u64,
    id_prefix: &str,
) -> Result<Vec<CompositeJob>, CompositorError> {
    policy.validate()?;
    if n_composites == 0 {
        return Ok(Vec::new());
    }
    if n_backgrounds == 0 {
        return Err(CompositorError::EmptyPool("background"));
    }
    if n_grains == 0 {
        return Err(CompositorError::EmptyPool("grain"));
    }
    let mut master = ChaCha8Rng::seed_from_u64(seed);
    let mut order: Vec<usize> = (0..n_backgrounds).collect();
    order.shuffle(&mut master);
    let extra: Vec<usize> = (n_backgrounds..n_composites)
        .map(|_| master.random_range(0..n_backgrounds))
        .collect();
    let backgrounds = order.into_iter().take(n_composites).chain(extra);

    Ok(backgrounds
        .enumerate()
        .map(|(i, background)| {
            let sub = derive_seed(seed, i as u64);
            let mut pick = ChaCha8Rng::seed_from_u64(sub);
            pick.set_stream(1);
            let count = policy.sample_grain_count(&mut pick);
            let grains = (0..count).map(|_| pick.random_range(0..n_grains)).collect();
            CompositeJob {
                composite_id: format!("{id_prefix}{i:06}"),
                background,
                grains,
                seed: sub,
            }
        })
        .collect())
}

pub fn render_job(
    job: &CompositeJob,
    backgrounds: &[Background],
    grains: &[Grain],
    policy: &PlacementPolicy,
) -> Result<Composite, CompositorError> {
    let chosen: Vec<&Grain> = job.grains.iter().map(|&g| &grains[g]).collect();
    composite_patch(&job.composite_id, &backgrounds[job.background], &chosen, policy, job.seed)
}

#[derive(Debug, Clone, PartialEq)]
pub struct BatchSummary {
    pub records: Vec<CompositeRecord>,
    /// Grains actually placed across the batch.
    pub total_grains: usize,
}

/// Renders `n_composites` composites in parallel and returns their records.
pub fn generate_batch(
    backgrounds: &[Background],
    grains: &[Grain],
    n_composites: usize,
    policy: &PlacementPolicy,
    seed: u64,
    id_prefix: &str,
) -> Result<BatchSummary, CompositorError> {
    let jobs = plan_batch(backgrounds.len(), grains.len(), n_composites, policy, seed, id_prefix)?;
    let records = jobs
        .par_iter()
        .map(|job| render_job(job, backgrounds, grains, policy).map(|c| c.record))
        .collect::<Result<Vec<_>, _>>()?;
    let total_grains = records.iter().map(|r| r.placements.len()).sum();
    Ok(BatchSummary {
        records,
        total_grains,
    })
}

/// Index pairs `(i, j)`, `i < j`, of records with equal content hashes.
pub fn dedup_scan(records: &[CompositeRecord]) -> Vec<(usize, usize)> {
    let mut seen: HashMap<&str, Vec<usize>> = HashMap::new();
    let mut pairs = Vec::new();
    for (j, r) in records.iter().enumerate() {
        let earlier = seen.entry(r.content_hash.as_str()).or_default();
        pairs.extend(earlier.iter().map(|&i| (i, j)));
        earlier.push(j);
    }
    pairs
}

/// Batch ledger: `id  background_id  seed  grain_count  content_hash`, tab
/// separated, one line per composite.
pub fn format_ledger(records: &[CompositeRecord]) -> String {
    records
        .iter()
        .map(|r| {
            format!(
                "{}\t{}\t{}\t{}\t{}\n",
                r.composite_id,
                r.background_id,
                r.seed,
                r.placements.len(),
                r.content_hash
            )
        })
        .collect()
}
