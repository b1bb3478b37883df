use image::GrayImage;

use super::{EmbeddingSet, EvalError};
use crate::scalar::Real;

/// Side of the toy embedder's output grid (`8 x 8 = 64` values).
pub const TOY_EMBED_SIDE: u32 = 8;
pub const BLOB_MAGIC: &[u8; 4] = b"EMB1";

/// Bilinear downsample to 8x8 (pixel-center aligned), scaled to `[0, 1]`,
/// flattened row-major.
pub fn toy_embed<T: Real>(image: &GrayImage) -> Vec<T> {
    let (w, h) = image.dimensions();
    if w == 0 || h == 0 {
        return vec![T::zero(); (TOY_EMBED_SIDE * TOY_EMBED_SIDE) as usize];
    }
    let side = f64::from(TOY_EMBED_SIDE);
    let sample_axis = |i: u32, dim: u32| {
        let s = ((f64::from(i) + 0.5) * f64::from(dim) / side - 0.5).clamp(0.0, f64::from(dim - 1));
        let lo = s.floor() as u32;
        let hi = (lo + 1).min(dim - 1);
        (lo, hi, s - f64::from(lo))
    };
    let px = |x: u32, y: u32| f64::from(image.get_pixel(x, y)[0]);
    let mut out = Vec::with_capacity((TOY_EMBED_SIDE * TOY_EMBED_SIDE) as usize);
    for j in 0..TOY_EMBED_SIDE {
        let (y0, y1, fy) = sample_axis(j, h);
        for i in 0..TOY_EMBED_SIDE {
            let (x0, x1, fx) = sample_axis(i, w);
            let top = px(x0, y0) * (1.0 - fx) + px(x1, y0) * fx;
            let bottom = px(x0, y1) * (1.0 - fx) + px(x1, y1) * fx;
            out.push(T::lit((top * (1.0 - fy) + bottom * fy) / 255.0));
        }
    }
    out
}

/// Binary embedding matrix: magic `EMB1`, `u32` n, `u32` d (little endian),
/// then `n * d` little-endian `f32` values, row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct EmbeddingBlob {
    pub n: u32,
    pub d: u32,
    pub data: Vec<f32>,
}

impl EmbeddingBlob {
    pub fn from_rows<T: Real>(rows: &[Vec<T>]) -> Result<Self, EvalError> {
        let d = rows.first().map_or(0, Vec::len);
        if let Some(bad) = rows.iter().find(|r| r.len() != d) {
            return Err(EvalError::DimensionMismatch(d, bad.len()));
        }
        let data = rows
            .iter()
            .flatten()
            .map(|v| v.to_f32().unwrap_or(f32::NAN))
            .collect();
        Ok(Self {
            n: rows.len() as u32,
            d: d as u32,
            data,
        })
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(12 + self.data.len() * 4);
        out.extend_from_slice(BLOB_MAGIC);
        out.extend_from_slice(&self.n.to_le_bytes());
        out.extend_from_slice(&self.d.to_le_bytes());
        for v in &self.data {
            out.extend_from_slice(&v.to_le_bytes());
        }
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self, EvalError> {
        if bytes.len() < 12 || &bytes[..4] != BLOB_MAGIC {
            return Err(EvalError::Blob("missing EMB1 header".into()));
        }
        let word = |at: usize| u32::from_le_bytes(bytes[at..at + 4].try_into().expect("4 bytes"));
        let (n, d) = (word(4), word(8));
        let count = (n as usize)
            .checked_mul(d as usize)
            .ok_or_else(|| EvalError::Blob("n*d overflows".into()))?;
        let body = &bytes[12..];
        if body.len() != count * 4 {
            return Err(EvalError::Blob(format!(
                "expected {} payload bytes for {n}x{d}, found {}",
                count * 4,
                body.len()
            )));
        }
        let data = body
            .chunks_exact(4)
            .map(|c| f32::from_le_bytes(c.try_into().expect("4 bytes")))
            .collect();
        Ok(Self { n, d, data })
    }

    pub fn to_set<T: Real>(&self) -> Result<EmbeddingSet<T>, EvalError> {
        EmbeddingSet::new(
            self.n as usize,
            self.d as usize,
            self.data.iter().map(|v| T::lit(f64::from(*v))).collect(),
        )
    }
}
