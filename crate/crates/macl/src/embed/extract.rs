//! Deterministic feature extractors standing in for pretrained vision
//! and text encoders, plus the precomputed-feature file format that lets
//! externally produced features bypass them.

use crate::data::{ItemId, RasterImage, TokenText};
use crate::error::{Error, Result};
use crate::rng::fnv1a64;
use std::io::{Read, Write};
use std::path::Path;

/// Cells per image axis for the grid-statistics extractor.
pub const IMAGE_GRID: usize = 8;

/// Image feature length: 8x8 cells x 3 channels x (mean, std).
/// Grayscale images are treated as three identical channels so every
/// catalog shares one native dimension.
pub const IMAGE_NATIVE_DIM: usize = IMAGE_GRID * IMAGE_GRID * 3 * 2;

/// Grid statistics image features: per cell and channel, the mean and
/// standard deviation of intensity. Deterministic, and sensitive enough
/// that augmentations move it slightly rather than not at all.
pub fn toy_image_extract(img: &RasterImage) -> Result<Vec<f64>> {
    if img.width < IMAGE_GRID || img.height < IMAGE_GRID {
        return Err(Error::DegenerateInput(format!(
            "image {}x{} smaller than the {IMAGE_GRID}x{IMAGE_GRID} feature grid",
            img.width, img.height
        )));
    }
    let mut out = Vec::with_capacity(IMAGE_NATIVE_DIM);
    for gy in 0..IMAGE_GRID {
        let y0 = gy * img.height / IMAGE_GRID;
        let y1 = (gy + 1) * img.height / IMAGE_GRID;
        for gx in 0..IMAGE_GRID {
            let x0 = gx * img.width / IMAGE_GRID;
            let x1 = (gx + 1) * img.width / IMAGE_GRID;
            let n = ((y1 - y0) * (x1 - x0)) as f64;
            for ch in 0..3 {
                let c = if img.channels == 1 { 0 } else { ch };
                let mut sum = 0.0;
                let mut sum_sq = 0.0;
                for y in y0..y1 {
                    for x in x0..x1 {
                        let v = img.get(x, y, c) as f64;
                        sum += v;
                        sum_sq += v * v;
                    }
                }
                let mean = sum / n;
                let var = (sum_sq / n - mean * mean).max(0.0);
                out.push(mean);
                out.push(var.sqrt());
            }
        }
    }
    Ok(out)
}

/// Hashed bag-of-tokens text features: every token lands in a seeded,
/// stable bucket; the bucket-count vector is L2-normalized. Token order
/// does not matter by construction.
#[derive(Debug, Clone)]
pub struct TextExtractor {
    pub native_dim: usize,
    pub seed: u64,
}

impl TextExtractor {
    pub fn new(native_dim: usize, seed: u64) -> Self {
        TextExtractor { native_dim, seed }
    }

    pub fn bucket_of(&self, token: &str) -> usize {
        let mut bytes = self.seed.to_le_bytes().to_vec();
        bytes.extend_from_slice(token.as_bytes());
        (fnv1a64(&bytes) % self.native_dim as u64) as usize
    }

    pub fn extract(&self, txt: &TokenText) -> Result<Vec<f64>> {
        if txt.is_empty() {
            return Err(Error::DegenerateInput("cannot extract features from empty text".into()));
        }
        let mut out = vec![0.0; self.native_dim];
        for tok in &txt.tokens {
            out[self.bucket_of(tok)] += 1.0;
        }
        let norm = out.iter().map(|v| v * v).sum::<f64>().sqrt();
        for v in out.iter_mut() {
            *v /= norm;
        }
        Ok(out)
    }

    /// Embedding of a single token, used to build the substitution /
    /// insertion neighbor index.
    pub fn token_vector(&self, token: &str) -> Vec<f64> {
        let mut out = vec![0.0; self.native_dim];
        out[self.bucket_of(token)] = 1.0;
        out
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FeatureKind {
    Image,
    Text,
}

const FEATURES_MAGIC: &[u8; 8] = b"MACLFEAT";

/// Write a precomputed feature file: header (magic, kind, native_dim,
/// count), then `count` records of (item_id: u32, native_dim f32), all
/// little-endian.
pub fn write_features(
    path: &Path,
    kind: FeatureKind,
    native_dim: usize,
    records: &[(ItemId, Vec<f64>)],
) -> Result<()> {
    let mut f = std::io::BufWriter::new(std::fs::File::create(path)?);
    f.write_all(FEATURES_MAGIC)?;
    f.write_all(&[match kind {
        FeatureKind::Image => 0u8,
        FeatureKind::Text => 1u8,
    }])?;
    f.write_all(&(native_dim as u32).to_le_bytes())?;
    f.write_all(&(records.len() as u32).to_le_bytes())?;
    for (id, vec) in records {
        if vec.len() != native_dim {
            return Err(Error::Contract(format!(
                "feature record for item {id} has length {}, expected {native_dim}",
                vec.len()
            )));
        }
        f.write_all(&id.to_le_bytes())?;
        for &v in vec {
            f.write_all(&(v as f32).to_le_bytes())?;
        }
    }
    Ok(())
}

pub fn read_features(path: &Path) -> Result<(FeatureKind, usize, Vec<(ItemId, Vec<f64>)>)> {
    let mut f = std::io::BufReader::new(std::fs::File::open(path)?);
    let mut magic = [0u8; 8];
    f.read_exact(&mut magic)?;
    if &magic != FEATURES_MAGIC {
        return Err(Error::Format("not a feature file (bad magic)".into()));
    }
    let mut kind_b = [0u8; 1];
    f.read_exact(&mut kind_b)?;
    let kind = match kind_b[0] {
        0 => FeatureKind::Image,
        1 => FeatureKind::Text,
        k => return Err(Error::Format(format!("unknown feature kind {k}"))),
    };
    let mut u32b = [0u8; 4];
    f.read_exact(&mut u32b)?;
    let native_dim = u32::from_le_bytes(u32b) as usize;
    f.read_exact(&mut u32b)?;
    let count = u32::from_le_bytes(u32b) as usize;
    let mut records = Vec::with_capacity(count);
    let mut f32b = [0u8; 4];
    for _ in 0..count {
        f.read_exact(&mut u32b)?;
        let id = u32::from_le_bytes(u32b);
        let mut vec = Vec::with_capacity(native_dim);
        for _ in 0..native_dim {
            f.read_exact(&mut f32b)?;
            vec.push(f32::from_le_bytes(f32b) as f64);
        }
        records.push((id, vec));
    }
    Ok((kind, native_dim, records))
}
