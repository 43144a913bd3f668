//! Image augmentation: horizontal flip, edge cropping, Gaussian noise,
//! Gaussian blur, and max pooling. Pure functions: the source image is
//! never mutated.

use super::technique::{AugmentParams, Technique};
use crate::data::{RasterImage, MIN_AUGMENT_SIZE};
use crate::error::{Error, Result};
use rand::Rng;
use rand_distr::{Distribution, Normal};

pub fn augment_image(
    img: &RasterImage,
    technique: Technique,
    params: &AugmentParams,
    rng: &mut impl Rng,
) -> Result<RasterImage> {
    if img.width < MIN_AUGMENT_SIZE || img.height < MIN_AUGMENT_SIZE {
        return Err(Error::DegenerateInput(format!(
            "image {}x{} below the {MIN_AUGMENT_SIZE}x{MIN_AUGMENT_SIZE} augmentation minimum",
            img.width, img.height
        )));
    }
    match technique {
        Technique::Hflip => Ok(hflip(img)),
        Technique::Cropping => Ok(crop_edges(img, params.crop_ratio, rng)),
        Technique::GaussianNoise => Ok(gaussian_noise(img, params.noise_ratio, rng)),
        Technique::GaussianBlur => Ok(gaussian_blur(img, params.blur_sigma)),
        Technique::MaxPooling => max_pool(img, params.pool_size),
        other => Err(Error::Contract(format!(
            "{other} is not an image technique"
        ))),
    }
}

fn hflip(img: &RasterImage) -> RasterImage {
    let mut out = img.clone();
    for y in 0..img.height {
        for x in 0..img.width {
            for c in 0..img.channels {
                out.set(x, y, c, img.get(img.width - 1 - x, y, c));
            }
        }
    }
    out
}

/// Remove up to `ratio` of rows and columns, split randomly between the
/// opposing sides, never shrinking below the augmentation minimum.
fn crop_edges(img: &RasterImage, ratio: f64, rng: &mut impl Rng) -> RasterImage {
    let budget = |extent: usize| -> usize {
        let max_by_ratio = (extent as f64 * ratio).floor() as usize;
        max_by_ratio.min(extent - MIN_AUGMENT_SIZE)
    };
    let rows = if budget(img.height) == 0 { 0 } else { rng.random_range(0..=budget(img.height)) };
    let cols = if budget(img.width) == 0 { 0 } else { rng.random_range(0..=budget(img.width)) };
    let top = if rows == 0 { 0 } else { rng.random_range(0..=rows) };
    let left = if cols == 0 { 0 } else { rng.random_range(0..=cols) };
    let new_h = img.height - rows;
    let new_w = img.width - cols;
    let mut pixels = Vec::with_capacity(new_w * new_h * img.channels);
    for y in top..top + new_h {
        for x in left..left + new_w {
            for c in 0..img.channels {
                pixels.push(img.get(x, y, c));
            }
        }
    }
    RasterImage::new(new_w, new_h, img.channels, pixels).expect("crop dims are consistent")
}

/// Add per-pixel Gaussian noise with sigma = ratio * 255, clamped to the
/// byte range. A zero ratio returns the image unchanged.
fn gaussian_noise(img: &RasterImage, ratio: f64, rng: &mut impl Rng) -> RasterImage {
    if ratio == 0.0 {
        return img.clone();
    }
    let sigma = ratio * 255.0;
    let normal = Normal::new(0.0, sigma).expect("sigma is positive");
    let mut out = img.clone();
    for p in out.pixels.iter_mut() {
        let noisy = *p as f64 + normal.sample(rng);
        *p = noisy.round().clamp(0.0, 255.0) as u8;
    }
    out
}

/// 3x3 Gaussian kernel with edge-replicate padding.
fn gaussian_blur(img: &RasterImage, sigma: f64) -> RasterImage {
    let mut kernel = [[0.0f64; 3]; 3];
    let mut total = 0.0;
    for (dy, row) in kernel.iter_mut().enumerate() {
        for (dx, k) in row.iter_mut().enumerate() {
            let (fx, fy) = (dx as f64 - 1.0, dy as f64 - 1.0);
            *k = (-(fx * fx + fy * fy) / (2.0 * sigma * sigma)).exp();
            total += *k;
        }
    }
    for row in kernel.iter_mut() {
        for k in row.iter_mut() {
            *k /= total;
        }
    }
    let mut out = img.clone();
    let clamp = |v: isize, hi: usize| v.clamp(0, hi as isize - 1) as usize;
    for y in 0..img.height {
        for x in 0..img.width {
            for c in 0..img.channels {
                let mut acc = 0.0;
                for (dy, row) in kernel.iter().enumerate() {
                    for (dx, &k) in row.iter().enumerate() {
                        let sx = clamp(x as isize + dx as isize - 1, img.width);
                        let sy = clamp(y as isize + dy as isize - 1, img.height);
                        acc += k * img.get(sx, sy, c) as f64;
                    }
                }
                out.set(x, y, c, acc.round().clamp(0.0, 255.0) as u8);
            }
        }
    }
    out
}

/// Stride-p max pooling; output extents are the floor of input / p.
fn max_pool(img: &RasterImage, p: usize) -> Result<RasterImage> {
    let new_w = img.width / p;
    let new_h = img.height / p;
    if new_w == 0 || new_h == 0 {
        return Err(Error::DegenerateInput(format!(
            "image {}x{} too small for {p}x{p} pooling",
            img.width, img.height
        )));
    }
    let mut pixels = Vec::with_capacity(new_w * new_h * img.channels);
    for y in 0..new_h {
        for x in 0..new_w {
            for c in 0..img.channels {
                let mut best = 0u8;
                for dy in 0..p {
                    for dx in 0..p {
                        best = best.max(img.get(x * p + dx, y * p + dy, c));
                    }
                }
                pixels.push(best);
            }
        }
    }
    RasterImage::new(new_w, new_h, img.channels, pixels)
}
