//! Raster images and the binary PGM/PPM container.

use crate::error::{Error, Result};
use std::io::Write;
use std::path::Path;

/// Smallest image any augmentation must accept.
pub const MIN_AUGMENT_SIZE: usize = 4;

/// A dense 8-bit raster, 1 channel (gray) or 3 channels (RGB),
/// row-major, channel-interleaved.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RasterImage {
    pub width: usize,
    pub height: usize,
    pub channels: usize,
    pub pixels: Vec<u8>,
}

impl RasterImage {
    pub fn new(width: usize, height: usize, channels: usize, pixels: Vec<u8>) -> Result<Self> {
        if width == 0 || height == 0 {
            return Err(Error::Domain("image extents must be positive".into()));
        }
        if channels != 1 && channels != 3 {
            return Err(Error::Domain(format!("unsupported channel count {channels}")));
        }
        if pixels.len() != width * height * channels {
            return Err(Error::Format(format!(
                "pixel buffer holds {} bytes, expected {}x{}x{} = {}",
                pixels.len(),
                width,
                height,
                channels,
                width * height * channels
            )));
        }
        Ok(RasterImage { width, height, channels, pixels })
    }

    #[inline]
    pub fn get(&self, x: usize, y: usize, c: usize) -> u8 {
        self.pixels[(y * self.width + x) * self.channels + c]
    }

    #[inline]
    pub fn set(&mut self, x: usize, y: usize, c: usize, v: u8) {
        self.pixels[(y * self.width + x) * self.channels + c] = v;
    }

    /// Serialize as binary PGM (1 channel) or PPM (3 channels).
    pub fn to_pnm_bytes(&self) -> Vec<u8> {
        let magic = if self.channels == 1 { "P5" } else { "P6" };
        let mut out = Vec::with_capacity(self.pixels.len() + 32);
        write!(out, "{magic}\n{} {}\n255\n", self.width, self.height).unwrap();
        out.extend_from_slice(&self.pixels);
        out
    }

    pub fn from_pnm_bytes(bytes: &[u8]) -> Result<Self> {
        let mut pos = 0usize;
        let magic = read_pnm_token(bytes, &mut pos)
            .ok_or_else(|| Error::Format("truncated PNM header".into()))?;
        let channels = match magic.as_str() {
            "P5" => 1,
            "P6" => 3,
            other => return Err(Error::Format(format!("unsupported PNM magic {other:?}"))),
        };
        let mut dims = [0usize; 3];
        for d in dims.iter_mut() {
            let tok = read_pnm_token(bytes, &mut pos)
                .ok_or_else(|| Error::Format("truncated PNM header".into()))?;
            *d = tok
                .parse()
                .map_err(|_| Error::Format(format!("bad PNM header field {tok:?}")))?;
        }
        let (width, height, maxval) = (dims[0], dims[1], dims[2]);
        if maxval != 255 {
            return Err(Error::Format(format!("only maxval 255 supported, got {maxval}")));
        }
        // A single whitespace byte separates the header from the raster.
        let data = &bytes[pos..];
        let need = width * height * channels;
        if data.len() < need {
            return Err(Error::Format(format!(
                "PNM raster holds {} bytes, expected {need}",
                data.len()
            )));
        }
        RasterImage::new(width, height, channels, data[..need].to_vec())
    }

    pub fn write_pnm(&self, path: &Path) -> Result<()> {
        Ok(std::fs::write(path, self.to_pnm_bytes())?)
    }

    pub fn read_pnm(path: &Path) -> Result<Self> {
        Self::from_pnm_bytes(&std::fs::read(path)?)
    }

    /// File extension matching the channel count.
    pub fn pnm_extension(&self) -> &'static str {
        if self.channels == 1 {
            "pgm"
        } else {
            "ppm"
        }
    }
}

/// Read one whitespace-delimited header token, skipping `#` comments,
/// and leave `pos` one byte past the whitespace that ended the token.
fn read_pnm_token(bytes: &[u8], pos: &mut usize) -> Option<String> {
    let mut tok = Vec::new();
    while *pos < bytes.len() {
        let b = bytes[*pos];
        if b == b'#' && tok.is_empty() {
            while *pos < bytes.len() && bytes[*pos] != b'\n' {
                *pos += 1;
            }
            continue;
        }
        if b.is_ascii_whitespace() {
            *pos += 1;
            if tok.is_empty() {
                continue;
            }
            break;
        }
        tok.push(b);
        *pos += 1;
    }
    if tok.is_empty() {
        None
    } else {
        Some(String::from_utf8(tok).ok()?)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn pnm_round_trip_gray_and_rgb() {
        let gray = RasterImage::new(5, 4, 1, (0..20).collect()).unwrap();
        let back = RasterImage::from_pnm_bytes(&gray.to_pnm_bytes()).unwrap();
        assert_eq!(gray, back);

        let rgb = RasterImage::new(4, 4, 3, (0..48).collect()).unwrap();
        let back = RasterImage::from_pnm_bytes(&rgb.to_pnm_bytes()).unwrap();
        assert_eq!(rgb, back);
    }

    #[test]
    fn pnm_header_comments_are_skipped() {
        let mut bytes = b"P5\n# a comment\n2 2\n255\n".to_vec();
        bytes.extend_from_slice(&[1, 2, 3, 4]);
        let img = RasterImage::from_pnm_bytes(&bytes).unwrap();
        assert_eq!((img.width, img.height), (2, 2));
        assert_eq!(img.pixels, vec![1, 2, 3, 4]);
    }

    #[test]
    fn bad_buffer_length_is_rejected() {
        assert!(RasterImage::new(4, 4, 3, vec![0; 10]).is_err());
        assert!(RasterImage::new(0, 4, 1, vec![]).is_err());
        assert!(RasterImage::new(4, 4, 2, vec![0; 32]).is_err());
    }
}
