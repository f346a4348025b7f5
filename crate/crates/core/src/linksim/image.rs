//! 128×128 grayscale frames, binary PGM I/O, 8×8 tiling and PSNR.

use std::path::Path;

pub const IMAGE_SIZE: usize = 128;
pub const TILE_SIZE: usize = 8;
pub const TILES_PER_ROW: usize = IMAGE_SIZE / TILE_SIZE;
pub const TILE_COUNT: usize = TILES_PER_ROW * TILES_PER_ROW;
pub const TILE_BYTES: usize = TILE_SIZE * TILE_SIZE;
/// Reported PSNR when the compared regions are identical.
pub const PSNR_CAP_DB: f64 = 99.0;

#[derive(Debug, thiserror::Error)]
pub enum ImageError {
    #[error("not a binary PGM: {0}")]
    Format(String),
    #[error("image must be {IMAGE_SIZE}x{IMAGE_SIZE} with maxval 255, got {width}x{height} maxval {maxval}")]
    Dimensions { width: usize, height: usize, maxval: usize },
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

#[derive(Clone, PartialEq, Eq)]
pub struct GrayImage {
    pixels: Vec<u8>,
}

impl std::fmt::Debug for GrayImage {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "GrayImage({IMAGE_SIZE}x{IMAGE_SIZE})")
    }
}

impl GrayImage {
    pub fn filled(value: u8) -> Self {
        Self {
            pixels: vec![value; IMAGE_SIZE * IMAGE_SIZE],
        }
    }

    pub fn from_pixels(pixels: Vec<u8>) -> Option<Self> {
        (pixels.len() == IMAGE_SIZE * IMAGE_SIZE).then_some(Self { pixels })
    }

    pub fn pixels(&self) -> &[u8] {
        &self.pixels
    }

    pub fn get(&self, x: usize, y: usize) -> u8 {
        self.pixels[y * IMAGE_SIZE + x]
    }

    pub fn set(&mut self, x: usize, y: usize, v: u8) {
        self.pixels[y * IMAGE_SIZE + x] = v;
    }

    /// Built-in test card; `variant` changes the layout so that each stream
    /// shows a recognisably different picture.
    pub fn test_pattern(variant: usize) -> Self {
        let mut img = Self::filled(0);
        let n = IMAGE_SIZE as i64;
        let (cx, cy) = [(40, 40), (88, 40), (40, 88), (88, 88)][variant % 4];
        for y in 0..n {
            for x in 0..n {
                let gradient = match variant % 4 {
                    0 => x * 2,
                    1 => y * 2,
                    2 => x + y,
                    _ => 2 * n - 1 - x - y,
                };
                let checker = if ((x / 16) + (y / 16)) % 2 == 0 { 32 } else { 0 };
                let d2 = (x - cx) * (x - cx) + (y - cy) * (y - cy);
                let ring = if (300..700).contains(&d2) { 96 } else { 0 };
                let v = (gradient + checker + ring).clamp(0, 255);
                img.set(x as usize, y as usize, v as u8);
            }
        }
        img
    }

    pub fn tile(&self, index: usize) -> [u8; TILE_BYTES] {
        let (tx, ty) = (index % TILES_PER_ROW, index / TILES_PER_ROW);
        let mut out = [0u8; TILE_BYTES];
        for row in 0..TILE_SIZE {
            let start = (ty * TILE_SIZE + row) * IMAGE_SIZE + tx * TILE_SIZE;
            out[row * TILE_SIZE..(row + 1) * TILE_SIZE].copy_from_slice(&self.pixels[start..start + TILE_SIZE]);
        }
        out
    }

    pub fn set_tile(&mut self, index: usize, data: &[u8]) {
        assert_eq!(data.len(), TILE_BYTES);
        let (tx, ty) = (index % TILES_PER_ROW, index / TILES_PER_ROW);
        for row in 0..TILE_SIZE {
            let start = (ty * TILE_SIZE + row) * IMAGE_SIZE + tx * TILE_SIZE;
            self.pixels[start..start + TILE_SIZE].copy_from_slice(&data[row * TILE_SIZE..(row + 1) * TILE_SIZE]);
        }
    }

    /// Binary PGM (P5, 8-bit) with a minimal header.
    pub fn to_pgm(&self) -> Vec<u8> {
        let mut out = format!("P5\n{IMAGE_SIZE} {IMAGE_SIZE}\n255\n").into_bytes();
        out.extend_from_slice(&self.pixels);
        out
    }

    pub fn from_pgm(data: &[u8]) -> Result<Self, ImageError> {
        let mut pos = 0;
        let mut fields = Vec::with_capacity(4);
        while fields.len() < 4 {
            // Skip whitespace and comments.
            while pos < data.len() {
                if data[pos] == b'#' {
                    while pos < data.len() && data[pos] != b'\n' {
                        pos += 1;
                    }
                } else if data[pos].is_ascii_whitespace() {
                    pos += 1;
                } else {
                    break;
                }
            }
            let start = pos;
            while pos < data.len() && !data[pos].is_ascii_whitespace() && data[pos] != b'#' {
                pos += 1;
            }
            if start == pos {
                return Err(ImageError::Format("truncated header".into()));
            }
            fields.push(std::str::from_utf8(&data[start..pos]).map_err(|_| ImageError::Format("header is not ASCII".into()))?);
        }
        if fields[0] != "P5" {
            return Err(ImageError::Format(format!("magic `{}`", fields[0])));
        }
        let num = |s: &str| s.parse::<usize>().map_err(|_| ImageError::Format(format!("bad number `{s}`")));
        let (width, height, maxval) = (num(fields[1])?, num(fields[2])?, num(fields[3])?);
        if width != IMAGE_SIZE || height != IMAGE_SIZE || maxval != 255 {
            return Err(ImageError::Dimensions { width, height, maxval });
        }
        // Exactly one whitespace byte separates the header from the raster.
        pos += 1;
        let raster = data
            .get(pos..pos + IMAGE_SIZE * IMAGE_SIZE)
            .ok_or_else(|| ImageError::Format("raster shorter than 128x128".into()))?;
        Ok(Self {
            pixels: raster.to_vec(),
        })
    }

    pub fn read_pgm(path: &Path) -> Result<Self, ImageError> {
        Self::from_pgm(&std::fs::read(path)?)
    }
}

fn psnr_from_sse(sse: f64, count: usize) -> f64 {
    if sse == 0.0 {
        return PSNR_CAP_DB;
    }
    let mse = sse / count as f64;
    (10.0 * (255.0 * 255.0 / mse).log10()).min(PSNR_CAP_DB)
}

/// `10·log10(255²/MSE)` over the whole frame, capped at 99 dB.
pub fn psnr(reference: &GrayImage, reconstructed: &GrayImage) -> f64 {
    let sse: f64 = reference
        .pixels
        .iter()
        .zip(&reconstructed.pixels)
        .map(|(&a, &b)| {
            let d = a as f64 - b as f64;
            d * d
        })
        .sum();
    psnr_from_sse(sse, reference.pixels.len())
}

/// PSNR restricted to the tiles flagged in `region`; `None` when the region
/// is empty.
pub fn psnr_region(reference: &GrayImage, reconstructed: &GrayImage, region: &[bool]) -> Option<f64> {
    let tiles: Vec<usize> = region.iter().enumerate().filter(|(_, &r)| r).map(|(i, _)| i).collect();
    if tiles.is_empty() {
        return None;
    }
    let sse: f64 = tiles
        .iter()
        .flat_map(|&t| {
            let (a, b) = (reference.tile(t), reconstructed.tile(t));
            (0..TILE_BYTES).map(move |i| {
                let d = a[i] as f64 - b[i] as f64;
                d * d
            })
        })
        .sum();
    Some(psnr_from_sse(sse, tiles.len() * TILE_BYTES))
}
