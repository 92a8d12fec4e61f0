//! Floating-point RGB images and PNG emission.

use std::io::Cursor;
use std::path::Path;

use crate::color::to_u8;

#[derive(Debug, thiserror::Error)]
pub enum ImageError {
    #[error("pixel buffer has {got} entries, expected {width}x{height}")]
    Size { width: usize, height: usize, got: usize },
    #[error("png encoding failed: {0}")]
    Encode(#[from] image::ImageError),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// Row-major RGB image with channels in `[0, 1]`.
#[derive(Debug, Clone, PartialEq)]
pub struct ImageRgb {
    width: usize,
    height: usize,
    pixels: Vec<[f64; 3]>,
}

impl ImageRgb {
    pub fn new(width: usize, height: usize, pixels: Vec<[f64; 3]>) -> Result<Self, ImageError> {
        if pixels.len() != width * height {
            return Err(ImageError::Size { width, height, got: pixels.len() });
        }
        let pixels = pixels
            .into_iter()
            .map(|p| p.map(|c| if c.is_nan() { 0.0 } else { c.clamp(0.0, 1.0) }))
            .collect();
        Ok(ImageRgb { width, height, pixels })
    }

    pub fn filled(width: usize, height: usize, color: [f64; 3]) -> Self {
        ImageRgb::new(width, height, vec![color; width * height]).expect("size matches")
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn pixels(&self) -> &[[f64; 3]] {
        &self.pixels
    }

    pub fn get(&self, x: usize, y: usize) -> [f64; 3] {
        self.pixels[y * self.width + x]
    }

    pub fn set(&mut self, x: usize, y: usize, color: [f64; 3]) {
        self.pixels[y * self.width + x] = color.map(|c| c.clamp(0.0, 1.0));
    }

    /// Copies `other` into this image with its top-left corner at `(x0, y0)`.
    pub fn blit(&mut self, other: &ImageRgb, x0: usize, y0: usize) {
        for y in 0..other.height {
            let dst = (y0 + y) * self.width + x0;
            self.pixels[dst..dst + other.width]
                .copy_from_slice(&other.pixels[y * other.width..(y + 1) * other.width]);
        }
    }

    /// 8-bit quantized bytes, `round(255 c)` per channel.
    pub fn to_rgb8(&self) -> Vec<u8> {
        self.pixels.iter().flat_map(|p| p.map(to_u8)).collect()
    }

    /// Mean of the per-channel pixel variances, used by the variance-greedy selector.
    pub fn channel_variance(&self) -> f64 {
        let n = self.pixels.len() as f64;
        let mut total = 0.0;
        for c in 0..3 {
            let mean = self.pixels.iter().map(|p| p[c]).sum::<f64>() / n;
            total += self.pixels.iter().map(|p| (p[c] - mean).powi(2)).sum::<f64>() / n;
        }
        total / 3.0
    }

    pub fn encode_png(&self) -> Result<Vec<u8>, ImageError> {
        let buffer = image::RgbImage::from_raw(self.width as u32, self.height as u32, self.to_rgb8())
            .expect("buffer size matches dimensions");
        let mut out = Cursor::new(Vec::new());
        buffer.write_to(&mut out, image::ImageFormat::Png)?;
        Ok(out.into_inner())
    }

    pub fn save_png(&self, path: impl AsRef<Path>) -> Result<(), ImageError> {
        std::fs::write(path, self.encode_png()?)?;
        Ok(())
    }
}
