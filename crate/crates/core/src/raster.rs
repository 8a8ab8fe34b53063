use alloc::vec;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Channels {
    Gray,
    Rgb,
}

impl Channels {
    pub fn count(self) -> usize {
        match self {
            Channels::Gray => 1,
            Channels::Rgb => 3,
        }
    }
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum RasterError {
    #[error("pixel buffer holds {got} values, expected {expected}")]
    BufferSize { expected: usize, got: usize },
    #[error("dpi must be positive, got {0}")]
    Dpi(f64),
}

/// Row-major raster with intensities in `[0, 1]`; 1.0 is white.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RasterImage {
    width: usize,
    height: usize,
    channels: Channels,
    dpi: f64,
    pixels: Vec<f32>,
}

impl RasterImage {
    pub fn new(
        width: usize,
        height: usize,
        channels: Channels,
        dpi: f64,
        pixels: Vec<f32>,
    ) -> Result<Self, RasterError> {
        let expected = width * height * channels.count();
        if pixels.len() != expected {
            return Err(RasterError::BufferSize {
                expected,
                got: pixels.len(),
            });
        }
        if !(dpi > 0.0) {
            return Err(RasterError::Dpi(dpi));
        }
        Ok(Self {
            width,
            height,
            channels,
            dpi,
            pixels,
        })
    }

    /// Grayscale canvas filled with one intensity.
    pub fn filled(width: usize, height: usize, dpi: f64, value: f32) -> Self {
        Self {
            width,
            height,
            channels: Channels::Gray,
            dpi,
            pixels: vec![value; width * height],
        }
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn channels(&self) -> Channels {
        self.channels
    }

    pub fn dpi(&self) -> f64 {
        self.dpi
    }

    pub fn pixels(&self) -> &[f32] {
        &self.pixels
    }

    pub fn pixels_mut(&mut self) -> &mut [f32] {
        &mut self.pixels
    }

    pub fn is_empty(&self) -> bool {
        self.width == 0 || self.height == 0
    }

    /// Gray intensity at `(x, y)`; RGB is reduced with Rec. 601 luma weights.
    #[inline]
    pub fn gray_at(&self, x: usize, y: usize) -> f32 {
        let idx = y * self.width + x;
        match self.channels {
            Channels::Gray => self.pixels[idx],
            Channels::Rgb => {
                let p = &self.pixels[idx * 3..idx * 3 + 3];
                0.299 * p[0] + 0.587 * p[1] + 0.114 * p[2]
            }
        }
    }

    pub fn to_gray(&self) -> RasterImage {
        match self.channels {
            Channels::Gray => self.clone(),
            Channels::Rgb => {
                let mut pixels = Vec::with_capacity(self.width * self.height);
                for y in 0..self.height {
                    for x in 0..self.width {
                        pixels.push(self.gray_at(x, y));
                    }
                }
                RasterImage {
                    width: self.width,
                    height: self.height,
                    channels: Channels::Gray,
                    dpi: self.dpi,
                    pixels,
                }
            }
        }
    }

    /// True when every gray value is identical.
    pub fn is_constant(&self) -> bool {
        if self.is_empty() {
            return true;
        }
        let first = self.gray_at(0, 0);
        (0..self.height).all(|y| (0..self.width).all(|x| self.gray_at(x, y) == first))
    }

    /// Grayscale sub-image `[x0, x0+w) × [y0, y0+h)`.
    pub fn crop_gray(&self, x0: usize, y0: usize, w: usize, h: usize) -> RasterImage {
        let mut pixels = Vec::with_capacity(w * h);
        for y in y0..y0 + h {
            for x in x0..x0 + w {
                pixels.push(self.gray_at(x, y));
            }
        }
        RasterImage {
            width: w,
            height: h,
            channels: Channels::Gray,
            dpi: self.dpi,
            pixels,
        }
    }
}
