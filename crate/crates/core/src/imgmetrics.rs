//! Image-side scores: Trim-and-Align, SSIM, cosine similarity and the two
//! reward shapers (hinge on the semantic cosine, exponential kernel on the
//! perceptual distance). Also the deterministic fallbacks used when no
//! neural backend is configured.

use alloc::vec;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use crate::raster::{Channels, RasterImage};

pub const DEFAULT_BACKGROUND_THRESHOLD: f32 = 0.99;
pub const DEFAULT_BORDER_PT: f64 = 10.0;
pub const SSIM_WINDOW: usize = 11;
pub const SSIM_SIGMA: f64 = 1.5;
pub const SSIM_K1: f64 = 0.01;
pub const SSIM_K2: f64 = 0.03;
pub const FALLBACK_GRID: usize = 16;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum MetricError {
    #[error("image {0} has no content below the background threshold")]
    EmptyContent(char),
    #[error("image {0} has zero area")]
    EmptyImage(char),
    #[error("embedding is the zero vector")]
    ZeroVector,
    #[error("embedding lengths differ ({0} vs {1})")]
    LengthMismatch(usize, usize),
    #[error("hinge threshold must lie in [0, 1), got {0}")]
    InvalidThreshold(f64),
}

/// Two grayscale renders on a common canvas.
#[derive(Debug, Clone, PartialEq)]
pub struct AlignedPair {
    pub a: RasterImage,
    pub b: RasterImage,
    /// Border (points) the renders were produced with; informational.
    pub border_pt: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct VisualScores {
    pub s_raw: f64,
    pub s_sem: f64,
    pub s_struct: f64,
    pub ssim: f64,
    pub d_perceptual: f64,
}

impl VisualScores {
    /// Derives `s_sem` and `s_struct` from the raw cosine and distance.
    pub fn from_raw(
        s_raw: f64,
        d_perceptual: f64,
        ssim: f64,
        tau_hold: f64,
        tau_temp: f64,
    ) -> Result<Self, MetricError> {
        Ok(Self {
            s_raw,
            s_sem: hinge_semantic(s_raw, tau_hold)?,
            s_struct: struct_from_distance(d_perceptual, tau_temp),
            ssim,
            d_perceptual,
        })
    }
}

fn content_box(img: &RasterImage, threshold: f32) -> Option<(usize, usize, usize, usize)> {
    let (mut x0, mut y0, mut x1, mut y1) = (usize::MAX, usize::MAX, 0, 0);
    for y in 0..img.height() {
        for x in 0..img.width() {
            if img.gray_at(x, y) < threshold {
                x0 = x0.min(x);
                y0 = y0.min(y);
                x1 = x1.max(x);
                y1 = y1.max(y);
            }
        }
    }
    (x0 != usize::MAX).then(|| (x0, y0, x1 - x0 + 1, y1 - y0 + 1))
}

fn pad_center(img: &RasterImage, width: usize, height: usize) -> RasterImage {
    let mut out = RasterImage::filled(width, height, img.dpi(), 1.0);
    let ox = (width - img.width()) / 2;
    let oy = (height - img.height()) / 2;
    let src = img.pixels();
    let dst = out.pixels_mut();
    for y in 0..img.height() {
        let row = &src[y * img.width()..(y + 1) * img.width()];
        dst[(y + oy) * width + ox..(y + oy) * width + ox + img.width()].copy_from_slice(row);
    }
    out
}

/// Crops each image to its content bounding box, then centre-pads both with
/// white to the element-wise maximum size.
pub fn trim_and_align(
    a: &RasterImage,
    b: &RasterImage,
    background_threshold: f32,
) -> Result<AlignedPair, MetricError> {
    if a.is_empty() {
        return Err(MetricError::EmptyImage('a'));
    }
    if b.is_empty() {
        return Err(MetricError::EmptyImage('b'));
    }
    let (ax, ay, aw, ah) = content_box(a, background_threshold).ok_or(MetricError::EmptyContent('a'))?;
    let (bx, by, bw, bh) = content_box(b, background_threshold).ok_or(MetricError::EmptyContent('b'))?;
    let width = aw.max(bw);
    let height = ah.max(bh);
    Ok(AlignedPair {
        a: pad_center(&a.crop_gray(ax, ay, aw, ah), width, height),
        b: pad_center(&b.crop_gray(bx, by, bw, bh), width, height),
        border_pt: DEFAULT_BORDER_PT,
    })
}

/// Normalized 1-D Gaussian taps; the 2-D window is their outer product.
pub fn gaussian_kernel(size: usize, sigma: f64) -> Vec<f64> {
    let center = (size as f64 - 1.0) / 2.0;
    let mut taps: Vec<f64> = (0..size)
        .map(|i| {
            let d = i as f64 - center;
            libm::exp(-(d * d) / (2.0 * sigma * sigma))
        })
        .collect();
    let sum: f64 = taps.iter().sum();
    taps.iter_mut().for_each(|t| *t /= sum);
    taps
}

/// Window side used for an image of the given size: 11, or the largest odd
/// size that still fits.
pub fn ssim_window_for(width: usize, height: usize) -> usize {
    let fit = SSIM_WINDOW.min(width).min(height);
    if fit % 2 == 0 {
        fit - 1
    } else {
        fit
    }
}

fn filter_valid(data: &[f64], width: usize, height: usize, taps: &[f64]) -> Vec<f64> {
    let k = taps.len();
    let ow = width - k + 1;
    let oh = height - k + 1;
    let mut horizontal = vec![0.0; ow * height];
    for y in 0..height {
        let row = &data[y * width..(y + 1) * width];
        for x in 0..ow {
            horizontal[y * ow + x] = taps.iter().zip(&row[x..x + k]).map(|(t, v)| t * v).sum();
        }
    }
    // Row-wise accumulation keeps the per-pixel summation order of a direct
    // vertical dot product while staying cache friendly.
    let mut out = vec![0.0; ow * oh];
    for (y, dst) in out.chunks_exact_mut(ow).enumerate() {
        for (j, t) in taps.iter().enumerate() {
            let src = &horizontal[(y + j) * ow..(y + j + 1) * ow];
            for (d, s) in dst.iter_mut().zip(src) {
                *d += t * s;
            }
        }
    }
    out
}

/// Mean SSIM over Gaussian windows (11×11, σ = 1.5, L = 1) at every valid
/// position of an aligned grayscale pair.
pub fn ssim(pair: &AlignedPair) -> f64 {
    let (w, h) = (pair.a.width(), pair.a.height());
    debug_assert_eq!((w, h), (pair.b.width(), pair.b.height()));
    let x: Vec<f64> = pair.a.to_gray().pixels().iter().map(|&v| f64::from(v)).collect();
    let y: Vec<f64> = pair.b.to_gray().pixels().iter().map(|&v| f64::from(v)).collect();
    let xx: Vec<f64> = x.iter().map(|v| v * v).collect();
    let yy: Vec<f64> = y.iter().map(|v| v * v).collect();
    let xy: Vec<f64> = x.iter().zip(&y).map(|(a, b)| a * b).collect();

    let taps = gaussian_kernel(ssim_window_for(w, h), SSIM_SIGMA);
    let mu_x = filter_valid(&x, w, h, &taps);
    let mu_y = filter_valid(&y, w, h, &taps);
    let e_xx = filter_valid(&xx, w, h, &taps);
    let e_yy = filter_valid(&yy, w, h, &taps);
    let e_xy = filter_valid(&xy, w, h, &taps);

    let c1 = SSIM_K1 * SSIM_K1;
    let c2 = SSIM_K2 * SSIM_K2;
    let n = mu_x.len();
    let total: f64 = (0..n)
        .map(|i| {
            let (mx, my) = (mu_x[i], mu_y[i]);
            let var_x = e_xx[i] - mx * mx;
            let var_y = e_yy[i] - my * my;
            let cov = e_xy[i] - mx * my;
            ((2.0 * mx * my + c1) * (2.0 * cov + c2))
                / ((mx * mx + my * my + c1) * (var_x + var_y + c2))
        })
        .sum();
    total / n as f64
}

/// Cosine similarity in `[-1, 1]`.
pub fn cosine(u: &[f64], v: &[f64]) -> Result<f64, MetricError> {
    if u.len() != v.len() {
        return Err(MetricError::LengthMismatch(u.len(), v.len()));
    }
    let dot: f64 = u.iter().zip(v).map(|(a, b)| a * b).sum();
    let nu: f64 = u.iter().map(|a| a * a).sum();
    let nv: f64 = v.iter().map(|b| b * b).sum();
    if nu == 0.0 || nv == 0.0 {
        return Err(MetricError::ZeroVector);
    }
    Ok((dot / libm::sqrt(nu * nv)).clamp(-1.0, 1.0))
}

/// Maps a cosine onto `[0, 1]` for reporting.
pub fn cosine_to_unit(s_raw: f64) -> f64 {
    (s_raw + 1.0) / 2.0
}

/// `max(0, s_raw − τ) / (1 − τ)`; zero on `[-1, τ]`.
pub fn hinge_semantic(s_raw: f64, tau_hold: f64) -> Result<f64, MetricError> {
    if !(0.0..1.0).contains(&tau_hold) {
        return Err(MetricError::InvalidThreshold(tau_hold));
    }
    Ok((s_raw - tau_hold).max(0.0) / (1.0 - tau_hold))
}

/// `exp(−d / τ)`.
pub fn struct_from_distance(d: f64, tau_temp: f64) -> f64 {
    libm::exp(-d / tau_temp)
}

/// Hermetic stand-in for a neural image encoder: the image box-averaged onto
/// a 16×16 grayscale grid, mean-centred and flattened.
pub fn fallback_embedding(img: &RasterImage) -> Vec<f64> {
    let n = FALLBACK_GRID;
    let (w, h) = (img.width(), img.height());
    let span = |i: usize, len: usize| {
        let start = i * len / n;
        let end = ((i + 1) * len / n).max(start + 1).min(len);
        (start.min(len - 1), end)
    };
    let mut cells = Vec::with_capacity(n * n);
    for gy in 0..n {
        let (y0, y1) = span(gy, h);
        for gx in 0..n {
            let (x0, x1) = span(gx, w);
            let mut sum = 0.0f64;
            for y in y0..y1 {
                for x in x0..x1 {
                    sum += img.gray_at(x, y) as f64;
                }
            }
            cells.push(sum / ((y1 - y0) * (x1 - x0)) as f64);
        }
    }
    let mean = cells.iter().sum::<f64>() / cells.len() as f64;
    cells.iter_mut().for_each(|c| *c -= mean);
    cells
}

/// Mean absolute pixel difference of an aligned pair, in `[0, 1]`.
pub fn mean_abs_diff(pair: &AlignedPair) -> f64 {
    let a = pair.a.pixels();
    let b = pair.b.pixels();
    if a.is_empty() {
        return 0.0;
    }
    debug_assert_eq!(pair.a.channels(), Channels::Gray);
    a.iter()
        .zip(b)
        .map(|(x, y)| (*x as f64 - *y as f64).abs())
        .sum::<f64>()
        / a.len() as f64
}
