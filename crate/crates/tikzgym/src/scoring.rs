//! Image-pair metrics shared by the reward command, the rollout loop and the
//! evaluator.

use serde::{Deserialize, Serialize};
use tikzgym_core::imgmetrics::{cosine, cosine_to_unit, ssim, trim_and_align, MetricError, VisualScores};
use tikzgym_core::raster::RasterImage;

use crate::backends::Backends;
use crate::config::MetricsConfig;
use crate::error::Result;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct VisualMetrics {
    /// Cosine mapped onto `[0, 1]`.
    pub cosine: f64,
    #[serde(flatten)]
    pub scores: VisualScores,
}

/// Trims and aligns the pair, then computes embedding cosine, SSIM and
/// perceptual distance. `tau_hold` and `tau_temp` feed the reward terms.
///
/// Fails with [`MetricError::EmptyContent`] when either image is blank.
pub fn visual_metrics(
    pred: &RasterImage,
    reference: &RasterImage,
    backends: &Backends,
    metrics: &MetricsConfig,
    tau_hold: f64,
    tau_temp: f64,
) -> Result<VisualMetrics> {
    let mut pair = trim_and_align(pred, reference, metrics.background_threshold)?;
    pair.border_pt = metrics.border_pt;
    let s_raw = cosine(&backends.embed(&pair.a)?, &backends.embed(&pair.b)?)?;
    let d = backends.perceptual(&pair)?;
    let scores = VisualScores::from_raw(s_raw, d, ssim(&pair), tau_hold, tau_temp)?;
    Ok(VisualMetrics { cosine: cosine_to_unit(s_raw), scores })
}

/// The image cropped to its content box, for template lookup.
pub fn content_crop(img: &RasterImage, threshold: f32) -> Result<RasterImage, MetricError> {
    Ok(trim_and_align(img, img, threshold)?.a)
}
