//! PNG encoding and decoding for [`RasterImage`].

use std::io::Cursor;

use image::{DynamicImage, GrayImage, ImageFormat, RgbImage};
use tikzgym_core::raster::{Channels, RasterImage};

use crate::error::{Error, Result};

/// Decodes a PNG, flattening any alpha channel onto white.
pub fn decode_png(bytes: &[u8], dpi: f64) -> Result<RasterImage> {
    let img = image::load_from_memory_with_format(bytes, ImageFormat::Png)
        .map_err(|e| Error::RenderFailed(format!("undecodable PNG: {e}")))?;
    let rgba = img.to_rgba32f();
    let (w, h) = (rgba.width() as usize, rgba.height() as usize);
    let gray_source = matches!(img, DynamicImage::ImageLuma8(_) | DynamicImage::ImageLumaA8(_) | DynamicImage::ImageLuma16(_) | DynamicImage::ImageLumaA16(_));
    let channels = if gray_source { Channels::Gray } else { Channels::Rgb };
    let mut px = Vec::with_capacity(w * h * channels.count());
    for p in rgba.pixels() {
        let [r, g, b, a] = p.0;
        let flat = |c: f32| (c * a + (1.0 - a)).clamp(0.0, 1.0);
        match channels {
            Channels::Gray => px.push(flat(r)),
            Channels::Rgb => px.extend([flat(r), flat(g), flat(b)]),
        }
    }
    RasterImage::new(w, h, channels, dpi, px).map_err(|e| Error::RenderFailed(e.to_string()))
}

pub fn encode_png(img: &RasterImage) -> Vec<u8> {
    let q = |v: f32| (v.clamp(0.0, 1.0) * 255.0).round() as u8;
    let (w, h) = (img.width() as u32, img.height() as u32);
    let dynimg = match img.channels() {
        Channels::Gray => DynamicImage::ImageLuma8(
            GrayImage::from_raw(w, h, img.pixels().iter().map(|v| q(*v)).collect()).expect("buffer size"),
        ),
        Channels::Rgb => DynamicImage::ImageRgb8(
            RgbImage::from_raw(w, h, img.pixels().iter().map(|v| q(*v)).collect()).expect("buffer size"),
        ),
    };
    let mut out = Vec::new();
    dynimg
        .write_to(&mut Cursor::new(&mut out), ImageFormat::Png)
        .expect("in-memory PNG encoding");
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn gray_round_trip_is_exact_on_8bit_levels() {
        let px: Vec<f32> = (0..12).map(|i| (i * 20) as f32 / 255.0).collect();
        let img = RasterImage::new(4, 3, Channels::Gray, 300.0, px).unwrap();
        let back = decode_png(&encode_png(&img), 300.0).unwrap();
        assert_eq!(back.channels(), Channels::Gray);
        for (a, b) in img.pixels().iter().zip(back.pixels()) {
            assert!((a - b).abs() < 1e-6);
        }
    }

    #[test]
    fn alpha_is_flattened_onto_white() {
        let mut buf = image::RgbaImage::new(1, 1);
        buf.put_pixel(0, 0, image::Rgba([0, 0, 0, 0]));
        let mut bytes = Vec::new();
        DynamicImage::ImageRgba8(buf)
            .write_to(&mut Cursor::new(&mut bytes), ImageFormat::Png)
            .unwrap();
        let img = decode_png(&bytes, 72.0).unwrap();
        assert!(img.pixels().iter().all(|v| *v == 1.0));
    }

    #[test]
    fn garbage_is_render_failed() {
        assert!(matches!(decode_png(b"nope", 72.0), Err(Error::RenderFailed(_))));
    }
}
