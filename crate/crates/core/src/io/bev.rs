//! Top-down raster plots of a record and its predictions.

use std::path::Path;

use image::{ImageEncoder, Rgb, RgbImage};
use nalgebra::Vector3;

use super::binary::atomic_write;
use crate::error::{Error, Result};
use crate::geom::Trajectory;
use crate::scene::DatasetRecord;

pub const PAST_COLOR: [u8; 3] = [40, 90, 230];
pub const TRUTH_COLOR: [u8; 3] = [30, 180, 60];
const BACKGROUND: [u8; 3] = [255, 255, 255];
const MARGIN_PX: f64 = 16.0;

/// Orthographic mapping from ego-frame XY to pixels; +X points up, +Y points left.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Viewport {
    pub size_px: u32,
    pub center: (f64, f64),
    pub px_per_m: f64,
}

impl Viewport {
    /// Smallest square view holding every trajectory point inside a fixed margin.
    pub fn fit(trajs: &[&Trajectory], size_px: u32) -> Self {
        let (mut lo, mut hi) = ((f64::INFINITY, f64::INFINITY), (f64::NEG_INFINITY, f64::NEG_INFINITY));
        for p in trajs.iter().flat_map(|t| t.poses.iter()) {
            lo = (lo.0.min(p.position.x), lo.1.min(p.position.y));
            hi = (hi.0.max(p.position.x), hi.1.max(p.position.y));
        }
        if !lo.0.is_finite() {
            return Self { size_px, center: (0.0, 0.0), px_per_m: 20.0 };
        }
        let span = (hi.0 - lo.0).max(hi.1 - lo.1).max(1.0);
        Self {
            size_px,
            center: ((lo.0 + hi.0) / 2.0, (lo.1 + hi.1) / 2.0),
            px_per_m: (size_px as f64 - 2.0 * MARGIN_PX) / span,
        }
    }

    /// Pixel `(col, row)`; may fall outside the image.
    pub fn to_pixel(&self, p: &Vector3<f64>) -> (f64, f64) {
        let half = self.size_px as f64 / 2.0;
        (half - (p.y - self.center.1) * self.px_per_m, half - (p.x - self.center.0) * self.px_per_m)
    }

    pub fn contains(&self, px: (f64, f64)) -> bool {
        let s = self.size_px as f64;
        (0.0..s).contains(&px.0) && (0.0..s).contains(&px.1)
    }
}

fn put(img: &mut RgbImage, px: (f64, f64), color: [u8; 3]) {
    let (c, r) = (px.0.floor(), px.1.floor());
    if c >= 0.0 && r >= 0.0 && (c as u32) < img.width() && (r as u32) < img.height() {
        img.put_pixel(c as u32, r as u32, Rgb(color));
    }
}

fn polyline(img: &mut RgbImage, view: &Viewport, t: &Trajectory, color: [u8; 3]) {
    for w in t.poses.windows(2) {
        let (a, b) = (view.to_pixel(&w[0].position), view.to_pixel(&w[1].position));
        let n = ((b.0 - a.0).abs().max((b.1 - a.1).abs()).ceil() as usize).max(1);
        for i in 0..=n {
            let s = i as f64 / n as f64;
            put(img, (a.0 + s * (b.0 - a.0), a.1 + s * (b.1 - a.1)), color);
        }
    }
    if let [only] = t.poses.as_slice() {
        put(img, view.to_pixel(&only.position), color);
    }
}

/// Red shade of sample `i` out of `n`, darkest first.
pub fn sample_color(i: usize, n: usize) -> [u8; 3] {
    let s = if n > 1 { i as f64 / (n - 1) as f64 } else { 0.0 };
    [(150.0 + 105.0 * s) as u8, (40.0 + 110.0 * s) as u8, (40.0 + 110.0 * s) as u8]
}

/// Visual-memory cloud in semantic colors, then past, ground truth and samples.
pub fn render_bev(record: &DatasetRecord, samples: &[Trajectory], size_px: u32) -> RgbImage {
    let mut all: Vec<&Trajectory> = vec![&record.past, &record.future];
    all.extend(samples);
    let view = Viewport::fit(&all, size_px);
    let mut img = RgbImage::from_pixel(size_px, size_px, Rgb(BACKGROUND));
    for p in record.vm.to_cloud().points {
        put(&mut img, view.to_pixel(&p.position), p.semantic.palette());
    }
    for (i, s) in samples.iter().enumerate() {
        polyline(&mut img, &view, s, sample_color(i, samples.len()));
    }
    polyline(&mut img, &view, &record.past, PAST_COLOR);
    polyline(&mut img, &view, &record.future, TRUTH_COLOR);
    img
}

pub fn encode_png(img: &RgbImage) -> Result<Vec<u8>> {
    let mut buf = Vec::new();
    image::codecs::png::PngEncoder::new(&mut buf)
        .write_image(img.as_raw(), img.width(), img.height(), image::ExtendedColorType::Rgb8)
        .map_err(|e| Error::Format(format!("PNG encoding failed: {e}")))?;
    Ok(buf)
}

pub fn write_png(path: &Path, img: &RgbImage) -> Result<()> {
    atomic_write(path, &encode_png(img)?)
}
