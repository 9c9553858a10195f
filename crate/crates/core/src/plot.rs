//! Minimal grayscale chart rendering for histograms and curves.

use std::path::Path;

use image::{GrayImage, Luma};

use crate::error::{Error, Result};

const W: u32 = 480;
const H: u32 = 320;
const MARGIN: u32 = 30;

fn canvas() -> GrayImage {
    let mut img = GrayImage::from_pixel(W, H, Luma([255]));
    for x in MARGIN..W - MARGIN / 2 {
        img.put_pixel(x, H - MARGIN, Luma([0]));
    }
    for y in MARGIN / 2..=H - MARGIN {
        img.put_pixel(MARGIN, y, Luma([0]));
    }
    img
}

fn save(img: &GrayImage, path: &Path) -> Result<()> {
    if let Some(dir) = path.parent() {
        std::fs::create_dir_all(dir)?;
    }
    img.save(path).map_err(|e| Error::Io(std::io::Error::other(e.to_string())))
}

/// Vertical bars, one per value, scaled to the largest value. A marker column is drawn at `marker` (bar units).
pub fn bar_chart(values: &[f64], marker: Option<f64>, path: &Path) -> Result<()> {
    let mut img = canvas();
    let plot_w = (W - MARGIN - MARGIN / 2) as f64;
    let plot_h = (H - MARGIN - MARGIN / 2) as f64;
    let max = values.iter().cloned().fold(0.0, f64::max).max(f64::MIN_POSITIVE);
    let bw = plot_w / values.len().max(1) as f64;
    for (i, &v) in values.iter().enumerate() {
        let x0 = MARGIN as f64 + i as f64 * bw + 1.0;
        let x1 = (x0 + bw - 2.0).max(x0 + 1.0);
        let top = (H - MARGIN) as f64 - v / max * plot_h;
        for x in x0 as u32..x1 as u32 {
            for y in top.round() as u32..H - MARGIN {
                img.put_pixel(x, y, Luma([90]));
            }
        }
    }
    if let Some(m) = marker {
        let x = (MARGIN as f64 + m * bw).round() as u32;
        if x < W {
            for y in (MARGIN / 2..H - MARGIN).step_by(3) {
                img.put_pixel(x, y, Luma([0]));
            }
        }
    }
    save(&img, path)
}

/// Polyline through `(x, y)` points with both axes spanning `[0,1]`.
pub fn unit_curve(points: &[(f64, f64)], path: &Path) -> Result<()> {
    let mut img = canvas();
    let pw = (W - MARGIN - MARGIN / 2) as f64;
    let ph = (H - MARGIN - MARGIN / 2) as f64;
    let to_px = |(x, y): (f64, f64)| (MARGIN as f64 + x.clamp(0.0, 1.0) * pw, (H - MARGIN) as f64 - y.clamp(0.0, 1.0) * ph);
    for pair in points.windows(2) {
        let (a, b) = (to_px(pair[0]), to_px(pair[1]));
        let steps = ((b.0 - a.0).abs().max((b.1 - a.1).abs()).ceil() as usize).max(1);
        for s in 0..=steps {
            let f = s as f64 / steps as f64;
            let (x, y) = (a.0 + f * (b.0 - a.0), a.1 + f * (b.1 - a.1));
            img.put_pixel((x.round() as u32).min(W - 1), (y.round() as u32).min(H - 1), Luma([0]));
        }
    }
    save(&img, path)
}
