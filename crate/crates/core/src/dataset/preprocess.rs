use std::path::Path;

use ndarray::s;

use crate::error::{Error, Result};
use crate::pixels::Image;

/// Decodes an image file to `[0,1]` with the requested channel count (1 or 3).
pub fn load_image(path: &Path, channels: usize) -> Result<Image> {
    let ingest = |reason: String| Error::Ingest { path: path.to_path_buf(), reason };
    let img = image::open(path).map_err(|e| ingest(e.to_string()))?;
    let (w, h) = (img.width() as usize, img.height() as usize);
    if w == 0 || h == 0 {
        return Err(ingest("empty image".into()));
    }
    match channels {
        1 => {
            let g = img.to_luma8();
            Ok(Image::from_shape_fn((1, h, w), |(_, y, x)| g.get_pixel(x as u32, y as u32)[0] as f32 / 255.0))
        }
        3 => {
            let rgb = img.to_rgb8();
            Ok(Image::from_shape_fn((3, h, w), |(c, y, x)| rgb.get_pixel(x as u32, y as u32)[c] as f32 / 255.0))
        }
        other => Err(ingest(format!("unsupported channel count {other}"))),
    }
}

/// Writes a `[0,1]` image as 8-bit PNG (grayscale for one channel).
pub fn save_png(img: &Image, path: &Path) -> Result<()> {
    use crate::pixels::quantize;
    let (c, h, w) = img.dim();
    let err = |e: image::ImageError| Error::Io(std::io::Error::other(e));
    match c {
        1 => {
            let buf = image::GrayImage::from_fn(w as u32, h as u32, |x, y| {
                image::Luma([quantize(img[[0, y as usize, x as usize]])])
            });
            buf.save_with_format(path, image::ImageFormat::Png).map_err(err)
        }
        3 => {
            let buf = image::RgbImage::from_fn(w as u32, h as u32, |x, y| {
                image::Rgb([0, 1, 2].map(|ci| quantize(img[[ci, y as usize, x as usize]])))
            });
            buf.save_with_format(path, image::ImageFormat::Png).map_err(err)
        }
        other => Err(Error::Contract(format!("cannot encode {other}-channel image"))),
    }
}

/// Centre-crops to the largest square, resizes bilinearly to `size×size`, and
/// maps `[0,1]` to `[-1,1]`.
pub fn preprocess(raw: &Image, size: usize) -> Result<Image> {
    let (_, h, w) = raw.dim();
    if h == 0 || w == 0 || size == 0 {
        return Err(Error::Contract("preprocess: empty image".into()));
    }
    if raw.iter().any(|v| !v.is_finite()) {
        return Err(Error::Contract("preprocess: non-finite pixels".into()));
    }
    let side = h.min(w);
    let (y0, x0) = ((h - side) / 2, (w - side) / 2);
    let crop = raw.slice(s![.., y0..y0 + side, x0..x0 + side]).to_owned();
    let resized = if side == size { crop } else { resize_bilinear(&crop, size, size) };
    Ok(resized.mapv(|v| 2.0 * v - 1.0))
}

/// Half-pixel-centred bilinear resampling.
pub fn resize_bilinear(img: &Image, out_h: usize, out_w: usize) -> Image {
    let (c, h, w) = img.dim();
    let sy = h as f64 / out_h as f64;
    let sx = w as f64 / out_w as f64;
    let coord = |o: usize, scale: f64, n: usize| {
        let src = ((o as f64 + 0.5) * scale - 0.5).clamp(0.0, (n - 1) as f64);
        let i0 = src.floor() as usize;
        (i0, (i0 + 1).min(n - 1), (src - i0 as f64) as f32)
    };
    Image::from_shape_fn((c, out_h, out_w), |(ci, y, x)| {
        let (y0, y1, fy) = coord(y, sy, h);
        let (x0, x1, fx) = coord(x, sx, w);
        let top = img[[ci, y0, x0]] * (1.0 - fx) + img[[ci, y0, x1]] * fx;
        let bot = img[[ci, y1, x0]] * (1.0 - fx) + img[[ci, y1, x1]] * fx;
        top * (1.0 - fy) + bot * fy
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rectangular_input_becomes_square_in_range() {
        let raw = Image::from_shape_fn((1, 300, 400), |(_, y, x)| ((x * 13 + y * 7) % 256) as f32 / 255.0);
        let out = preprocess(&raw, 224).unwrap();
        assert_eq!(out.dim(), (1, 224, 224));
        assert!(out.iter().all(|&v| (-1.0..=1.0).contains(&v)));
    }

    #[test]
    fn constant_half_maps_to_zero() {
        for (h, w) in [(10, 37), (224, 224), (500, 300)] {
            let out = preprocess(&Image::from_elem((1, h, w), 0.5), 224).unwrap();
            assert!(out.iter().all(|&v| v == 0.0));
        }
    }

    #[test]
    fn square_input_bypasses_resize() {
        let raw = Image::from_shape_fn((1, 224, 224), |(_, y, x)| ((x * 31 + y * 17) % 256) as f32 / 255.0);
        let out = preprocess(&raw, 224).unwrap();
        let expected = raw.mapv(|v| 2.0 * v - 1.0);
        assert_eq!(out, expected);
    }

    #[test]
    fn rejects_empty() {
        assert!(preprocess(&Image::zeros((1, 0, 5)), 224).is_err());
    }

    #[test]
    fn png_round_trip_preserves_quantised_values() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("x.png");
        let img = Image::from_shape_fn((1, 5, 7), |(_, y, x)| (y * 7 + x) as f32 / 255.0);
        save_png(&img, &p).unwrap();
        let back = load_image(&p, 1).unwrap();
        assert_eq!(back, img);
    }
}
