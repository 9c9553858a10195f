//! Image tensors and conversions between pixel domains.
//!
//! Images are `C×H×W` `f32` arrays. Transforms work in `[0,1]`; models consume
//! and produce `[-1,1]`.

use ndarray::{Array3, Array4, Axis};

pub type Image = Array3<f32>;

pub fn to_model_range(img: &Image) -> Image {
    img.mapv(|v| 2.0 * v - 1.0)
}

pub fn to_unit_range(img: &Image) -> Image {
    img.mapv(|v| ((v + 1.0) * 0.5).clamp(0.0, 1.0))
}

/// Stacks equally sized images into an `N×C×H×W` batch.
pub fn stack(images: &[&Image]) -> Array4<f32> {
    let views: Vec<_> = images.iter().map(|i| i.view().insert_axis(Axis(0))).collect();
    ndarray::concatenate(Axis(0), &views).expect("stack: images must share a shape")
}

pub fn all_finite(img: &Image) -> bool {
    img.iter().all(|v| v.is_finite())
}

/// Mean squared difference between two equally shaped images.
pub fn mse(a: &Image, b: &Image) -> f64 {
    assert_eq!(a.dim(), b.dim(), "mse: shape mismatch");
    let sum: f64 = a.iter().zip(b.iter()).map(|(&x, &y)| ((x - y) as f64).powi(2)).sum();
    sum / a.len() as f64
}

/// Quantises a `[0,1]` channel plane to 8 bits.
pub fn quantize(v: f32) -> u8 {
    (v.clamp(0.0, 1.0) * 255.0).round() as u8
}
