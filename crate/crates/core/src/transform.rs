//! The bounded, discretised space of geometric and photometric transforms
//! used to condition the generator, and the reference implementation that
//! produces the transformed image `t·x`.

use std::fmt;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{config, contract, Result};
use crate::pixels::{all_finite, Image};

/// Number of transform parameters.
pub const NUM_PARAMS: usize = 10;

/// Side length of the frame in which translations are expressed, in pixels.
/// Images of another size have their translations scaled proportionally.
pub const REFERENCE_SIZE: f64 = 224.0;

const GRID_TOL: f64 = 1e-9;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TransformKind {
    TranslateX,
    TranslateY,
    ShearX,
    ShearY,
    Rotation,
    Solarize,
    Scale,
    Sharpness,
    Brightness,
    Contrast,
}

impl TransformKind {
    /// Wire order of the parameter vector.
    pub const CANONICAL: [TransformKind; NUM_PARAMS] = [
        TransformKind::TranslateX,
        TransformKind::TranslateY,
        TransformKind::ShearX,
        TransformKind::ShearY,
        TransformKind::Rotation,
        TransformKind::Solarize,
        TransformKind::Scale,
        TransformKind::Sharpness,
        TransformKind::Brightness,
        TransformKind::Contrast,
    ];

    /// The parameter value that leaves an image unchanged.
    pub fn identity(self) -> f64 {
        match self {
            Self::TranslateX | Self::TranslateY | Self::ShearX | Self::ShearY | Self::Rotation => 0.0,
            Self::Solarize | Self::Scale | Self::Sharpness | Self::Brightness | Self::Contrast => 1.0,
        }
    }

    pub fn index(self) -> usize {
        Self::CANONICAL.iter().position(|&k| k == self).expect("canonical")
    }

    pub fn name(self) -> &'static str {
        match self {
            Self::TranslateX => "translate_x",
            Self::TranslateY => "translate_y",
            Self::ShearX => "shear_x",
            Self::ShearY => "shear_y",
            Self::Rotation => "rotation",
            Self::Solarize => "solarize",
            Self::Scale => "scale",
            Self::Sharpness => "sharpness",
            Self::Brightness => "brightness",
            Self::Contrast => "contrast",
        }
    }
}

impl fmt::Display for TransformKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// Range and step of one transform parameter.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct TransformSpec {
    pub name: TransformKind,
    pub lo: f64,
    pub hi: f64,
    pub step: f64,
}

impl TransformSpec {
    pub const fn new(name: TransformKind, lo: f64, hi: f64, step: f64) -> Self {
        Self { name, lo, hi, step }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.lo < self.hi) || !(self.step > 0.0) {
            return Err(contract(format!("{}: need lo < hi and step > 0", self.name)));
        }
        let steps = (self.hi - self.lo) / self.step;
        if (steps - steps.round()).abs() > GRID_TOL * steps.max(1.0) {
            return Err(contract(format!("{}: range is not a multiple of the step", self.name)));
        }
        let id = self.name.identity();
        if id < self.lo - GRID_TOL || id > self.hi + GRID_TOL {
            return Err(contract(format!("{}: identity value {id} outside [{}, {}]", self.name, self.lo, self.hi)));
        }
        Ok(())
    }

    /// Number of grid points `{lo, lo+step, …, hi}`.
    pub fn grid_len(&self) -> usize {
        ((self.hi - self.lo) / self.step).round() as usize + 1
    }

    pub fn grid_value(&self, i: usize) -> f64 {
        snap(self.lo + i as f64 * self.step)
    }

    fn check(&self, v: f64) -> Result<()> {
        if !v.is_finite() || v < self.lo - GRID_TOL || v > self.hi + GRID_TOL {
            return Err(contract(format!("{} = {v} outside [{}, {}]", self.name, self.lo, self.hi)));
        }
        let k = (v - self.lo) / self.step;
        if (k - k.round()).abs() > GRID_TOL * k.abs().max(1.0) {
            return Err(contract(format!("{} = {v} is off the step-{} grid", self.name, self.step)));
        }
        Ok(())
    }
}

/// Removes representation noise from grid arithmetic (`0.7 + 2·0.1`).
fn snap(v: f64) -> f64 {
    (v * 1e9).round() / 1e9
}

/// The ten raw parameter values in canonical order.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct TransformVector(pub [f64; NUM_PARAMS]);

impl TransformVector {
    pub fn identity() -> Self {
        Self(TransformKind::CANONICAL.map(TransformKind::identity))
    }

    pub fn get(&self, kind: TransformKind) -> f64 {
        self.0[kind.index()]
    }

    pub fn with(mut self, kind: TransformKind, v: f64) -> Self {
        self.0[kind.index()] = v;
        self
    }

    pub fn values(&self) -> &[f64; NUM_PARAMS] {
        &self.0
    }
}

/// A validated list of ten specs in canonical order.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<TransformSpec>", into = "Vec<TransformSpec>")]
pub struct TransformSpace {
    specs: Vec<TransformSpec>,
}

impl TryFrom<Vec<TransformSpec>> for TransformSpace {
    type Error = crate::Error;

    fn try_from(specs: Vec<TransformSpec>) -> Result<Self> {
        Self::new(specs)
    }
}

impl From<TransformSpace> for Vec<TransformSpec> {
    fn from(s: TransformSpace) -> Self {
        s.specs
    }
}

impl Default for TransformSpace {
    fn default() -> Self {
        Self::default_space()
    }
}

impl TransformSpace {
    pub fn new(specs: Vec<TransformSpec>) -> Result<Self> {
        if specs.len() != NUM_PARAMS {
            return Err(config(format!("transform space needs {NUM_PARAMS} specs, got {}", specs.len())));
        }
        for (spec, kind) in specs.iter().zip(TransformKind::CANONICAL) {
            if spec.name != kind {
                return Err(config(format!("transform space out of canonical order: expected {kind}, found {}", spec.name)));
            }
            spec.validate()?;
        }
        Ok(Self { specs })
    }

    /// The ranges the generator is trained over.
    pub fn default_space() -> Self {
        use TransformKind::*;
        Self {
            specs: vec![
                TransformSpec::new(TranslateX, -15.0, 15.0, 1.0),
                TransformSpec::new(TranslateY, -15.0, 15.0, 1.0),
                TransformSpec::new(ShearX, -5.0, 5.0, 1.0),
                TransformSpec::new(ShearY, -5.0, 5.0, 1.0),
                TransformSpec::new(Rotation, -10.0, 10.0, 1.0),
                TransformSpec::new(Solarize, 0.7, 1.0, 0.1),
                TransformSpec::new(Scale, 0.9, 1.2, 0.1),
                TransformSpec::new(Sharpness, 0.5, 1.5, 0.1),
                TransformSpec::new(Brightness, 0.5, 1.5, 0.1),
                TransformSpec::new(Contrast, 0.5, 1.5, 0.1),
            ],
        }
    }

    pub fn specs(&self) -> &[TransformSpec] {
        &self.specs
    }

    pub fn spec(&self, kind: TransformKind) -> &TransformSpec {
        &self.specs[kind.index()]
    }

    /// Draws each component uniformly and independently from its grid.
    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> TransformVector {
        let mut v = [0.0; NUM_PARAMS];
        for (out, spec) in v.iter_mut().zip(&self.specs) {
            *out = spec.grid_value(rng.gen_range(0..spec.grid_len()));
        }
        TransformVector(v)
    }

    pub fn validate_vector(&self, t: &TransformVector) -> Result<()> {
        self.specs.iter().zip(t.0).try_for_each(|(s, v)| s.check(v))
    }

    /// Maps each component to `(v − lo)/(hi − lo)`.
    pub fn normalize(&self, t: &TransformVector) -> Result<[f64; NUM_PARAMS]> {
        self.validate_vector(t)?;
        let mut out = [0.0; NUM_PARAMS];
        for ((o, s), v) in out.iter_mut().zip(&self.specs).zip(t.0) {
            *o = ((v - s.lo) / (s.hi - s.lo)).clamp(0.0, 1.0);
        }
        Ok(out)
    }

    pub fn denormalize(&self, u: &[f64; NUM_PARAMS]) -> Result<TransformVector> {
        if u.iter().any(|&x| !(-GRID_TOL..=1.0 + GRID_TOL).contains(&x)) {
            return Err(contract("normalized components must lie in [0,1]"));
        }
        let mut out = [0.0; NUM_PARAMS];
        for ((o, s), x) in out.iter_mut().zip(&self.specs).zip(u) {
            *o = s.lo + x * (s.hi - s.lo);
        }
        Ok(TransformVector(out))
    }
}

/// Applies `t` to a `[0,1]` image: one composed affine warp (translate,
/// shear, rotate, scale about the centre; bilinear, border-replicate) followed
/// by solarize → sharpness → brightness → contrast, clipping to `[0,1]`.
///
/// Translations are in pixels of a 224-px frame, shear and rotation in
/// degrees. Components at their identity value are skipped, so the identity
/// vector returns the input bit-for-bit.
pub fn apply(image: &Image, t: &TransformVector) -> Result<Image> {
    if !all_finite(image) {
        return Err(contract("apply: image contains non-finite pixels"));
    }
    use TransformKind::*;
    let mut out = warp(image, t);
    let solar = t.get(Solarize);
    if solar < 1.0 {
        out.mapv_inplace(|v| if v > solar as f32 { 1.0 - v } else { v });
    }
    let sharp = t.get(Sharpness);
    if sharp != 1.0 {
        out = sharpen(&out, sharp as f32);
    }
    let bright = t.get(Brightness);
    if bright != 1.0 {
        let f = bright as f32;
        out.mapv_inplace(|v| (v * f).clamp(0.0, 1.0));
    }
    let contrast = t.get(Contrast);
    if contrast != 1.0 {
        let f = contrast as f32;
        for mut plane in out.outer_iter_mut() {
            let mean = (plane.iter().map(|&v| v as f64).sum::<f64>() / plane.len() as f64) as f32;
            plane.mapv_inplace(|v| (mean + f * (v - mean)).clamp(0.0, 1.0));
        }
    }
    Ok(out)
}

/// Inverse-mapped bilinear warp; returns a copy when the affine part is identity.
fn warp(image: &Image, t: &TransformVector) -> Image {
    use TransformKind::*;
    let geometric = [TranslateX, TranslateY, ShearX, ShearY, Rotation, Scale];
    if geometric.iter().all(|&k| t.get(k) == k.identity()) {
        return image.clone();
    }
    let (c, h, w) = image.dim();
    let tx = t.get(TranslateX) * w as f64 / REFERENCE_SIZE;
    let ty = t.get(TranslateY) * h as f64 / REFERENCE_SIZE;
    let (shx, shy) = (t.get(ShearX).to_radians().tan(), t.get(ShearY).to_radians().tan());
    let (sin, cos) = t.get(Rotation).to_radians().sin_cos();
    let s = t.get(Scale);
    // forward = rotation · shear · scale
    let sh = [[1.0, shx], [shy, 1.0]];
    let rot = [[cos, -sin], [sin, cos]];
    let mut fwd = [[0.0f64; 2]; 2];
    for i in 0..2 {
        for j in 0..2 {
            fwd[i][j] = s * (rot[i][0] * sh[0][j] + rot[i][1] * sh[1][j]);
        }
    }
    let det = fwd[0][0] * fwd[1][1] - fwd[0][1] * fwd[1][0];
    let inv = [[fwd[1][1] / det, -fwd[0][1] / det], [-fwd[1][0] / det, fwd[0][0] / det]];
    let (cx, cy) = ((w as f64 - 1.0) / 2.0, (h as f64 - 1.0) / 2.0);
    let mut out = Image::zeros((c, h, w));
    for y in 0..h {
        for x in 0..w {
            let dx = x as f64 - cx - tx;
            let dy = y as f64 - cy - ty;
            let sx = (inv[0][0] * dx + inv[0][1] * dy + cx).clamp(0.0, (w - 1) as f64);
            let sy = (inv[1][0] * dx + inv[1][1] * dy + cy).clamp(0.0, (h - 1) as f64);
            let (x0, y0) = (sx.floor() as usize, sy.floor() as usize);
            let (x1, y1) = ((x0 + 1).min(w - 1), (y0 + 1).min(h - 1));
            let (fx, fy) = ((sx - x0 as f64) as f32, (sy - y0 as f64) as f32);
            for ci in 0..c {
                let p = |yy: usize, xx: usize| image[[ci, yy, xx]];
                let top = if fx == 0.0 { p(y0, x0) } else { p(y0, x0) * (1.0 - fx) + p(y0, x1) * fx };
                let bot = if fx == 0.0 { p(y1, x0) } else { p(y1, x0) * (1.0 - fx) + p(y1, x1) * fx };
                let v = if fy == 0.0 { top } else { top * (1.0 - fy) + bot * fy };
                out[[ci, y, x]] = v.clamp(0.0, 1.0);
            }
        }
    }
    out
}

/// Blends with a 3×3 smoothing kernel (centre weight 5, others 1, /13).
fn sharpen(image: &Image, factor: f32) -> Image {
    let (c, h, w) = image.dim();
    let mut out = Image::zeros((c, h, w));
    for ci in 0..c {
        for y in 0..h {
            for x in 0..w {
                let mut acc = 0.0f32;
                for dy in -1i64..=1 {
                    for dx in -1i64..=1 {
                        let yy = (y as i64 + dy).clamp(0, h as i64 - 1) as usize;
                        let xx = (x as i64 + dx).clamp(0, w as i64 - 1) as usize;
                        let wgt = if dx == 0 && dy == 0 { 5.0 } else { 1.0 };
                        acc += wgt * image[[ci, yy, xx]];
                    }
                }
                let blur = acc / 13.0;
                let v = image[[ci, y, x]];
                out[[ci, y, x]] = (blur + factor * (v - blur)).clamp(0.0, 1.0);
            }
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn default_space_matches_reference_ranges() {
        let space = TransformSpace::default_space();
        assert_eq!(space.specs().len(), 10);
        let tx = space.spec(TransformKind::TranslateX);
        assert_eq!((tx.lo, tx.hi, tx.step), (-15.0, 15.0, 1.0));
        let sol = space.spec(TransformKind::Solarize);
        assert_eq!((sol.lo, sol.hi, sol.step), (0.7, 1.0, 0.1));
        for (spec, kind) in space.specs().iter().zip(TransformKind::CANONICAL) {
            assert_eq!(spec.name, kind);
        }
        assert_eq!(tx.grid_len(), 31);
        assert_eq!(sol.grid_len(), 4);
    }

    #[test]
    fn rejects_bad_specs() {
        use TransformKind::*;
        assert!(TransformSpec::new(Brightness, 1.5, 0.5, 0.1).validate().is_err());
        assert!(TransformSpec::new(Brightness, 0.5, 1.5, 0.3).validate().is_err());
        assert!(TransformSpec::new(Brightness, 1.1, 1.5, 0.1).validate().is_err());
        let mut specs: Vec<_> = TransformSpace::default_space().specs().to_vec();
        specs.swap(0, 1);
        assert!(TransformSpace::new(specs).is_err());
    }

    #[test]
    fn sampling_is_deterministic_and_on_grid() {
        let space = TransformSpace::default_space();
        let a = space.sample(&mut ChaCha8Rng::seed_from_u64(3));
        let b = space.sample(&mut ChaCha8Rng::seed_from_u64(3));
        assert_eq!(a, b);
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        for _ in 0..500 {
            space.validate_vector(&space.sample(&mut rng)).unwrap();
        }
    }

    #[test]
    fn translate_x_grid_frequencies_are_uniform() {
        let space = TransformSpace::default_space();
        let mut rng = ChaCha8Rng::seed_from_u64(99);
        let draws = 10_000;
        let mut counts = [0usize; 31];
        for _ in 0..draws {
            let v = space.sample(&mut rng).get(TransformKind::TranslateX);
            counts[(v + 15.0).round() as usize] += 1;
        }
        let p = 1.0 / 31.0;
        let sigma = (draws as f64 * p * (1.0 - p)).sqrt();
        for c in counts {
            assert!((c as f64 - draws as f64 * p).abs() <= 3.0 * sigma, "count {c}");
        }
    }

    #[test]
    fn normalize_endpoints_and_reference_vector() {
        let space = TransformSpace::default_space();
        let lo = TransformVector::identity().with(TransformKind::TranslateX, -15.0);
        assert_eq!(space.normalize(&lo).unwrap()[0], 0.0);
        let hi = TransformVector::identity().with(TransformKind::TranslateX, 15.0);
        assert_eq!(space.normalize(&hi).unwrap()[0], 1.0);

        let t = TransformVector([-10.0, 12.0, -4.0, -2.0, 3.0, 0.8, 1.1, 1.0, 0.9, 0.7]);
        // (v − lo)/(hi − lo) by hand
        let expected = [5.0 / 30.0, 27.0 / 30.0, 0.1, 0.3, 0.65, 1.0 / 3.0, 2.0 / 3.0, 0.5, 0.4, 0.2];
        let got = space.normalize(&t).unwrap();
        for (g, e) in got.iter().zip(expected) {
            assert!((g - e).abs() < 1e-4, "{g} vs {e}");
        }
        let back = space.denormalize(&got).unwrap();
        for (b, v) in back.0.iter().zip(t.0) {
            assert!((b - v).abs() < 1e-9);
        }
    }

    #[test]
    fn normalize_rejects_out_of_range_and_off_grid() {
        let space = TransformSpace::default_space();
        let t = TransformVector::identity().with(TransformKind::Rotation, 11.0);
        assert!(space.normalize(&t).is_err());
        let t = TransformVector::identity().with(TransformKind::Rotation, 0.5);
        assert!(space.normalize(&t).is_err());
    }

    fn textured(c: usize, h: usize, w: usize, seed: u64) -> Image {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        Image::from_shape_simple_fn((c, h, w), || rng.gen_range(0.0..1.0))
    }

    #[test]
    fn identity_vector_is_exact() {
        let img = textured(1, 16, 16, 1);
        assert_eq!(apply(&img, &TransformVector::identity()).unwrap(), img);
    }

    #[test]
    fn brightness_on_constant_image() {
        let img = Image::from_elem((1, 8, 8), 0.4);
        let t = TransformVector::identity().with(TransformKind::Brightness, 1.5);
        let out = apply(&img, &t).unwrap();
        assert!(out.iter().all(|&v| (v - 0.6).abs() < 1e-6));
    }

    #[test]
    fn integer_translation_is_a_pixel_shift() {
        let img = textured(1, 224, 224, 2);
        let t = TransformVector::identity().with(TransformKind::TranslateX, 5.0);
        let out = apply(&img, &t).unwrap();
        for y in 0..224 {
            for x in 5..224 {
                assert_eq!(out[[0, y, x]], img[[0, y, x - 5]]);
            }
            for x in 0..5 {
                assert_eq!(out[[0, y, x]], img[[0, y, 0]], "border replicate");
            }
        }
    }

    #[test]
    fn translation_scales_with_resolution() {
        let img = textured(1, 112, 112, 3);
        let t = TransformVector::identity().with(TransformKind::TranslateY, 10.0);
        let out = apply(&img, &t).unwrap();
        assert_eq!(out[[0, 50, 7]], img[[0, 45, 7]]);
    }

    #[test]
    fn solarize_inverts_above_threshold() {
        let img = Image::from_shape_vec((1, 1, 3), vec![0.2, 0.75, 0.95]).unwrap();
        let t = TransformVector::identity().with(TransformKind::Solarize, 0.7);
        let out = apply(&img, &t).unwrap();
        assert_eq!(out.as_slice().unwrap(), &[0.2, 0.25, 1.0 - 0.95]);
    }

    #[test]
    fn non_finite_input_is_rejected() {
        let mut img = Image::zeros((1, 4, 4));
        img[[0, 1, 1]] = f32::NAN;
        assert!(apply(&img, &TransformVector::identity()).is_err());
    }

    #[test]
    fn space_round_trips_through_toml() {
        #[derive(Serialize, Deserialize)]
        struct Wrap {
            space: TransformSpace,
        }
        let text = toml::to_string(&Wrap { space: TransformSpace::default_space() }).unwrap();
        let back: Wrap = toml::from_str(&text).unwrap();
        assert_eq!(back.space, TransformSpace::default_space());
        assert!(text.contains("translate_x"));
    }
}
