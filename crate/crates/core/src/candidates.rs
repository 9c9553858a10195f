//! Generated samples, their bookkeeping, and the sources that produce them.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use rayon::prelude::*;

use crate::advgen::CaeModel;
use crate::dataset::{load_image, save_png, ImageRecord, Label};
use crate::error::{config, Error, Result};
use crate::pad::PadModel;
use crate::pixels::{self, Image};
use crate::transform::{self, TransformKind, TransformSpace, TransformVector};

pub const MANIFEST_FILE: &str = "manifest.csv";
pub const IMAGE_DIR: &str = "images";

#[derive(Clone, Debug)]
pub struct AdversarialCandidate {
    pub id: String,
    pub source_id: String,
    pub label: Label,
    pub t: TransformVector,
    /// Mean squared error against the transformed source, `[-1,1]` domain.
    pub mse: f64,
    /// Frozen classifier score on the generated image.
    pub f_score: f64,
    /// Generated pixels in `[-1,1]`; absent until loaded.
    pub image: Option<Image>,
    pub embedding: Option<Vec<f32>>,
    pub selected: bool,
}

/// A bonafide scored as PA, or a PA scored as bonafide, at the 0.5 boundary.
pub fn is_adversarial(label: Label, f_score: f64) -> bool {
    match label {
        Label::Bonafide => f_score >= 0.5,
        Label::Attack => f_score < 0.5,
    }
}

impl AdversarialCandidate {
    pub fn adversarial(&self) -> bool {
        is_adversarial(self.label, self.f_score)
    }

    pub fn image_path(&self, dir: &Path) -> PathBuf {
        dir.join(IMAGE_DIR).join(format!("{}.png", self.id))
    }

    pub fn to_record(&self) -> Result<ImageRecord> {
        let pixels = self
            .image
            .clone()
            .ok_or_else(|| Error::Selection(format!("candidate {} has no pixels loaded", self.id)))?;
        Ok(ImageRecord {
            id: self.id.clone(),
            pixels,
            label: self.label,
            split: crate::dataset::Split::Train,
            domain: "adversarial".into(),
        })
    }
}

/// Rounds `[-1,1]` pixels through the 8-bit PNG grid so stored and in-memory images agree.
pub fn quantize_model_range(img: &Image) -> Image {
    img.mapv(|v| pixels::quantize((v + 1.0) * 0.5) as f32 / 255.0 * 2.0 - 1.0)
}

/// Transform target `t·x` in the model domain.
pub fn transform_target(x: &Image, t: &TransformVector) -> Result<Image> {
    Ok(pixels::to_model_range(&transform::apply(&pixels::to_unit_range(x), t)?))
}

fn header() -> Vec<String> {
    let mut h: Vec<String> =
        ["id", "source_id", "label", "mse", "f_score", "adversarial"].iter().map(|s| s.to_string()).collect();
    h.extend(TransformKind::CANONICAL.iter().map(|k| format!("t_{}", k.name())));
    h
}

/// Writes candidate images as PNG plus one manifest row per candidate.
pub fn write_store(dir: &Path, candidates: &[AdversarialCandidate]) -> Result<()> {
    fs::create_dir_all(dir.join(IMAGE_DIR))?;
    candidates.par_iter().try_for_each(|c| match &c.image {
        Some(img) => save_png(&pixels::to_unit_range(img), &c.image_path(dir)),
        None => Ok(()),
    })?;
    let mut w = csv::Writer::from_path(dir.join(MANIFEST_FILE)).map_err(csv_err)?;
    w.write_record(header()).map_err(csv_err)?;
    for c in candidates {
        let mut row = vec![
            c.id.clone(),
            c.source_id.clone(),
            c.label.code().to_string(),
            format!("{:.9}", c.mse),
            format!("{:.9}", c.f_score),
            (c.adversarial() as u8).to_string(),
        ];
        row.extend(c.t.values().iter().map(|v| format!("{v}")));
        w.write_record(&row).map_err(csv_err)?;
    }
    w.flush()?;
    Ok(())
}

fn csv_err(e: csv::Error) -> Error {
    Error::Io(std::io::Error::other(e.to_string()))
}

/// Reads a candidate manifest; pixels are loaded only when `with_images` is set.
pub fn read_store(dir: &Path, with_images: bool, channels: usize) -> Result<Vec<AdversarialCandidate>> {
    let path = dir.join(MANIFEST_FILE);
    let mut r = csv::Reader::from_path(&path).map_err(csv_err)?;
    let expected = header();
    let got: Vec<String> = r.headers().map_err(csv_err)?.iter().map(str::to_string).collect();
    if got != expected {
        return Err(Error::ManifestParse { path, line: 1, reason: "unexpected candidate header".into() });
    }
    let mut out = Vec::new();
    for (i, rec) in r.records().enumerate() {
        let line = i + 2;
        let bad = |reason: String| Error::ManifestParse { path: path.clone(), line, reason };
        let rec = rec.map_err(|e| bad(e.to_string()))?;
        let num = |k: usize| rec[k].parse::<f64>().map_err(|e| bad(format!("column {}: {e}", expected[k])));
        let mut t = [0.0; transform::NUM_PARAMS];
        for (j, v) in t.iter_mut().enumerate() {
            *v = num(6 + j)?;
        }
        out.push(AdversarialCandidate {
            id: rec[0].to_string(),
            source_id: rec[1].to_string(),
            label: Label::parse(&rec[2]).ok_or_else(|| bad(format!("bad label `{}`", &rec[2])))?,
            t: TransformVector(t),
            mse: num(3)?,
            f_score: num(4)?,
            image: None,
            embedding: None,
            selected: false,
        });
    }
    if with_images {
        load_images(dir, &mut out, channels)?;
    }
    Ok(out)
}

pub fn load_images(dir: &Path, candidates: &mut [AdversarialCandidate], channels: usize) -> Result<()> {
    candidates.par_iter_mut().try_for_each(|c| {
        let img = load_image(&c.image_path(dir), channels)?;
        c.image = Some(pixels::to_model_range(&img));
        Ok(())
    })
}

/// Inputs shared by every candidate source.
pub struct SourceContext<'a> {
    pub records: &'a [ImageRecord],
    /// One transform per record, aligned by index.
    pub transforms: &'a [TransformVector],
    pub classifier: &'a PadModel,
    pub space: &'a TransformSpace,
}

/// Produces one candidate per training record.
pub trait CandidateSource: Send + Sync {
    fn id(&self) -> &'static str;

    fn produce(&self, ctx: &SourceContext<'_>) -> Result<Vec<AdversarialCandidate>>;
}

fn candidate_id(index: usize) -> String {
    format!("c{index:05}")
}

/// Runs the trained autoencoder on each record with its logged transform.
pub struct AdvGenSource {
    pub cae: CaeModel,
}

impl CandidateSource for AdvGenSource {
    fn id(&self) -> &'static str {
        "advgen"
    }

    fn produce(&self, ctx: &SourceContext<'_>) -> Result<Vec<AdversarialCandidate>> {
        check_alignment(ctx)?;
        let idx: Vec<usize> = (0..ctx.records.len()).collect();
        let parts: Vec<Vec<AdversarialCandidate>> = idx
            .par_chunks(16)
            .map(|chunk| {
                let recs: Vec<&ImageRecord> = chunk.iter().map(|&i| &ctx.records[i]).collect();
                let ts: Vec<TransformVector> = chunk.iter().map(|&i| ctx.transforms[i]).collect();
                let made = crate::advgen::generate_batch(&self.cae, &recs, &ts, ctx.classifier, ctx.space)?;
                Ok(chunk.iter().zip(made).map(|(&i, c)| AdversarialCandidate { id: candidate_id(i), ..c }).collect())
            })
            .collect::<Result<_>>()?;
        Ok(parts.concat())
    }
}

/// Applies each logged transform directly to its source image; no generator involved.
pub struct TransformOnlySource;

impl CandidateSource for TransformOnlySource {
    fn id(&self) -> &'static str {
        "transform-only"
    }

    fn produce(&self, ctx: &SourceContext<'_>) -> Result<Vec<AdversarialCandidate>> {
        check_alignment(ctx)?;
        ctx.records
            .par_iter()
            .zip(ctx.transforms.par_iter())
            .enumerate()
            .map(|(i, (r, t))| {
                let img = quantize_model_range(&transform_target(&r.pixels, t)?);
                let f_score = ctx.classifier.score(&img)?;
                Ok(AdversarialCandidate {
                    id: candidate_id(i),
                    source_id: r.id.clone(),
                    label: r.label,
                    t: *t,
                    mse: 0.0,
                    f_score,
                    image: Some(img),
                    embedding: None,
                    selected: false,
                })
            })
            .collect()
    }
}

fn check_alignment(ctx: &SourceContext<'_>) -> Result<()> {
    if ctx.records.len() != ctx.transforms.len() {
        return Err(config(format!(
            "{} records but {} logged transforms",
            ctx.records.len(),
            ctx.transforms.len()
        )));
    }
    for t in ctx.transforms {
        ctx.space.validate_vector(t)?;
    }
    Ok(())
}

/// Per-class share of candidates that fooled the classifier, in percent.
pub fn adversarial_yield(candidates: &[AdversarialCandidate]) -> BTreeMap<String, f64> {
    Label::BOTH
        .iter()
        .map(|&l| {
            let of: Vec<_> = candidates.iter().filter(|c| c.label == l).collect();
            let hit = of.iter().filter(|c| c.adversarial()).count();
            (l.name().to_string(), if of.is_empty() { 0.0 } else { 100.0 * hit as f64 / of.len() as f64 })
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn cand(id: &str, label: Label, score: f64) -> AdversarialCandidate {
        AdversarialCandidate {
            id: id.into(),
            source_id: format!("src/{id}.png"),
            label,
            t: TransformVector::identity().with(TransformKind::Rotation, 4.0),
            mse: 0.0031,
            f_score: score,
            image: Some(ndarray::Array3::from_shape_fn((1, 4, 4), |(_, i, j)| (i * 4 + j) as f32 / 7.5 - 1.0)),
            embedding: None,
            selected: false,
        }
    }

    #[test]
    fn adversarial_flag_definition() {
        assert!(is_adversarial(Label::Bonafide, 0.5));
        assert!(!is_adversarial(Label::Bonafide, 0.49));
        assert!(is_adversarial(Label::Attack, 0.49));
        assert!(!is_adversarial(Label::Attack, 0.5));
    }

    #[test]
    fn store_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let cs = vec![cand("c00000", Label::Bonafide, 0.9), cand("c00001", Label::Attack, 0.7)];
        write_store(dir.path(), &cs).unwrap();
        let back = read_store(dir.path(), true, 1).unwrap();
        assert_eq!(back.len(), 2);
        assert_eq!(back[0].t, cs[0].t);
        assert_eq!(back[1].label, Label::Attack);
        assert!((back[0].mse - 0.0031).abs() < 1e-12);
        assert!(back[0].adversarial() && !back[1].adversarial());
        let img = back[0].image.as_ref().unwrap();
        assert_eq!(img, &quantize_model_range(cs[0].image.as_ref().unwrap()));
    }

    #[test]
    fn yield_is_per_class_percent() {
        let cs = vec![
            cand("a", Label::Bonafide, 0.9),
            cand("b", Label::Bonafide, 0.1),
            cand("c", Label::Attack, 0.9),
            cand("d", Label::Attack, 0.8),
        ];
        let y = adversarial_yield(&cs);
        assert_eq!(y["bonafide"], 50.0);
        assert_eq!(y["attack"], 0.0);
    }
}
