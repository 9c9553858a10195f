//! Manifest ingestion, preprocessing, and the synthetic ocular-texture generator.

mod manifest;
mod preprocess;
mod synthetic;

use std::fmt;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

pub use manifest::{load_manifest, DatasetManifest, ManifestEntry};
pub use preprocess::{load_image, preprocess, resize_bilinear, save_png};
pub use synthetic::{generate_synthetic, DomainShift, SplitFractions, SyntheticConfig, SyntheticDomain};

use crate::error::{config, Result};
use crate::pixels::Image;

/// Ground truth: 0 bonafide, 1 presentation attack.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(into = "u8", try_from = "u8")]
pub enum Label {
    Bonafide,
    Attack,
}

impl Label {
    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "0" => Some(Self::Bonafide),
            "1" => Some(Self::Attack),
            _ => None,
        }
    }

    pub fn code(self) -> &'static str {
        match self {
            Self::Bonafide => "0",
            Self::Attack => "1",
        }
    }

    pub fn as_f64(self) -> f64 {
        match self {
            Self::Bonafide => 0.0,
            Self::Attack => 1.0,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Self::Bonafide => "bonafide",
            Self::Attack => "attack",
        }
    }

    pub const BOTH: [Label; 2] = [Label::Bonafide, Label::Attack];
}

impl From<Label> for u8 {
    fn from(l: Label) -> u8 {
        l as u8
    }
}

impl TryFrom<u8> for Label {
    type Error = String;

    fn try_from(v: u8) -> std::result::Result<Self, String> {
        match v {
            0 => Ok(Self::Bonafide),
            1 => Ok(Self::Attack),
            other => Err(format!("label must be 0 or 1, got {other}")),
        }
    }
}

impl fmt::Display for Label {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Split {
    Train,
    Val,
    Test,
}

impl Split {
    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "train" => Some(Self::Train),
            "val" => Some(Self::Val),
            "test" => Some(Self::Test),
            _ => None,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Self::Train => "train",
            Self::Val => "val",
            Self::Test => "test",
        }
    }
}

/// One preprocessed sample; pixels are `C×S×S` in `[-1,1]`.
#[derive(Clone, Debug)]
pub struct ImageRecord {
    pub id: String,
    pub pixels: Image,
    pub label: Label,
    pub split: Split,
    pub domain: String,
}

/// Decodes and preprocesses manifest entries in parallel; output order follows input order.
pub fn load_records(
    manifest: &DatasetManifest,
    entries: &[&ManifestEntry],
    size: usize,
    channels: usize,
) -> Result<Vec<ImageRecord>> {
    entries
        .par_iter()
        .map(|e| {
            let raw = load_image(&manifest.resolve(e), channels)?;
            Ok(ImageRecord {
                id: e.path.clone(),
                pixels: preprocess(&raw, size)?,
                label: e.label,
                split: e.split,
                domain: e.domain.clone(),
            })
        })
        .collect()
}

/// Moves a seeded, label-stratified `fraction` of `train` into a validation set.
pub fn holdout_validation(train: Vec<ImageRecord>, fraction: f64, seed: u64) -> (Vec<ImageRecord>, Vec<ImageRecord>) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut keep = Vec::new();
    let mut val = Vec::new();
    for label in Label::BOTH {
        let mut idx: Vec<usize> = train.iter().enumerate().filter(|(_, r)| r.label == label).map(|(i, _)| i).collect();
        idx.shuffle(&mut rng);
        let n_val = ((idx.len() as f64 * fraction).round() as usize).min(idx.len().saturating_sub(1));
        let held: std::collections::HashSet<usize> = idx[..n_val].iter().copied().collect();
        for &i in &idx {
            if held.contains(&i) {
                val.push(i);
            } else {
                keep.push(i);
            }
        }
    }
    keep.sort_unstable();
    val.sort_unstable();
    let mut slots: Vec<Option<ImageRecord>> = train.into_iter().map(Some).collect();
    let take = |ids: &[usize], slots: &mut Vec<Option<ImageRecord>>| {
        ids.iter()
            .map(|&i| {
                let mut r = slots[i].take().expect("each index used once");
                r.split = Split::Val;
                r
            })
            .collect::<Vec<_>>()
    };
    let val_records = take(&val, &mut slots);
    let train_records = take(&keep, &mut slots)
        .into_iter()
        .map(|mut r| {
            r.split = Split::Train;
            r
        })
        .collect();
    (train_records, val_records)
}

pub fn require_both_classes(records: &[ImageRecord], what: &str) -> Result<()> {
    for label in Label::BOTH {
        if !records.iter().any(|r| r.label == label) {
            return Err(config(format!("{what} has no {label} samples")));
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn rec(i: usize, label: Label) -> ImageRecord {
        ImageRecord {
            id: format!("r{i}"),
            pixels: Image::zeros((1, 2, 2)),
            label,
            split: Split::Train,
            domain: "A".into(),
        }
    }

    #[test]
    fn holdout_is_stratified_and_seeded() {
        let train: Vec<_> = (0..100)
            .map(|i| rec(i, if i < 60 { Label::Bonafide } else { Label::Attack }))
            .collect();
        let (t1, v1) = holdout_validation(train.clone(), 0.1, 7);
        let (_, v2) = holdout_validation(train, 0.1, 7);
        assert_eq!(v1.len(), 10);
        assert_eq!(t1.len(), 90);
        assert_eq!(v1.iter().filter(|r| r.label == Label::Bonafide).count(), 6);
        assert!(v1.iter().all(|r| r.split == Split::Val));
        let ids = |v: &[ImageRecord]| v.iter().map(|r| r.id.clone()).collect::<Vec<_>>();
        assert_eq!(ids(&v1), ids(&v2));
    }

    #[test]
    fn single_class_is_rejected() {
        let only = vec![rec(0, Label::Attack)];
        assert!(require_both_classes(&only, "train").is_err());
    }
}
