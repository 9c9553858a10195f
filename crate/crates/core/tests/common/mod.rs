#![allow(dead_code)]

use std::path::{Path, PathBuf};

use advpad_core::dataset::{generate_synthetic, load_manifest, load_records, ImageRecord, Split, SyntheticConfig};
use advpad_core::pipeline::ExperimentConfig;

pub const DESK_CONFIG: &str = concat!(env!("CARGO_MANIFEST_DIR"), "/../../configs/desk.toml");

pub struct Splits {
    pub train: Vec<ImageRecord>,
    pub val: Vec<ImageRecord>,
    pub test_a: Vec<ImageRecord>,
    pub test_b: Vec<ImageRecord>,
}

/// Renders the default synthetic set under `dir` and returns its manifest path.
pub fn synth(dir: &Path, seed: u64) -> PathBuf {
    generate_synthetic(&SyntheticConfig::default(), seed, dir).expect("synthetic generation");
    dir.join("manifest.csv")
}

pub fn load_splits(manifest: &Path, size: usize) -> Splits {
    let m = load_manifest(manifest).unwrap();
    let get = |split, d| load_records(&m, &m.select(split, Some(d)), size, 1).unwrap();
    Splits {
        train: get(Split::Train, "A"),
        val: get(Split::Val, "A"),
        test_a: get(Split::Test, "A"),
        test_b: get(Split::Test, "B"),
    }
}

/// The desk config pointed at `manifest`.
pub fn desk_config(manifest: &Path) -> ExperimentConfig {
    let mut cfg = ExperimentConfig::load(Path::new(DESK_CONFIG)).unwrap();
    cfg.data.manifest = manifest.to_path_buf();
    cfg
}

/// Desk config shrunk to a few epochs for plumbing tests.
pub fn quick_config(manifest: &Path) -> ExperimentConfig {
    let mut cfg = desk_config(manifest);
    cfg.pad.epochs = 2;
    cfg.cae.epochs = 2;
    cfg.embedder.epochs = 1;
    cfg
}
