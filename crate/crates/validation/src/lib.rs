//! Fixtures shared by the acceptance suite.

use std::path::{Path, PathBuf};

use advpad_core::dataset::{generate_synthetic, load_manifest, load_records, ImageRecord, Split, SyntheticConfig};
use advpad_core::pipeline::ExperimentConfig;

pub const DESK_CONFIG: &str = concat!(env!("CARGO_MANIFEST_DIR"), "/../../configs/desk.toml");

pub struct Splits {
    pub train: Vec<ImageRecord>,
    pub val: Vec<ImageRecord>,
}

/// Renders the default synthetic set under `dir` and returns its manifest path.
pub fn synth(dir: &Path, seed: u64) -> PathBuf {
    generate_synthetic(&SyntheticConfig::default(), seed, dir).expect("synthetic generation");
    dir.join("manifest.csv")
}

/// Domain-A train and validation records.
pub fn load_splits(manifest: &Path, size: usize) -> Splits {
    let m = load_manifest(manifest).expect("manifest");
    let get = |split| load_records(&m, &m.select(split, Some("A")), size, 1).expect("records");
    Splits { train: get(Split::Train), val: get(Split::Val) }
}

/// The desk config pointed at `manifest`.
pub fn desk_config(manifest: &Path) -> ExperimentConfig {
    let mut cfg = ExperimentConfig::load(Path::new(DESK_CONFIG)).expect("desk config");
    cfg.data.manifest = manifest.to_path_buf();
    cfg
}
