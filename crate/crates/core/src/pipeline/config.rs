//! Experiment configuration: versioned TOML with paths resolved against the file's directory.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::advgen::CaeConfig;
use crate::embedding::EmbedderConfig;
use crate::error::{config, Error, Result};
use crate::evaluation::EvalConfig;
use crate::pad::PadTrainConfig;
use crate::selection::SelectionConfig;
use crate::transform::TransformSpace;

pub const SCHEMA_VERSION: u32 = 1;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RunModeKind {
    Full,
    AblationNoAdvgen,
    AblationNoParams,
}

impl RunModeKind {
    pub fn name(self) -> &'static str {
        match self {
            Self::Full => "full",
            Self::AblationNoAdvgen => "ablation_no_advgen",
            Self::AblationNoParams => "ablation_no_params",
        }
    }

    /// Accepts both the config spelling and the short CLI spelling.
    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "full" => Some(Self::Full),
            "no-advgen" | "ablation_no_advgen" => Some(Self::AblationNoAdvgen),
            "no-params" | "ablation_no_params" => Some(Self::AblationNoParams),
            _ => None,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DataConfig {
    pub manifest: PathBuf,
    pub train_domain: String,
    pub test_domains: Vec<String>,
    #[serde(default = "default_image_size")]
    pub image_size: usize,
    #[serde(default = "default_channels")]
    pub channels: usize,
    /// Used only when the manifest has no validation rows for the training domain.
    #[serde(default = "default_val_fraction")]
    pub val_fraction: f64,
}

fn default_image_size() -> usize {
    224
}

fn default_channels() -> usize {
    1
}

fn default_val_fraction() -> f64 {
    0.1
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AblationConfig {
    /// Output directory of the paired full run.
    pub reference_run: Option<PathBuf>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub schema_version: u32,
    pub seed: u64,
    #[serde(default = "default_mode")]
    pub mode: RunModeKind,
    pub data: DataConfig,
    #[serde(default)]
    pub pad: PadTrainConfig,
    /// Overrides for the retrained classifier; defaults to `pad`.
    #[serde(default)]
    pub aapad: Option<PadTrainConfig>,
    #[serde(default)]
    pub cae: CaeConfig,
    #[serde(default)]
    pub transforms: TransformSpace,
    #[serde(default)]
    pub selection: SelectionConfig,
    #[serde(default)]
    pub embedder: EmbedderConfig,
    #[serde(default)]
    pub eval: EvalConfig,
    #[serde(default)]
    pub ablation: AblationConfig,
}

fn default_mode() -> RunModeKind {
    RunModeKind::Full
}

impl ExperimentConfig {
    pub fn from_toml(text: &str, base: &Path) -> Result<Self> {
        let mut cfg: Self = toml::from_str(text).map_err(|e| config(e.to_string()))?;
        cfg.resolve_paths(base);
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::Config(format!("cannot read {}: {e}", path.display())))?;
        Self::from_toml(&text, path.parent().unwrap_or(Path::new(".")))
    }

    pub fn to_toml(&self) -> Result<String> {
        toml::to_string_pretty(self).map_err(|e| config(e.to_string()))
    }

    fn resolve_paths(&mut self, base: &Path) {
        if self.data.manifest.is_relative() {
            self.data.manifest = base.join(&self.data.manifest);
        }
        if let Some(r) = &mut self.ablation.reference_run {
            if r.is_relative() {
                *r = base.join(&*r);
            }
        }
    }

    pub fn aapad_config(&self) -> &PadTrainConfig {
        self.aapad.as_ref().unwrap_or(&self.pad)
    }

    /// Checks versions, hyperparameters, mode requirements, and referenced paths.
    pub fn validate(&self) -> Result<()> {
        if self.schema_version != SCHEMA_VERSION {
            return Err(config(format!("schema_version {} unsupported (expected {SCHEMA_VERSION})", self.schema_version)));
        }
        if self.data.test_domains.is_empty() {
            return Err(config("data.test_domains must list at least one domain"));
        }
        if self.data.channels != 1 && self.data.channels != 3 {
            return Err(config("data.channels must be 1 or 3"));
        }
        if !(0.0..1.0).contains(&self.data.val_fraction) {
            return Err(config("data.val_fraction must be in [0,1)"));
        }
        self.pad.validate()?;
        self.aapad_config().validate()?;
        self.cae.validate()?;
        self.selection.validate()?;
        if !self.data.manifest.is_file() {
            return Err(config(format!("data.manifest {} does not exist", self.data.manifest.display())));
        }
        if self.mode == RunModeKind::AblationNoAdvgen && self.ablation.reference_run.is_none() {
            return Err(config("mode ablation_no_advgen requires ablation.reference_run"));
        }
        if let Some(r) = &self.ablation.reference_run {
            if !r.join(super::MANIFEST_FILE).is_file() {
                return Err(config(format!("reference run {} has no {}", r.display(), super::MANIFEST_FILE)));
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const MINIMAL: &str = r#"
schema_version = 1
seed = 7

[data]
manifest = "data/manifest.csv"
train_domain = "A"
test_domains = ["B"]
"#;

    #[test]
    fn minimal_config_takes_defaults() {
        let cfg = ExperimentConfig::from_toml(MINIMAL, Path::new("/exp")).unwrap();
        assert_eq!(cfg.mode, RunModeKind::Full);
        assert_eq!(cfg.data.manifest, PathBuf::from("/exp/data/manifest.csv"));
        assert_eq!(cfg.data.image_size, 224);
        assert_eq!(cfg.pad.lr, 1e-4);
        assert_eq!(cfg.pad.epochs, 50);
        assert_eq!(cfg.cae.epochs, 500);
        assert_eq!(cfg.cae.loss.lambda, 0.1);
        assert_eq!(cfg.selection.k, 10);
        assert_eq!(cfg.selection.s, 20);
        assert_eq!(cfg.transforms, TransformSpace::default_space());
    }

    #[test]
    fn unknown_keys_and_bad_versions_are_rejected() {
        let bad = MINIMAL.replace("seed = 7", "seed = 7\nsed = 1");
        assert!(ExperimentConfig::from_toml(&bad, Path::new(".")).is_err());
        let v2 = MINIMAL.replace("schema_version = 1", "schema_version = 2");
        let cfg = ExperimentConfig::from_toml(&v2, Path::new(".")).unwrap();
        assert!(matches!(cfg.validate(), Err(Error::Config(_))));
        let no_seed = MINIMAL.replace("seed = 7\n", "");
        assert!(ExperimentConfig::from_toml(&no_seed, Path::new(".")).is_err());
    }

    #[test]
    fn toml_round_trip() {
        let cfg = ExperimentConfig::from_toml(MINIMAL, Path::new("/exp")).unwrap();
        let back = ExperimentConfig::from_toml(&cfg.to_toml().unwrap(), Path::new("/other")).unwrap();
        assert_eq!(back, cfg);
    }

    #[test]
    fn mode_spellings() {
        assert_eq!(RunModeKind::parse("no-advgen"), Some(RunModeKind::AblationNoAdvgen));
        assert_eq!(RunModeKind::parse("ablation_no_params"), Some(RunModeKind::AblationNoParams));
        assert_eq!(RunModeKind::parse("half"), None);
    }
}
