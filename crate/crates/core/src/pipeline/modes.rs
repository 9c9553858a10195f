//! Run modes: how the generator is trained and where candidates come from.

use std::collections::BTreeMap;
use std::path::PathBuf;

use crate::advgen::{sample_inference_transforms, train_advgen, train_advgen_noparams, CaeModel, CaeReport};
use crate::candidates::{self, AdvGenSource, CandidateSource, TransformOnlySource};
use crate::dataset::ImageRecord;
use crate::error::{config, Result};
use crate::pad::PadModel;
use crate::transform::TransformVector;

use super::config::{ExperimentConfig, RunModeKind};

/// Behaviour that differs between the full method and its ablations.
pub trait RunMode: Send + Sync {
    fn kind(&self) -> RunModeKind;

    /// Whether a generator is trained at all.
    fn trains_generator(&self) -> bool;

    fn train_generator(
        &self,
        train: &[ImageRecord],
        classifier: &PadModel,
        cfg: &ExperimentConfig,
        seed: u64,
    ) -> Result<(CaeModel, CaeReport)>;

    /// Transform per training record used at generation time.
    fn inference_transforms(&self, train: &[ImageRecord], cfg: &ExperimentConfig, seed: u64) -> Result<Vec<TransformVector>>;

    /// Extra files the generate stage depends on.
    fn generate_inputs(&self, _cfg: &ExperimentConfig) -> Vec<PathBuf> {
        vec![]
    }

    fn source(&self, generator: Option<CaeModel>) -> Result<Box<dyn CandidateSource>>;
}

pub struct FullMode;

impl RunMode for FullMode {
    fn kind(&self) -> RunModeKind {
        RunModeKind::Full
    }

    fn trains_generator(&self) -> bool {
        true
    }

    fn train_generator(&self, train: &[ImageRecord], f: &PadModel, cfg: &ExperimentConfig, seed: u64) -> Result<(CaeModel, CaeReport)> {
        train_advgen(train, f, &cfg.transforms, &cfg.cae, seed)
    }

    fn inference_transforms(&self, train: &[ImageRecord], cfg: &ExperimentConfig, seed: u64) -> Result<Vec<TransformVector>> {
        Ok(sample_inference_transforms(&cfg.transforms, train.len(), seed))
    }

    fn source(&self, generator: Option<CaeModel>) -> Result<Box<dyn CandidateSource>> {
        let cae = generator.ok_or_else(|| config("full mode needs a trained generator"))?;
        Ok(Box::new(AdvGenSource { cae }))
    }
}

pub struct NoParamsMode;

impl RunMode for NoParamsMode {
    fn kind(&self) -> RunModeKind {
        RunModeKind::AblationNoParams
    }

    fn trains_generator(&self) -> bool {
        true
    }

    fn train_generator(&self, train: &[ImageRecord], f: &PadModel, cfg: &ExperimentConfig, seed: u64) -> Result<(CaeModel, CaeReport)> {
        train_advgen_noparams(train, f, &cfg.cae, seed)
    }

    fn inference_transforms(&self, train: &[ImageRecord], _cfg: &ExperimentConfig, _seed: u64) -> Result<Vec<TransformVector>> {
        Ok(vec![TransformVector::identity(); train.len()])
    }

    fn source(&self, generator: Option<CaeModel>) -> Result<Box<dyn CandidateSource>> {
        let cae = generator.ok_or_else(|| config("no-params mode needs a trained generator"))?;
        Ok(Box::new(AdvGenSource { cae }))
    }
}

pub struct NoAdvgenMode;

impl NoAdvgenMode {
    fn reference_candidates(cfg: &ExperimentConfig) -> Result<PathBuf> {
        let run = cfg.ablation.reference_run.as_ref().ok_or_else(|| config("no-advgen mode needs ablation.reference_run"))?;
        Ok(run.join(super::CANDIDATE_DIR))
    }
}

impl RunMode for NoAdvgenMode {
    fn kind(&self) -> RunModeKind {
        RunModeKind::AblationNoAdvgen
    }

    fn trains_generator(&self) -> bool {
        false
    }

    fn train_generator(&self, _: &[ImageRecord], _: &PadModel, _: &ExperimentConfig, _: u64) -> Result<(CaeModel, CaeReport)> {
        Err(config("no-advgen mode does not train a generator"))
    }

    /// Reuses the transforms logged by the reference run, matched by source id.
    fn inference_transforms(&self, train: &[ImageRecord], cfg: &ExperimentConfig, _seed: u64) -> Result<Vec<TransformVector>> {
        let dir = Self::reference_candidates(cfg)?;
        if !dir.join(candidates::MANIFEST_FILE).is_file() {
            return Err(config(format!("reference run has no logged transforms at {}", dir.display())));
        }
        let logged: BTreeMap<String, TransformVector> = candidates::read_store(&dir, false, cfg.data.channels)?
            .into_iter()
            .map(|c| (c.source_id, c.t))
            .collect();
        train
            .iter()
            .map(|r| logged.get(&r.id).copied().ok_or_else(|| config(format!("no logged transform for {}", r.id))))
            .collect()
    }

    fn generate_inputs(&self, cfg: &ExperimentConfig) -> Vec<PathBuf> {
        Self::reference_candidates(cfg).map(|d| vec![d.join(candidates::MANIFEST_FILE)]).unwrap_or_default()
    }

    fn source(&self, _generator: Option<CaeModel>) -> Result<Box<dyn CandidateSource>> {
        Ok(Box::new(TransformOnlySource))
    }
}

/// Mode name → behaviour.
pub struct ModeRegistry {
    modes: BTreeMap<&'static str, Box<dyn RunMode>>,
}

impl Default for ModeRegistry {
    fn default() -> Self {
        let mut r = Self { modes: BTreeMap::new() };
        r.register(Box::new(FullMode));
        r.register(Box::new(NoParamsMode));
        r.register(Box::new(NoAdvgenMode));
        r
    }
}

impl ModeRegistry {
    pub fn register(&mut self, mode: Box<dyn RunMode>) {
        self.modes.insert(mode.kind().name(), mode);
    }

    pub fn get(&self, kind: RunModeKind) -> Result<&dyn RunMode> {
        self.modes.get(kind.name()).map(|m| m.as_ref()).ok_or_else(|| config(format!("mode {} not registered", kind.name())))
    }

    pub fn names(&self) -> Vec<&'static str> {
        self.modes.keys().copied().collect()
    }
}

