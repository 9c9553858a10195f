//! The binary presentation-attack classifier: backbone, pooled linear head, sigmoid score.

use std::path::Path;

use advpad_nn::loss::{bce, bce_with_logits, sigmoid};
use advpad_nn::{zero_grads, Adam, GlobalAvgPool, Layer, Linear, Mode, Param, Sequential, Tensor};
use rand::seq::SliceRandom;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::backbone::{BackboneConfig, BackboneRegistry};
use crate::checkpoint::{self, CheckpointHeader};
use crate::dataset::{require_both_classes, ImageRecord};
use crate::error::{config, contract, Error, Result};
use crate::pixels::{stack, Image};
use crate::seed;

/// Inference batch size; scores do not depend on it.
const INFER_CHUNK: usize = 32;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PadArch {
    pub backbone: BackboneConfig,
    pub channels: usize,
    pub image_size: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PadTrainConfig {
    pub backbone: BackboneConfig,
    pub lr: f64,
    pub epochs: usize,
    pub batch_size: usize,
    pub weight_decay: f64,
}

impl Default for PadTrainConfig {
    fn default() -> Self {
        Self { backbone: BackboneConfig::default(), lr: 1e-4, epochs: 50, batch_size: 32, weight_decay: 0.0 }
    }
}

impl PadTrainConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.lr > 0.0) || self.epochs == 0 || self.batch_size == 0 || self.weight_decay < 0.0 {
            return Err(config("pad training needs lr > 0, epochs ≥ 1, batch_size ≥ 1, weight_decay ≥ 0"));
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrainReport {
    pub train_loss: Vec<f64>,
    pub val_loss: Vec<f64>,
    pub val_accuracy: Vec<f64>,
    /// Zero-based index into the loss curves.
    pub best_epoch: usize,
    pub weights_hash: String,
    pub checkpoint: Option<String>,
}

impl TrainReport {
    pub fn write(&self, path: &Path) -> Result<()> {
        std::fs::write(path, serde_json::to_string_pretty(self)?)?;
        Ok(())
    }
}

#[derive(Clone)]
pub struct PadModel {
    arch: PadArch,
    features: Sequential,
    pool: GlobalAvgPool,
    head: Linear,
    feature_shape: (usize, usize, usize),
    pub seed: u64,
    pub epoch: usize,
    pub config_hash: String,
}

impl PadModel {
    pub fn new(arch: PadArch, seed: u64) -> Result<Self> {
        if arch.channels == 0 || arch.image_size == 0 {
            return Err(config("pad model needs channels ≥ 1 and image_size ≥ 1"));
        }
        let mut rng = seed::rng(seed, &[seed::tag("pad-init")]);
        let built = BackboneRegistry::default().build(&arch.backbone, arch.channels, &mut rng)?;
        let probe = built.net.infer(&Tensor::zeros((1, arch.channels, arch.image_size, arch.image_size)));
        let (_, c, h, w) = probe.dim();
        if h == 0 || w == 0 {
            return Err(config(format!("image_size {} too small for backbone {}", arch.image_size, arch.backbone.id)));
        }
        let head = Linear::new(c, 1, &mut rng);
        let config_hash = checkpoint::config_hash(&arch);
        Ok(Self {
            arch,
            features: built.net,
            pool: GlobalAvgPool::new(),
            head,
            feature_shape: (c, h, w),
            seed,
            epoch: 0,
            config_hash,
        })
    }

    pub fn arch(&self) -> &PadArch {
        &self.arch
    }

    pub fn backbone_id(&self) -> &str {
        &self.arch.backbone.id
    }

    pub fn embedding_dim(&self) -> usize {
        let (c, h, w) = self.feature_shape;
        c * h * w
    }

    fn check_batch(&self, x: &Tensor) -> Result<()> {
        let (_, c, h, w) = x.dim();
        if c != self.arch.channels || h != self.arch.image_size || w != self.arch.image_size {
            return Err(contract(format!(
                "classifier expects {}×{}×{}, got {c}×{h}×{w}",
                self.arch.channels, self.arch.image_size, self.arch.image_size
            )));
        }
        Ok(())
    }

    /// Forward pass caching activations for [`PadModel::backward`].
    pub fn forward(&mut self, x: &Tensor, mode: Mode) -> Result<Tensor> {
        self.check_batch(x)?;
        let f = self.features.forward(x, mode);
        let p = self.pool.forward(&f, mode);
        Ok(self.head.forward(&p, mode))
    }

    /// Backpropagates a logit gradient; returns the gradient w.r.t. the input batch.
    pub fn backward(&mut self, grad_logits: &Tensor) -> Tensor {
        let g = self.head.backward(grad_logits);
        let g = self.pool.backward(&g);
        self.features.backward(&g)
    }

    pub fn logits(&self, x: &Tensor) -> Result<Vec<f64>> {
        self.check_batch(x)?;
        let f = self.features.infer(x);
        let out = self.head.infer(&self.pool.infer(&f));
        Ok(out.iter().map(|&z| z as f64).collect())
    }

    /// PA scores in `[0,1]` for a batch.
    pub fn score_batch(&self, x: &Tensor) -> Result<Vec<f64>> {
        Ok(self.logits(x)?.into_iter().map(sigmoid).collect())
    }

    pub fn score(&self, image: &Image) -> Result<f64> {
        Ok(self.score_batch(&stack(&[image]))?[0])
    }

    pub fn score_images(&self, images: &[&Image]) -> Result<Vec<f64>> {
        let parts: Vec<Vec<f64>> = images
            .par_chunks(INFER_CHUNK)
            .map(|chunk| self.score_batch(&stack(chunk)))
            .collect::<Result<_>>()?;
        Ok(parts.concat())
    }

    /// Flattened final convolutional feature map.
    pub fn embed(&self, image: &Image) -> Result<Vec<f32>> {
        let x = stack(&[image]);
        self.check_batch(&x)?;
        Ok(self.features.infer(&x).iter().copied().collect())
    }

    pub fn params(&self) -> Vec<&Param> {
        let mut p = self.features.params();
        p.extend(self.head.params());
        p
    }

    pub fn params_mut(&mut self) -> Vec<&mut Param> {
        let mut p = self.features.params_mut();
        p.extend(self.head.params_mut());
        p
    }

    pub fn weights_hash(&self) -> String {
        checkpoint::weights_hash(&self.params())
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let header = CheckpointHeader {
            format: String::new(),
            kind: "pad".into(),
            backbone: self.arch.backbone.id.clone(),
            config_hash: self.config_hash.clone(),
            seed: self.seed,
            epoch: self.epoch,
            arch: serde_json::to_value(&self.arch)?,
            shapes: vec![],
        };
        checkpoint::write(path, &header, &self.params())
    }

    pub fn load(path: &Path) -> Result<Self> {
        let (header, tensors) = checkpoint::read(path)?;
        if header.kind != "pad" {
            return Err(Error::Checkpoint(format!("{}: expected a pad checkpoint, found {}", path.display(), header.kind)));
        }
        let arch: PadArch = serde_json::from_value(header.arch.clone())?;
        let mut model = Self::new(arch, header.seed)?;
        checkpoint::restore(model.params_mut(), tensors, &header.shapes)?;
        model.epoch = header.epoch;
        model.config_hash = header.config_hash;
        Ok(model)
    }
}

/// Mean clamped BCE of scores against labels.
pub fn bce_loss(scores: &[f64], labels: &[f64]) -> f64 {
    assert_eq!(scores.len(), labels.len(), "bce_loss: length mismatch");
    if scores.is_empty() {
        return 0.0;
    }
    scores.iter().zip(labels).map(|(&p, &y)| bce(p, y)).sum::<f64>() / scores.len() as f64
}

/// Mean BCE and accuracy (threshold 0.5, score ≥ 0.5 is PA) of a model on records.
pub fn evaluate_loss(model: &PadModel, records: &[ImageRecord]) -> Result<(f64, f64)> {
    let images: Vec<&Image> = records.iter().map(|r| &r.pixels).collect();
    let scores = model.score_images(&images)?;
    let labels: Vec<f64> = records.iter().map(|r| r.label.as_f64()).collect();
    let correct = scores.iter().zip(&labels).filter(|(&s, &y)| (s >= 0.5) == (y == 1.0)).count();
    Ok((bce_loss(&scores, &labels), correct as f64 / records.len().max(1) as f64))
}

/// Trains a classifier from scratch with Adam on mean BCE; returns the weights with the lowest validation loss.
pub fn train_standard(
    train: &[ImageRecord],
    val: &[ImageRecord],
    cfg: &PadTrainConfig,
    seed: u64,
) -> Result<(PadModel, TrainReport)> {
    cfg.validate()?;
    if train.is_empty() || val.is_empty() {
        return Err(config("training and validation sets must be non-empty"));
    }
    require_both_classes(train, "training set")?;
    let (channels, h, w) = train[0].pixels.dim();
    if h != w {
        return Err(contract(format!("expected square images, got {h}×{w}")));
    }
    let arch = PadArch { backbone: cfg.backbone.clone(), channels, image_size: h };
    let mut model = PadModel::new(arch, seed)?;
    model.config_hash = checkpoint::config_hash(&(model.arch(), cfg));
    let mut opt = Adam::new(cfg.lr as f32).with_weight_decay(cfg.weight_decay as f32);

    let mut report = TrainReport {
        train_loss: Vec::with_capacity(cfg.epochs),
        val_loss: Vec::with_capacity(cfg.epochs),
        val_accuracy: Vec::with_capacity(cfg.epochs),
        best_epoch: 0,
        weights_hash: String::new(),
        checkpoint: None,
    };
    let mut best: Option<(f64, PadModel)> = None;
    let mut order: Vec<usize> = (0..train.len()).collect();

    for epoch in 0..cfg.epochs {
        let mut rng = seed::rng(seed, &[seed::tag("pad-shuffle"), epoch as u64]);
        order.shuffle(&mut rng);
        let mut loss_sum = 0.0;
        for batch in order.chunks(cfg.batch_size) {
            let images: Vec<&Image> = batch.iter().map(|&i| &train[i].pixels).collect();
            let targets: Vec<f64> = batch.iter().map(|&i| train[i].label.as_f64()).collect();
            let logits = model.forward(&stack(&images), Mode::Train)?;
            let (loss, grad) = bce_with_logits(&logits, &targets);
            model.backward(&grad);
            opt.step(model.params_mut());
            zero_grads(model.params_mut());
            loss_sum += loss * batch.len() as f64;
        }
        let train_loss = loss_sum / train.len() as f64;
        let (val_loss, val_acc) = evaluate_loss(&model, val)?;
        log::debug!("pad epoch {epoch}: train {train_loss:.4} val {val_loss:.4} acc {val_acc:.3}");
        report.train_loss.push(train_loss);
        report.val_loss.push(val_loss);
        report.val_accuracy.push(val_acc);
        model.epoch = epoch + 1;
        if best.as_ref().map_or(true, |(b, _)| val_loss < *b) {
            report.best_epoch = epoch;
            best = Some((val_loss, model.clone()));
        }
    }
    let (_, model) = best.expect("at least one epoch");
    report.weights_hash = model.weights_hash();
    Ok((model, report))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dataset::{Label, Split};
    use ndarray::Array3;

    fn arch() -> PadArch {
        PadArch { backbone: BackboneConfig { id: "small-cnn".into(), widths: vec![4, 8] }, channels: 1, image_size: 16 }
    }

    #[test]
    fn bce_closed_forms() {
        assert!(bce_loss(&[1.0 - 1e-7], &[1.0]) < 1e-6);
        assert!((bce_loss(&[0.5], &[0.0]) - std::f64::consts::LN_2).abs() < 1e-12);
        assert!((bce_loss(&[0.9], &[0.0]) + 0.1f64.ln()).abs() < 1e-12);
        assert!((bce_loss(&[0.5, 0.9], &[0.0, 0.0]) - (std::f64::consts::LN_2 - 0.1f64.ln()) / 2.0).abs() < 1e-12);
        assert!(bce_loss(&[0.0, 1.0], &[1.0, 0.0]).is_finite());
    }

    #[test]
    fn score_is_deterministic_and_bounded() {
        let m = PadModel::new(arch(), 1).unwrap();
        let img = Array3::from_shape_fn((1, 16, 16), |(_, i, j)| ((i * 3 + j) % 7) as f32 / 3.5 - 1.0);
        let s = m.score(&img).unwrap();
        assert!((0.0..=1.0).contains(&s));
        assert_eq!(s, m.score(&img).unwrap());
        assert_eq!(m.embed(&img).unwrap().len(), m.embedding_dim());
        assert_eq!(m.embedding_dim(), 8 * 4 * 4);
    }

    #[test]
    fn shape_mismatch_is_contract_error() {
        let m = PadModel::new(arch(), 1).unwrap();
        let img = Array3::zeros((1, 8, 8));
        assert!(matches!(m.score(&img), Err(Error::Contract(_))));
    }

    #[test]
    fn batch_scores_match_single_scores() {
        let m = PadModel::new(arch(), 2).unwrap();
        let imgs: Vec<Image> = (0..5).map(|k| Array3::from_elem((1, 16, 16), k as f32 * 0.3 - 0.6)).collect();
        let refs: Vec<&Image> = imgs.iter().collect();
        let batch = m.score_images(&refs).unwrap();
        for (img, s) in imgs.iter().zip(batch) {
            assert_eq!(m.score(img).unwrap(), s);
        }
    }

    #[test]
    fn checkpoint_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let mut m = PadModel::new(arch(), 5).unwrap();
        m.epoch = 3;
        let path = dir.path().join("f.ckpt");
        m.save(&path).unwrap();
        let back = PadModel::load(&path).unwrap();
        assert_eq!(back.weights_hash(), m.weights_hash());
        assert_eq!(back.epoch, 3);
        assert_eq!(back.seed, 5);
    }

    #[test]
    fn single_class_training_is_rejected() {
        let r = |i: usize| ImageRecord {
            id: format!("{i}"),
            pixels: Array3::zeros((1, 16, 16)),
            label: Label::Attack,
            split: Split::Train,
            domain: "a".into(),
        };
        let cfg = PadTrainConfig { epochs: 1, ..Default::default() };
        assert!(matches!(train_standard(&[r(0), r(1)], &[r(2)], &cfg, 0), Err(Error::Config(_))));
    }
}
