//! Frozen feature extractor used for selection, pre-trained on a rotation-prediction task.

use std::path::Path;

use advpad_nn::loss::softmax_cross_entropy;
use advpad_nn::{zero_grads, Adam, GlobalAvgPool, Layer, Linear, Mode, Param, Sequential, Tensor};
use ndarray::{s, Axis};
use rand::seq::SliceRandom;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::backbone::{BackboneConfig, BackboneRegistry};
use crate::checkpoint::{self, CheckpointHeader};
use crate::error::{config, contract, Error, Result};
use crate::pixels::{stack, Image};
use crate::seed;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EmbedderConfig {
    pub backbone: BackboneConfig,
    pub epochs: usize,
    pub lr: f64,
    pub batch_size: usize,
}

impl Default for EmbedderConfig {
    fn default() -> Self {
        Self { backbone: BackboneConfig::default(), epochs: 3, lr: 1e-3, batch_size: 32 }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EmbedderArch {
    pub backbone: BackboneConfig,
    pub channels: usize,
    pub image_size: usize,
}

#[derive(Clone)]
pub struct Embedder {
    arch: EmbedderArch,
    features: Sequential,
    pool: GlobalAvgPool,
    head: Linear,
    dim: usize,
    pub seed: u64,
    pub epoch: usize,
}

/// Rotates a square image by `k` quarter turns counter-clockwise.
pub fn rot90(img: &Image, k: usize) -> Image {
    let mut v = img.view();
    for _ in 0..k % 4 {
        v.swap_axes(1, 2);
        v.invert_axis(Axis(1));
    }
    v.to_owned()
}

impl Embedder {
    pub fn new(arch: EmbedderArch, seed: u64) -> Result<Self> {
        let mut rng = seed::rng(seed, &[seed::tag("embedder-init")]);
        let built = BackboneRegistry::default().build(&arch.backbone, arch.channels, &mut rng)?;
        let probe = built.net.infer(&Tensor::zeros((1, arch.channels, arch.image_size, arch.image_size)));
        let (_, c, h, w) = probe.dim();
        if h == 0 || w == 0 {
            return Err(config("image too small for embedding backbone"));
        }
        let head = Linear::new(c, 4, &mut rng);
        Ok(Self { arch, features: built.net, pool: GlobalAvgPool::new(), head, dim: c * h * w, seed, epoch: 0 })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn backbone_id(&self) -> &str {
        &self.arch.backbone.id
    }

    fn check(&self, img: &Image) -> Result<()> {
        let s = self.arch.image_size;
        if img.dim() != (self.arch.channels, s, s) {
            return Err(contract(format!("embedder expects {}×{s}×{s}, got {:?}", self.arch.channels, img.dim())));
        }
        Ok(())
    }

    /// Flattened final feature map.
    pub fn embed(&self, img: &Image) -> Result<Vec<f32>> {
        self.check(img)?;
        Ok(self.features.infer(&stack(&[img])).iter().copied().collect())
    }

    pub fn embed_all(&self, images: &[&Image]) -> Result<Vec<Vec<f32>>> {
        for img in images {
            self.check(img)?;
        }
        let parts: Vec<Vec<Vec<f32>>> = images
            .par_chunks(32)
            .map(|chunk| {
                let f = self.features.infer(&stack(chunk));
                f.outer_iter().map(|v| v.iter().copied().collect()).collect()
            })
            .collect();
        Ok(parts.concat())
    }

    pub fn params(&self) -> Vec<&Param> {
        let mut p = self.features.params();
        p.extend(self.head.params());
        p
    }

    fn params_mut(&mut self) -> Vec<&mut Param> {
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
            kind: "embedder".into(),
            backbone: self.arch.backbone.id.clone(),
            config_hash: checkpoint::config_hash(&self.arch),
            seed: self.seed,
            epoch: self.epoch,
            arch: serde_json::to_value(&self.arch)?,
            shapes: vec![],
        };
        checkpoint::write(path, &header, &self.params())
    }

    pub fn load(path: &Path) -> Result<Self> {
        let (header, tensors) = checkpoint::read(path)?;
        if header.kind != "embedder" {
            return Err(Error::Checkpoint(format!("{}: expected an embedder checkpoint", path.display())));
        }
        let mut m = Self::new(serde_json::from_value(header.arch)?, header.seed)?;
        checkpoint::restore(m.params_mut(), tensors, &header.shapes)?;
        m.epoch = header.epoch;
        Ok(m)
    }
}

/// Trains the backbone to predict which of four quarter-turns was applied; labels are never used.
pub fn pretrain_rotation(images: &[&Image], cfg: &EmbedderConfig, seed: u64) -> Result<(Embedder, Vec<f64>)> {
    if images.is_empty() {
        return Err(config("embedder pre-training needs images"));
    }
    if cfg.epochs == 0 || cfg.batch_size == 0 || !(cfg.lr > 0.0) {
        return Err(config("embedder needs epochs ≥ 1, batch_size ≥ 1, lr > 0"));
    }
    let (channels, h, w) = images[0].dim();
    if h != w {
        return Err(contract("rotation pretext needs square images"));
    }
    let arch = EmbedderArch { backbone: cfg.backbone.clone(), channels, image_size: h };
    let mut model = Embedder::new(arch, seed)?;
    let mut opt = Adam::new(cfg.lr as f32);
    let mut curve = Vec::with_capacity(cfg.epochs);
    let mut order: Vec<usize> = (0..images.len()).collect();
    for epoch in 0..cfg.epochs {
        let mut rng = seed::rng(seed, &[seed::tag("embedder-epoch"), epoch as u64]);
        order.shuffle(&mut rng);
        let mut sum = 0.0;
        for batch in order.chunks(cfg.batch_size) {
            let rotated: Vec<Image> = batch.iter().enumerate().map(|(j, &i)| rot90(images[i], (i + j + epoch) % 4)).collect();
            let targets: Vec<usize> = batch.iter().enumerate().map(|(j, &i)| (i + j + epoch) % 4).collect();
            let x = stack(&rotated.iter().collect::<Vec<_>>());
            let f = model.features.forward(&x, Mode::Train);
            let p = model.pool.forward(&f, Mode::Train);
            let logits = model.head.forward(&p, Mode::Train);
            let (loss, grad) = softmax_cross_entropy(&logits, &targets);
            let g = model.head.backward(&grad);
            let g = model.pool.backward(&g);
            model.features.backward(&g);
            opt.step(model.params_mut());
            zero_grads(model.params_mut());
            sum += loss * batch.len() as f64;
        }
        curve.push(sum / images.len() as f64);
        model.epoch = epoch + 1;
    }
    Ok((model, curve))
}

/// Fraction of images whose rotation is predicted correctly.
pub fn rotation_accuracy(model: &Embedder, images: &[&Image]) -> f64 {
    let mut correct = 0;
    for (i, img) in images.iter().enumerate() {
        let k = i % 4;
        let x = stack(&[&rot90(img, k)]);
        let logits = model.head.infer(&model.pool.infer(&model.features.infer(&x)));
        let row = logits.slice(s![0, .., 0, 0]);
        let best = (0..4).max_by(|&a, &b| row[a].total_cmp(&row[b]).then(b.cmp(&a))).unwrap_or(0);
        correct += (best == k) as usize;
    }
    correct as f64 / images.len().max(1) as f64
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::Array3;

    #[test]
    fn rot90_cycles() {
        let img = Array3::from_shape_fn((1, 3, 3), |(_, i, j)| (i * 3 + j) as f32);
        let r = rot90(&img, 1);
        assert_eq!(r[[0, 0, 0]], 2.0);
        assert_eq!(r[[0, 2, 0]], 0.0);
        assert_eq!(rot90(&img, 4), img);
        assert_eq!(rot90(&rot90(&img, 1), 3), img);
    }

    #[test]
    fn embedding_is_deterministic_with_documented_length() {
        let arch = EmbedderArch { backbone: BackboneConfig::default(), channels: 1, image_size: 32 };
        let m = Embedder::new(arch, 0).unwrap();
        assert_eq!(m.dim(), 64 * 2 * 2);
        let img = Array3::from_shape_fn((1, 32, 32), |(_, i, j)| ((i ^ j) % 5) as f32 / 2.5 - 1.0);
        let a = m.embed(&img).unwrap();
        assert_eq!(a.len(), 256);
        assert_eq!(a, m.embed(&img).unwrap());
        assert_eq!(m.embed_all(&[&img]).unwrap()[0], a);
    }
}
