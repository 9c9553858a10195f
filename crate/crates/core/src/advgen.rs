//! Transform-conditioned convolutional autoencoder trained against a frozen classifier.

use std::path::Path;

use advpad_nn::loss::{bce, mse as mse_grad, sigmoid};
use advpad_nn::{
    concat_channels, zero_grads, Adam, BatchNorm2d, Conv2d, ConvTranspose2d, Layer, LeakyRelu, Linear, Mode, Param,
    Sequential, Tanh, Tensor,
};
use ndarray::{s, Array4};
use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use crate::candidates::{quantize_model_range, transform_target, AdversarialCandidate};
use crate::checkpoint::{self, CheckpointHeader};
use crate::dataset::ImageRecord;
use crate::error::{config, contract, Error, Result};
use crate::pad::PadModel;
use crate::pixels::{self, stack, Image};
use crate::seed;
use crate::transform::{TransformSpace, TransformVector, NUM_PARAMS};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DualLossConfig {
    pub lambda: f64,
}

impl Default for DualLossConfig {
    fn default() -> Self {
        Self { lambda: 0.1 }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CaeConfig {
    /// Encoder widths, one stride-2 block each.
    pub widths: Vec<usize>,
    pub lr: f64,
    pub epochs: usize,
    pub batch_size: usize,
    pub loss: DualLossConfig,
    /// Reconstruction level a pure-reconstruction run is expected to reach.
    pub res_threshold: f64,
}

impl Default for CaeConfig {
    fn default() -> Self {
        Self {
            widths: vec![32, 64, 128, 256, 512],
            lr: 1e-4,
            epochs: 500,
            batch_size: 16,
            loss: DualLossConfig::default(),
            res_threshold: 0.02,
        }
    }
}

impl CaeConfig {
    pub fn validate(&self) -> Result<()> {
        if self.widths.is_empty() || self.widths.contains(&0) {
            return Err(config("cae widths must be non-empty and non-zero"));
        }
        if !(self.lr > 0.0) || self.epochs == 0 || self.batch_size == 0 {
            return Err(config("cae training needs lr > 0, epochs ≥ 1, batch_size ≥ 1"));
        }
        if !(self.loss.lambda >= 0.0) {
            return Err(config("lambda must be ≥ 0"));
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CaeArch {
    pub channels: usize,
    pub image_size: usize,
    pub widths: Vec<usize>,
    /// Whether the transform vector is injected as an extra input plane.
    pub conditioned: bool,
}

#[derive(Clone)]
pub struct CaeModel {
    arch: CaeArch,
    inject: Option<Linear>,
    encoder: Sequential,
    decoder: Sequential,
    pub seed: u64,
    pub epoch: usize,
}

impl CaeModel {
    pub fn new(arch: CaeArch, seed: u64) -> Result<Self> {
        let levels = arch.widths.len();
        if arch.widths.is_empty() || arch.image_size % (1 << levels) != 0 {
            return Err(config(format!(
                "image_size {} must be divisible by 2^{levels} for {levels} encoder blocks",
                arch.image_size
            )));
        }
        let mut rng = seed::rng(seed, &[seed::tag("cae-init")]);
        let pixels = arch.image_size * arch.image_size;
        let inject = arch.conditioned.then(|| Linear::new(NUM_PARAMS, pixels, &mut rng));
        let mut encoder = Sequential::new();
        let mut c = arch.channels + arch.conditioned as usize;
        for &w in &arch.widths {
            encoder.push(Conv2d::new(c, w, 4, 2, 1, false, &mut rng)).push(BatchNorm2d::new(w)).push(LeakyRelu::new(0.2));
            c = w;
        }
        let mut decoder = Sequential::new();
        for i in (0..levels).rev() {
            let w = arch.widths[i.saturating_sub(1)];
            decoder
                .push(ConvTranspose2d::new(c, w, 4, 2, 1, false, &mut rng))
                .push(BatchNorm2d::new(w))
                .push(LeakyRelu::new(0.2));
            c = w;
        }
        decoder.push(Conv2d::new(c, arch.channels, 3, 1, 1, true, &mut rng)).push(Tanh::new());
        Ok(Self { arch, inject, encoder, decoder, seed, epoch: 0 })
    }

    pub fn arch(&self) -> &CaeArch {
        &self.arch
    }

    pub fn input_channels(&self) -> usize {
        self.arch.channels + self.arch.conditioned as usize
    }

    /// Appends the injected transform plane to a batch; unconditioned models pass the batch through.
    pub fn inject_params(&self, x: &Tensor, t_norm: &[Vec<f64>]) -> Result<Tensor> {
        self.check_input(x)?;
        match &self.inject {
            Some(head) => Ok(attach_plane(x, head.infer(&param_batch(x.dim().0, t_norm)?))),
            None => Ok(x.clone()),
        }
    }

    fn check_input(&self, x: &Tensor) -> Result<()> {
        let (_, c, h, w) = x.dim();
        if c != self.arch.channels || h != self.arch.image_size || w != self.arch.image_size {
            return Err(contract(format!(
                "autoencoder expects {}×{s}×{s}, got {c}×{h}×{w}",
                self.arch.channels,
                s = self.arch.image_size
            )));
        }
        Ok(())
    }

    fn forward_train(&mut self, x: &Tensor, t_norm: &[Vec<f64>]) -> Result<Tensor> {
        self.check_input(x)?;
        let input = match &mut self.inject {
            Some(head) => attach_plane(x, head.forward(&param_batch(x.dim().0, t_norm)?, Mode::Train)),
            None => x.clone(),
        };
        let z = self.encoder.forward(&input, Mode::Train);
        Ok(self.decoder.forward(&z, Mode::Train))
    }

    fn backward(&mut self, grad: &Tensor) {
        let g = self.decoder.backward(grad);
        let g = self.encoder.backward(&g);
        if let Some(head) = &mut self.inject {
            let (n, _, h, w) = g.dim();
            let plane = g.slice(s![.., self.arch.channels.., .., ..]).to_owned();
            head.backward(&plane.into_shape_with_order((n, h * w, 1, 1)).expect("plane gradient"));
        }
    }

    /// Inference-mode reconstruction, output in `[-1,1]`.
    pub fn reconstruct(&self, x: &Tensor, t_norm: &[Vec<f64>]) -> Result<Tensor> {
        let input = self.inject_params(x, t_norm)?;
        Ok(self.decoder.infer(&self.encoder.infer(&input)))
    }

    pub fn params(&self) -> Vec<&Param> {
        let mut p: Vec<&Param> = self.inject.iter().flat_map(|l| l.params()).collect();
        p.extend(self.encoder.params());
        p.extend(self.decoder.params());
        p
    }

    pub fn params_mut(&mut self) -> Vec<&mut Param> {
        let mut p: Vec<&mut Param> = self.inject.iter_mut().flat_map(|l| l.params_mut()).collect();
        p.extend(self.encoder.params_mut());
        p.extend(self.decoder.params_mut());
        p
    }

    /// Injection-head parameters (weight, bias), if conditioned.
    pub fn inject_params_mut(&mut self) -> Vec<&mut Param> {
        self.inject.iter_mut().flat_map(|l| l.params_mut()).collect()
    }

    pub fn weights_hash(&self) -> String {
        checkpoint::weights_hash(&self.params())
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let header = CheckpointHeader {
            format: String::new(),
            kind: "cae".into(),
            backbone: if self.arch.conditioned { "cae".into() } else { "cae-noparams".into() },
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
        if header.kind != "cae" {
            return Err(Error::Checkpoint(format!("{}: expected a cae checkpoint, found {}", path.display(), header.kind)));
        }
        let mut model = Self::new(serde_json::from_value(header.arch)?, header.seed)?;
        checkpoint::restore(model.params_mut(), tensors, &header.shapes)?;
        model.epoch = header.epoch;
        Ok(model)
    }
}

fn param_batch(n: usize, t_norm: &[Vec<f64>]) -> Result<Tensor> {
    if t_norm.len() != n || t_norm.iter().any(|t| t.len() != NUM_PARAMS) {
        return Err(contract(format!("expected {n} transform vectors of length {NUM_PARAMS}")));
    }
    Ok(Array4::from_shape_fn((n, NUM_PARAMS, 1, 1), |(i, k, _, _)| t_norm[i][k] as f32))
}

fn attach_plane(x: &Tensor, plane: Tensor) -> Tensor {
    let (n, _, h, w) = x.dim();
    concat_channels(x, &plane.into_shape_with_order((n, 1, h, w)).expect("injection plane is H·W"))
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct CaeLoss {
    pub total: f64,
    pub res: f64,
    pub adv: f64,
}

/// Reconstruction plus λ-weighted inverted-label BCE against classifier scores.
pub fn cae_loss(x_prime: &Tensor, target: &Tensor, y_hat: &[f64], y: &[f64], cfg: &DualLossConfig) -> Result<CaeLoss> {
    if x_prime.dim() != target.dim() {
        return Err(contract(format!("cae_loss: {:?} vs {:?}", x_prime.dim(), target.dim())));
    }
    if y_hat.len() != y.len() || y.is_empty() {
        return Err(contract("cae_loss: score/label length mismatch"));
    }
    let n = x_prime.len() as f64;
    let res = x_prime.iter().zip(target.iter()).map(|(&a, &b)| ((a - b) as f64).powi(2)).sum::<f64>() / n;
    let adv = y_hat.iter().zip(y).map(|(&p, &yi)| bce(p, 1.0 - yi)).sum::<f64>() / y.len() as f64;
    Ok(CaeLoss { total: res + cfg.lambda * adv, res, adv })
}

/// Loss plus gradients w.r.t. the reconstruction and the classifier logits.
pub fn cae_loss_with_grad(
    x_prime: &Tensor,
    target: &Tensor,
    logits: &[f64],
    y: &[f64],
    cfg: &DualLossConfig,
) -> Result<(CaeLoss, Tensor, Vec<f64>)> {
    let y_hat: Vec<f64> = logits.iter().map(|&z| sigmoid(z)).collect();
    let loss = cae_loss(x_prime, target, &y_hat, y, cfg)?;
    let (_, grad_x) = mse_grad(x_prime, target);
    let n = y.len() as f64;
    let grad_z = y_hat.iter().zip(y).map(|(&p, &yi)| cfg.lambda * (p - (1.0 - yi)) / n).collect();
    Ok((loss, grad_x, grad_z))
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct CaeReport {
    pub total: Vec<f64>,
    pub res: Vec<f64>,
    pub adv: Vec<f64>,
    pub classifier_hash: String,
    pub weights_hash: String,
}

/// Trains the conditioned generator: targets are `t·x` for a fresh `t` per image per epoch.
pub fn train_advgen(
    train: &[ImageRecord],
    classifier: &PadModel,
    space: &TransformSpace,
    cfg: &CaeConfig,
    seed: u64,
) -> Result<(CaeModel, CaeReport)> {
    train_impl(train, classifier, Some(space), cfg, seed)
}

/// Ablation generator: no injected plane, target is the untransformed input.
pub fn train_advgen_noparams(
    train: &[ImageRecord],
    classifier: &PadModel,
    cfg: &CaeConfig,
    seed: u64,
) -> Result<(CaeModel, CaeReport)> {
    train_impl(train, classifier, None, cfg, seed)
}

fn train_impl(
    train: &[ImageRecord],
    classifier: &PadModel,
    space: Option<&TransformSpace>,
    cfg: &CaeConfig,
    seed: u64,
) -> Result<(CaeModel, CaeReport)> {
    cfg.validate()?;
    if train.is_empty() {
        return Err(config("autoencoder training set is empty"));
    }
    let (channels, h, _) = train[0].pixels.dim();
    let arch = CaeArch { channels, image_size: h, widths: cfg.widths.clone(), conditioned: space.is_some() };
    let mut cae = CaeModel::new(arch, seed)?;
    let mut opt = Adam::new(cfg.lr as f32);
    let frozen_hash = classifier.weights_hash();
    let mut frozen = classifier.clone();
    let labels: Vec<f64> = train.iter().map(|r| r.label.as_f64()).collect();
    let mut report = CaeReport { classifier_hash: frozen_hash.clone(), ..Default::default() };
    let mut order: Vec<usize> = (0..train.len()).collect();

    for epoch in 0..cfg.epochs {
        let mut rng = seed::rng(seed, &[seed::tag("cae-epoch"), epoch as u64]);
        let ts: Vec<TransformVector> = match space {
            Some(sp) => (0..train.len()).map(|_| sp.sample(&mut rng)).collect(),
            None => vec![TransformVector::identity(); train.len()],
        };
        order.shuffle(&mut rng);
        let mut sums = [0.0; 3];
        for batch in order.chunks(cfg.batch_size) {
            let xs: Vec<&Image> = batch.iter().map(|&i| &train[i].pixels).collect();
            let targets: Vec<Image> = match space {
                Some(_) => batch.iter().map(|&i| transform_target(&train[i].pixels, &ts[i])).collect::<Result<_>>()?,
                None => xs.iter().map(|x| (*x).clone()).collect(),
            };
            let t_norm: Vec<Vec<f64>> = match space {
                Some(sp) => batch.iter().map(|&i| sp.normalize(&ts[i]).map(|u| u.to_vec())).collect::<Result<_>>()?,
                None => vec![],
            };
            let y: Vec<f64> = batch.iter().map(|&i| labels[i]).collect();
            let x = stack(&xs);
            let target = stack(&targets.iter().collect::<Vec<_>>());
            let out = cae.forward_train(&x, &t_norm)?;
            let logits_t = frozen.forward(&out, Mode::Eval)?;
            let logits: Vec<f64> = logits_t.iter().map(|&z| z as f64).collect();
            let (loss, mut grad, grad_z) = cae_loss_with_grad(&out, &target, &logits, &y, &cfg.loss)?;
            if cfg.loss.lambda > 0.0 {
                let gz = Array4::from_shape_fn(logits_t.raw_dim(), |(i, _, _, _)| grad_z[i] as f32);
                grad += &frozen.backward(&gz);
                zero_grads(frozen.params_mut());
            }
            cae.backward(&grad);
            opt.step(cae.params_mut());
            zero_grads(cae.params_mut());
            let b = batch.len() as f64;
            sums[0] += loss.total * b;
            sums[1] += loss.res * b;
            sums[2] += loss.adv * b;
        }
        let n = train.len() as f64;
        report.total.push(sums[0] / n);
        report.res.push(sums[1] / n);
        report.adv.push(sums[2] / n);
        log::debug!("cae epoch {epoch}: total {:.5} res {:.5} adv {:.4}", sums[0] / n, sums[1] / n, sums[2] / n);
        if frozen.weights_hash() != frozen_hash {
            return Err(Error::Integrity(format!("classifier weights changed during autoencoder epoch {epoch}")));
        }
        cae.epoch = epoch + 1;
    }
    if classifier.weights_hash() != frozen_hash {
        return Err(Error::Integrity("classifier weights changed during autoencoder training".into()));
    }
    report.weights_hash = cae.weights_hash();
    Ok((cae, report))
}

/// Generates candidates for a batch of records, each with its own transform.
pub fn generate_batch(
    cae: &CaeModel,
    records: &[&ImageRecord],
    ts: &[TransformVector],
    classifier: &PadModel,
    space: &TransformSpace,
) -> Result<Vec<AdversarialCandidate>> {
    if records.len() != ts.len() {
        return Err(contract("generate: one transform per record required"));
    }
    if records.is_empty() {
        return Ok(vec![]);
    }
    let xs: Vec<&Image> = records.iter().map(|r| &r.pixels).collect();
    let t_norm: Vec<Vec<f64>> = if cae.arch().conditioned {
        ts.iter().map(|t| space.normalize(t).map(|u| u.to_vec())).collect::<Result<_>>()?
    } else {
        vec![]
    };
    let out = cae.reconstruct(&stack(&xs), &t_norm)?;
    let images: Vec<Image> = out.outer_iter().map(|v| quantize_model_range(&v.to_owned())).collect();
    let scores = classifier.score_images(&images.iter().collect::<Vec<_>>())?;
    records
        .iter()
        .zip(ts)
        .zip(images)
        .zip(scores)
        .map(|(((r, t), img), f_score)| {
            let target = if cae.arch().conditioned { transform_target(&r.pixels, t)? } else { r.pixels.clone() };
            Ok(AdversarialCandidate {
                id: r.id.clone(),
                source_id: r.id.clone(),
                label: r.label,
                t: *t,
                mse: pixels::mse(&img, &target),
                f_score,
                image: Some(img),
                embedding: None,
                selected: false,
            })
        })
        .collect()
}

/// Single-image convenience wrapper around [`generate_batch`].
pub fn generate(
    cae: &CaeModel,
    record: &ImageRecord,
    t: &TransformVector,
    classifier: &PadModel,
    space: &TransformSpace,
) -> Result<AdversarialCandidate> {
    Ok(generate_batch(cae, &[record], &[*t], classifier, space)?.remove(0))
}

/// One freshly sampled inference transform per record, seeded by position.
pub fn sample_inference_transforms(space: &TransformSpace, count: usize, seed: u64) -> Vec<TransformVector> {
    let mut rng = seed::rng(seed, &[seed::tag("inference-transforms")]);
    (0..count).map(|_| space.sample(&mut rng)).collect()
}
