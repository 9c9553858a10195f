//! Convolutional feature extractors, registered by name and selected from config.

use std::collections::BTreeMap;

use advpad_nn::{BatchNorm2d, Conv2d, DenseBlock, LeakyRelu, Sequential};
use rand::RngCore;
use serde::{Deserialize, Serialize};

use crate::error::{config, Result};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BackboneConfig {
    /// Registry key, e.g. `small-cnn` or `dense-mini`.
    pub id: String,
    /// Stage widths; meaning is backbone-specific.
    pub widths: Vec<usize>,
}

impl Default for BackboneConfig {
    fn default() -> Self {
        Self { id: SmallCnn::ID.into(), widths: vec![16, 32, 64, 64] }
    }
}

/// A built feature extractor: `N×C×S×S` → `N×out_channels×s×s`.
#[derive(Clone)]
pub struct BuiltBackbone {
    pub net: Sequential,
    pub out_channels: usize,
    /// Total spatial downsampling factor.
    pub stride: usize,
}

/// Constructs one backbone family.
pub trait BackboneFactory: Send + Sync {
    fn id(&self) -> &'static str;

    fn describe(&self) -> &'static str;

    fn build(&self, in_channels: usize, widths: &[usize], rng: &mut dyn RngCore) -> Result<BuiltBackbone>;
}

/// Plain stack of `3×3 stride-2 conv → BN → ReLU` blocks, one per width.
pub struct SmallCnn;

impl SmallCnn {
    pub const ID: &'static str = "small-cnn";
}

impl BackboneFactory for SmallCnn {
    fn id(&self) -> &'static str {
        Self::ID
    }

    fn describe(&self) -> &'static str {
        "strided conv blocks (conv3x3/s2, BN, ReLU) per width"
    }

    fn build(&self, in_channels: usize, widths: &[usize], rng: &mut dyn RngCore) -> Result<BuiltBackbone> {
        if widths.is_empty() || widths.contains(&0) {
            return Err(config("small-cnn needs at least one non-zero width"));
        }
        let mut net = Sequential::new();
        let mut c = in_channels;
        for &w in widths {
            net.push(Conv2d::new(c, w, 3, 2, 1, false, rng))
                .push(BatchNorm2d::new(w))
                .push(LeakyRelu::relu());
            c = w;
        }
        Ok(BuiltBackbone { net, out_channels: c, stride: 1 << widths.len() })
    }
}

/// Densely connected stages: a strided stem, then per remaining width a
/// dense block (growth 8, 3 units) followed by a strided transition conv.
pub struct DenseMini;

impl DenseMini {
    pub const ID: &'static str = "dense-mini";
    const GROWTH: usize = 8;
    const UNITS: usize = 3;
}

impl BackboneFactory for DenseMini {
    fn id(&self) -> &'static str {
        Self::ID
    }

    fn describe(&self) -> &'static str {
        "strided stem + dense blocks with strided transitions"
    }

    fn build(&self, in_channels: usize, widths: &[usize], rng: &mut dyn RngCore) -> Result<BuiltBackbone> {
        if widths.len() < 2 || widths.contains(&0) {
            return Err(config("dense-mini needs a stem width plus at least one stage width"));
        }
        let mut net = Sequential::new();
        net.push(Conv2d::new(in_channels, widths[0], 3, 2, 1, false, rng));
        let mut c = widths[0];
        for &w in &widths[1..] {
            let block = DenseBlock::new(c, Self::GROWTH, Self::UNITS, rng);
            let grown = block.out_channels();
            net.push(block)
                .push(BatchNorm2d::new(grown))
                .push(LeakyRelu::relu())
                .push(Conv2d::new(grown, w, 3, 2, 1, false, rng));
            c = w;
        }
        net.push(BatchNorm2d::new(c)).push(LeakyRelu::relu());
        Ok(BuiltBackbone { net, out_channels: c, stride: 1 << widths.len() })
    }
}

/// Name → factory lookup.
pub struct BackboneRegistry {
    factories: BTreeMap<&'static str, Box<dyn BackboneFactory>>,
}

impl Default for BackboneRegistry {
    fn default() -> Self {
        let mut r = Self { factories: BTreeMap::new() };
        r.register(Box::new(SmallCnn));
        r.register(Box::new(DenseMini));
        r
    }
}

impl BackboneRegistry {
    pub fn register(&mut self, factory: Box<dyn BackboneFactory>) {
        self.factories.insert(factory.id(), factory);
    }

    pub fn get(&self, id: &str) -> Result<&dyn BackboneFactory> {
        self.factories.get(id).map(|f| f.as_ref()).ok_or_else(|| {
            config(format!(
                "unknown backbone `{id}` (known: {})",
                self.factories.keys().copied().collect::<Vec<_>>().join(", ")
            ))
        })
    }

    pub fn ids(&self) -> Vec<&'static str> {
        self.factories.keys().copied().collect()
    }

    pub fn build(&self, cfg: &BackboneConfig, in_channels: usize, rng: &mut dyn RngCore) -> Result<BuiltBackbone> {
        self.get(&cfg.id)?.build(in_channels, &cfg.widths, rng)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use advpad_nn::{Layer, Tensor};
    use rand::SeedableRng;

    #[test]
    fn registry_builds_known_backbones() {
        let reg = BackboneRegistry::default();
        assert_eq!(reg.ids(), vec!["dense-mini", "small-cnn"]);
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(0);
        let small = reg.build(&BackboneConfig::default(), 1, &mut rng).unwrap();
        assert_eq!(small.net.infer(&Tensor::zeros((2, 1, 32, 32))).dim(), (2, 64, 2, 2));
        let dense = reg
            .build(&BackboneConfig { id: "dense-mini".into(), widths: vec![8, 16, 24] }, 1, &mut rng)
            .unwrap();
        assert_eq!(dense.net.infer(&Tensor::zeros((1, 1, 32, 32))).dim(), (1, 24, 4, 4));
        assert_eq!(dense.stride, 8);
    }

    #[test]
    fn unknown_backbone_is_a_config_error() {
        let reg = BackboneRegistry::default();
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(0);
        let cfg = BackboneConfig { id: "vgg".into(), widths: vec![8] };
        assert!(matches!(reg.build(&cfg, 1, &mut rng), Err(crate::Error::Config(_))));
    }
}
