use ndarray::{s, Axis};
use rand::RngCore;

use crate::{concat_channels, BatchNorm2d, Conv2d, LeakyRelu, Layer, Mode, Param, Sequential, Tensor};

/// A densely connected block: each unit (BN → ReLU → 3×3 conv) sees the
/// channel-concatenation of the block input and every earlier unit's output.
#[derive(Clone)]
pub struct DenseBlock {
    units: Vec<Sequential>,
    in_channels: usize,
    growth: usize,
}

impl DenseBlock {
    pub fn new(in_channels: usize, growth: usize, units: usize, rng: &mut dyn RngCore) -> Self {
        let units = (0..units)
            .map(|i| {
                let c = in_channels + i * growth;
                let mut seq = Sequential::new();
                seq.push(BatchNorm2d::new(c))
                    .push(LeakyRelu::relu())
                    .push(Conv2d::new(c, growth, 3, 1, 1, false, rng));
                seq
            })
            .collect();
        Self { units, in_channels, growth }
    }

    pub fn out_channels(&self) -> usize {
        self.in_channels + self.units.len() * self.growth
    }
}

impl Layer for DenseBlock {
    fn forward(&mut self, x: &Tensor, mode: Mode) -> Tensor {
        let mut feats = x.clone();
        for unit in &mut self.units {
            let out = unit.forward(&feats, mode);
            feats = concat_channels(&feats, &out);
        }
        feats
    }

    fn infer(&self, x: &Tensor) -> Tensor {
        let mut feats = x.clone();
        for unit in &self.units {
            let out = unit.infer(&feats);
            feats = concat_channels(&feats, &out);
        }
        feats
    }

    fn backward(&mut self, grad: &Tensor) -> Tensor {
        let mut g = grad.clone();
        for (i, unit) in self.units.iter_mut().enumerate().rev() {
            let c = self.in_channels + i * self.growth;
            let g_out = g.slice(s![.., c.., .., ..]).to_owned();
            let g_in = unit.backward(&g_out);
            let mut prefix = g.slice(s![.., ..c, .., ..]).to_owned();
            prefix += &g_in;
            g = prefix;
        }
        debug_assert_eq!(g.len_of(Axis(1)), self.in_channels);
        g
    }

    fn params(&self) -> Vec<&Param> {
        self.units.iter().flat_map(|u| u.params()).collect()
    }

    fn params_mut(&mut self) -> Vec<&mut Param> {
        self.units.iter_mut().flat_map(|u| u.params_mut()).collect()
    }

    fn box_clone(&self) -> Box<dyn Layer> {
        Box::new(self.clone())
    }

    fn describe(&self) -> String {
        format!("DenseBlock(in {}, growth {}, units {})", self.in_channels, self.growth, self.units.len())
    }
}
