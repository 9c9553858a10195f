use ndarray::{ArrayD, IxDyn};
use rand::Rng;
use rand::RngCore;

/// A named weight tensor with its accumulated gradient.
///
/// Non-trainable parameters (batch-norm running statistics) are stored the
/// same way so that checkpoints and weight hashes see the full model state.
#[derive(Clone, Debug)]
pub struct Param {
    pub value: ArrayD<f32>,
    pub grad: ArrayD<f32>,
    pub trainable: bool,
}

impl Param {
    pub fn zeros(shape: &[usize]) -> Self {
        Self {
            value: ArrayD::zeros(IxDyn(shape)),
            grad: ArrayD::zeros(IxDyn(shape)),
            trainable: true,
        }
    }

    pub fn filled(shape: &[usize], v: f32) -> Self {
        let mut p = Self::zeros(shape);
        p.value.fill(v);
        p
    }

    pub fn uniform(shape: &[usize], bound: f32, rng: &mut dyn RngCore) -> Self {
        let mut p = Self::zeros(shape);
        p.value.mapv_inplace(|_| rng.gen_range(-bound..bound));
        p
    }

    pub fn buffer(shape: &[usize], v: f32) -> Self {
        let mut p = Self::filled(shape, v);
        p.trainable = false;
        p
    }

    pub fn zero_grad(&mut self) {
        self.grad.fill(0.0);
    }
}
