//! A deliberately small convolutional network toolkit for CPU training.
//!
//! Every layer owns its parameters and implements an explicit backward pass
//! instead of relying on a tape-based autograd. Tensors are `N×C×H×W`
//! [`ndarray::Array4<f32>`] values. Matrix products go through ndarray's
//! `general_mat_mul`, which is single-threaded and therefore bit-reproducible.

mod act;
mod conv;
mod dense;
mod layer;
mod linear;
pub mod loss;
mod norm;
mod optim;
mod param;

pub use act::{LeakyRelu, Tanh};
pub use conv::{Conv2d, ConvTranspose2d};
pub use dense::DenseBlock;
pub use layer::{Layer, Mode, Sequential};
pub use linear::{GlobalAvgPool, Linear};
pub use norm::BatchNorm2d;
pub use optim::{zero_grads, Adam};
pub use param::Param;

/// Batched image tensor, `N×C×H×W`.
pub type Tensor = ndarray::Array4<f32>;

/// Concatenates two tensors along the channel axis.
pub fn concat_channels(a: &Tensor, b: &Tensor) -> Tensor {
    ndarray::concatenate(ndarray::Axis(1), &[a.view(), b.view()])
        .expect("concat_channels: batch and spatial dims must agree")
}

/// Visits every parameter of a layer (trainable or not) and returns the count.
pub fn parameter_count(layer: &dyn Layer) -> usize {
    layer.params().iter().map(|p| p.value.len()).sum()
}
