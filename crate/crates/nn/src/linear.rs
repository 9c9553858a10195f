use ndarray::linalg::general_mat_mul;
use ndarray::{Array2, Ix2};
use rand::RngCore;

use crate::{Layer, Mode, Param, Tensor};

/// Fully connected layer. Any `N×C×H×W` input is flattened to `N×(C·H·W)`;
/// the output is `N×out×1×1`.
#[derive(Clone)]
pub struct Linear {
    weight: Param,
    bias: Param,
    in_features: usize,
    out_features: usize,
    cache: Option<(Array2<f32>, (usize, usize, usize, usize))>,
}

impl Linear {
    pub fn new(in_features: usize, out_features: usize, rng: &mut dyn RngCore) -> Self {
        let bound = 1.0 / (in_features as f32).sqrt();
        Self {
            weight: Param::uniform(&[out_features, in_features], bound, rng),
            bias: Param::uniform(&[out_features], bound, rng),
            in_features,
            out_features,
            cache: None,
        }
    }

    pub fn in_features(&self) -> usize {
        self.in_features
    }

    pub fn out_features(&self) -> usize {
        self.out_features
    }

    fn flat(&self, x: &Tensor) -> Array2<f32> {
        let (n, c, h, w) = x.dim();
        assert_eq!(c * h * w, self.in_features, "Linear: expected {} input features", self.in_features);
        x.as_standard_layout()
            .into_owned()
            .into_shape_with_order((n, c * h * w))
            .expect("flatten")
    }

    fn run(&self, xf: &Array2<f32>) -> Tensor {
        let n = xf.nrows();
        let w = self.weight.value.view().into_dimensionality::<Ix2>().expect("2-D weight");
        let mut y = Array2::<f32>::zeros((n, self.out_features));
        general_mat_mul(1.0, xf, &w.t(), 0.0, &mut y);
        for mut row in y.rows_mut() {
            row.iter_mut().zip(self.bias.value.iter()).for_each(|(v, b)| *v += b);
        }
        y.into_shape_with_order((n, self.out_features, 1, 1)).expect("reshape")
    }
}

impl Layer for Linear {
    fn forward(&mut self, x: &Tensor, _mode: Mode) -> Tensor {
        let xf = self.flat(x);
        let y = self.run(&xf);
        self.cache = Some((xf, x.dim()));
        y
    }

    fn infer(&self, x: &Tensor) -> Tensor {
        self.run(&self.flat(x))
    }

    fn backward(&mut self, grad: &Tensor) -> Tensor {
        let (xf, shape) = self.cache.as_ref().expect("Linear::backward before forward");
        let n = grad.dim().0;
        let g = grad
            .as_standard_layout()
            .into_owned()
            .into_shape_with_order((n, self.out_features))
            .expect("grad reshape");
        {
            let mut dw = self.weight.grad.view_mut().into_dimensionality::<Ix2>().expect("2-D");
            general_mat_mul(1.0, &g.t(), xf, 1.0, &mut dw);
        }
        for row in g.rows() {
            self.bias.grad.iter_mut().zip(row.iter()).for_each(|(b, v)| *b += v);
        }
        let w = self.weight.value.view().into_dimensionality::<Ix2>().expect("2-D weight");
        let mut dx = Array2::<f32>::zeros((n, self.in_features));
        general_mat_mul(1.0, &g, &w, 0.0, &mut dx);
        dx.into_shape_with_order(*shape).expect("dx reshape")
    }

    fn params(&self) -> Vec<&Param> {
        vec![&self.weight, &self.bias]
    }

    fn params_mut(&mut self) -> Vec<&mut Param> {
        vec![&mut self.weight, &mut self.bias]
    }

    fn box_clone(&self) -> Box<dyn Layer> {
        Box::new(Self { cache: None, ..self.clone() })
    }

    fn describe(&self) -> String {
        format!("Linear({}->{})", self.in_features, self.out_features)
    }
}

/// Spatial mean per channel: `N×C×H×W` → `N×C×1×1`.
#[derive(Clone, Default)]
pub struct GlobalAvgPool {
    in_hw: (usize, usize),
}

impl GlobalAvgPool {
    pub fn new() -> Self {
        Self::default()
    }
}

impl Layer for GlobalAvgPool {
    fn forward(&mut self, x: &Tensor, _mode: Mode) -> Tensor {
        let (_, _, h, w) = x.dim();
        self.in_hw = (h, w);
        self.infer(x)
    }

    fn infer(&self, x: &Tensor) -> Tensor {
        let (n, c, h, w) = x.dim();
        let area = (h * w) as f32;
        Tensor::from_shape_fn((n, c, 1, 1), |(ni, ci, _, _)| {
            x.slice(ndarray::s![ni, ci, .., ..]).sum() / area
        })
    }

    fn backward(&mut self, grad: &Tensor) -> Tensor {
        let (n, c, _, _) = grad.dim();
        let (h, w) = self.in_hw;
        let area = (h * w) as f32;
        Tensor::from_shape_fn((n, c, h, w), |(ni, ci, _, _)| grad[[ni, ci, 0, 0]] / area)
    }

    fn box_clone(&self) -> Box<dyn Layer> {
        Box::new(self.clone())
    }

    fn describe(&self) -> String {
        "GlobalAvgPool".into()
    }
}
