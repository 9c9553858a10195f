use crate::{Layer, Mode, Tensor};

/// LeakyReLU; a slope of zero gives a plain ReLU.
#[derive(Clone, Debug)]
pub struct LeakyRelu {
    slope: f32,
    input: Option<Tensor>,
}

impl LeakyRelu {
    pub fn new(slope: f32) -> Self {
        Self { slope, input: None }
    }

    pub fn relu() -> Self {
        Self::new(0.0)
    }
}

impl Layer for LeakyRelu {
    fn forward(&mut self, x: &Tensor, _mode: Mode) -> Tensor {
        self.input = Some(x.clone());
        self.infer(x)
    }

    fn infer(&self, x: &Tensor) -> Tensor {
        let s = self.slope;
        x.mapv(|v| if v > 0.0 { v } else { s * v })
    }

    fn backward(&mut self, grad: &Tensor) -> Tensor {
        let x = self.input.as_ref().expect("LeakyRelu::backward before forward");
        let s = self.slope;
        let mut g = grad.clone();
        ndarray::Zip::from(&mut g).and(x).for_each(|g, &x| {
            if x <= 0.0 {
                *g *= s;
            }
        });
        g
    }

    fn box_clone(&self) -> Box<dyn Layer> {
        Box::new(Self::new(self.slope))
    }

    fn describe(&self) -> String {
        if self.slope == 0.0 {
            "ReLU".into()
        } else {
            format!("LeakyReLU({})", self.slope)
        }
    }
}

#[derive(Clone, Debug, Default)]
pub struct Tanh {
    output: Option<Tensor>,
}

impl Tanh {
    pub fn new() -> Self {
        Self::default()
    }
}

impl Layer for Tanh {
    fn forward(&mut self, x: &Tensor, _mode: Mode) -> Tensor {
        let y = self.infer(x);
        self.output = Some(y.clone());
        y
    }

    fn infer(&self, x: &Tensor) -> Tensor {
        x.mapv(f32::tanh)
    }

    fn backward(&mut self, grad: &Tensor) -> Tensor {
        let y = self.output.as_ref().expect("Tanh::backward before forward");
        let mut g = grad.clone();
        ndarray::Zip::from(&mut g).and(y).for_each(|g, &y| *g *= 1.0 - y * y);
        g
    }

    fn box_clone(&self) -> Box<dyn Layer> {
        Box::new(Self::new())
    }

    fn describe(&self) -> String {
        "Tanh".into()
    }
}
