use ndarray::ArrayD;

use crate::Param;

/// Adam with bias correction and optional decoupled-free (L2) weight decay.
#[derive(Clone, Debug)]
pub struct Adam {
    pub lr: f32,
    pub beta1: f32,
    pub beta2: f32,
    pub eps: f32,
    pub weight_decay: f32,
    step: u32,
    moments: Vec<(ArrayD<f32>, ArrayD<f32>)>,
}

impl Adam {
    pub fn new(lr: f32) -> Self {
        Self {
            lr,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            weight_decay: 0.0,
            step: 0,
            moments: Vec::new(),
        }
    }

    pub fn with_weight_decay(mut self, wd: f32) -> Self {
        self.weight_decay = wd;
        self
    }

    /// Applies one update to every trainable parameter. The parameter list
    /// must be presented in the same order on every call.
    pub fn step(&mut self, params: Vec<&mut Param>) {
        self.step += 1;
        let bc1 = 1.0 - self.beta1.powi(self.step as i32);
        let bc2 = 1.0 - self.beta2.powi(self.step as i32);
        let trainable: Vec<&mut Param> = params.into_iter().filter(|p| p.trainable).collect();
        if self.moments.is_empty() {
            self.moments = trainable
                .iter()
                .map(|p| (ArrayD::zeros(p.value.raw_dim()), ArrayD::zeros(p.value.raw_dim())))
                .collect();
        }
        assert_eq!(self.moments.len(), trainable.len(), "Adam: parameter set changed between steps");
        let (b1, b2, lr, eps, wd) = (self.beta1, self.beta2, self.lr, self.eps, self.weight_decay);
        for (p, (m, v)) in trainable.into_iter().zip(self.moments.iter_mut()) {
            ndarray::Zip::from(&mut p.value)
                .and(&p.grad)
                .and(m)
                .and(v)
                .for_each(|w, &g, m, v| {
                    let g = g + wd * *w;
                    *m = b1 * *m + (1.0 - b1) * g;
                    *v = b2 * *v + (1.0 - b2) * g * g;
                    let m_hat = *m / bc1;
                    let v_hat = *v / bc2;
                    *w -= lr * m_hat / (v_hat.sqrt() + eps);
                });
        }
    }
}

/// Zeros the gradient of every parameter in the list.
pub fn zero_grads(params: Vec<&mut Param>) {
    for p in params {
        p.zero_grad();
    }
}
