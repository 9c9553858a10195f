use crate::{Layer, Mode, Param, Tensor};

const MOMENTUM: f64 = 0.1;
const EPS: f64 = 1e-5;

/// Per-channel batch normalisation with running statistics.
#[derive(Clone)]
pub struct BatchNorm2d {
    gamma: Param,
    beta: Param,
    running_mean: Param,
    running_var: Param,
    channels: usize,
    cache: Option<Cache>,
}

#[derive(Clone)]
struct Cache {
    x_hat: Tensor,
    inv_std: Vec<f32>,
    batch_stats: bool,
}

/// Calls `f(channel, plane)` for every contiguous `H×W` plane of a standard-layout tensor.
fn for_planes<'a>(data: &'a [f32], c: usize, hw: usize, mut f: impl FnMut(usize, &'a [f32])) {
    for (i, plane) in data.chunks_exact(hw).enumerate() {
        f(i % c, plane);
    }
}

impl BatchNorm2d {
    pub fn new(channels: usize) -> Self {
        Self {
            gamma: Param::filled(&[channels], 1.0),
            beta: Param::zeros(&[channels]),
            running_mean: Param::buffer(&[channels], 0.0),
            running_var: Param::buffer(&[channels], 1.0),
            channels,
            cache: None,
        }
    }

    /// Returns `(x_hat, y)`.
    fn normalize(&self, x: &Tensor, mean: &[f32], inv_std: &[f32]) -> (Tensor, Tensor) {
        let (_, c, h, w) = x.dim();
        let hw = h * w;
        let mut x_hat = x.as_standard_layout().into_owned();
        let mut y = x_hat.clone();
        let xs = x_hat.as_slice_mut().expect("standard layout");
        let ys = y.as_slice_mut().expect("standard layout");
        for (i, (xp, yp)) in xs.chunks_exact_mut(hw).zip(ys.chunks_exact_mut(hw)).enumerate() {
            let ci = i % c;
            let (m, s) = (mean[ci], inv_std[ci]);
            let (g, b) = (self.gamma.value[ci], self.beta.value[ci]);
            for (xv, yv) in xp.iter_mut().zip(yp.iter_mut()) {
                let n = (*xv - m) * s;
                *xv = n;
                *yv = n * g + b;
            }
        }
        (x_hat, y)
    }

    fn running(&self) -> (Vec<f32>, Vec<f32>) {
        let mean = self.running_mean.value.iter().copied().collect();
        let inv = self
            .running_var
            .value
            .iter()
            .map(|&v| (1.0 / (v as f64 + EPS).sqrt()) as f32)
            .collect();
        (mean, inv)
    }
}

impl Layer for BatchNorm2d {
    fn forward(&mut self, x: &Tensor, mode: Mode) -> Tensor {
        let (_, c, h, w) = x.dim();
        assert_eq!(c, self.channels, "BatchNorm2d channel mismatch");
        let (mean, inv_std, batch_stats) = match mode {
            Mode::Eval => {
                let (m, s) = self.running();
                (m, s, false)
            }
            Mode::Train => {
                let xs = x.as_standard_layout();
                let data = xs.as_slice().expect("standard layout");
                let count = (x.len() / c) as f64;
                let mut sum = vec![0.0f64; c];
                for_planes(data, c, h * w, |ci, p| sum[ci] += p.iter().map(|&v| v as f64).sum::<f64>());
                let mean: Vec<f64> = sum.iter().map(|s| s / count).collect();
                let mut sq = vec![0.0f64; c];
                for_planes(data, c, h * w, |ci, p| {
                    let m = mean[ci];
                    sq[ci] += p.iter().map(|&v| (v as f64 - m).powi(2)).sum::<f64>();
                });
                let mut inv = Vec::with_capacity(c);
                for ci in 0..c {
                    let var = sq[ci] / count;
                    let unbiased = if count > 1.0 { var * count / (count - 1.0) } else { var };
                    let rm = &mut self.running_mean.value[ci];
                    *rm = ((1.0 - MOMENTUM) * *rm as f64 + MOMENTUM * mean[ci]) as f32;
                    let rv = &mut self.running_var.value[ci];
                    *rv = ((1.0 - MOMENTUM) * *rv as f64 + MOMENTUM * unbiased) as f32;
                    inv.push((1.0 / (var + EPS).sqrt()) as f32);
                }
                (mean.iter().map(|&m| m as f32).collect(), inv, true)
            }
        };
        let (x_hat, y) = self.normalize(x, &mean, &inv_std);
        self.cache = Some(Cache { x_hat, inv_std, batch_stats });
        y
    }

    fn infer(&self, x: &Tensor) -> Tensor {
        let (m, s) = self.running();
        self.normalize(x, &m, &s).1
    }

    fn backward(&mut self, grad: &Tensor) -> Tensor {
        let cache = self.cache.as_ref().expect("BatchNorm2d::backward before forward");
        let (_, c, h, w) = grad.dim();
        let hw = h * w;
        let count = (grad.len() / c) as f64;
        let mut dx = grad.as_standard_layout().into_owned();
        let xh = cache.x_hat.as_slice().expect("standard layout");
        let mut sum_g = vec![0.0f64; c];
        let mut sum_gx = vec![0.0f64; c];
        {
            let gs = dx.as_slice().expect("standard layout");
            for (i, (gp, xp)) in gs.chunks_exact(hw).zip(xh.chunks_exact(hw)).enumerate() {
                let ci = i % c;
                let mut a = 0.0f64;
                let mut b = 0.0f64;
                for (&g, &x) in gp.iter().zip(xp) {
                    a += g as f64;
                    b += g as f64 * x as f64;
                }
                sum_g[ci] += a;
                sum_gx[ci] += b;
            }
        }
        for ci in 0..c {
            self.gamma.grad[ci] += sum_gx[ci] as f32;
            self.beta.grad[ci] += sum_g[ci] as f32;
        }
        let ds = dx.as_slice_mut().expect("standard layout");
        for (i, (dp, xp)) in ds.chunks_exact_mut(hw).zip(xh.chunks_exact(hw)).enumerate() {
            let ci = i % c;
            let scale = self.gamma.value[ci] * cache.inv_std[ci];
            if cache.batch_stats {
                let mg = (sum_g[ci] / count) as f32;
                let mgx = (sum_gx[ci] / count) as f32;
                for (d, &x) in dp.iter_mut().zip(xp) {
                    *d = scale * (*d - mg - x * mgx);
                }
            } else {
                dp.iter_mut().for_each(|d| *d *= scale);
            }
        }
        dx
    }

    fn params(&self) -> Vec<&Param> {
        vec![&self.gamma, &self.beta, &self.running_mean, &self.running_var]
    }

    fn params_mut(&mut self) -> Vec<&mut Param> {
        vec![&mut self.gamma, &mut self.beta, &mut self.running_mean, &mut self.running_var]
    }

    fn box_clone(&self) -> Box<dyn Layer> {
        Box::new(Self { cache: None, ..self.clone() })
    }

    fn describe(&self) -> String {
        format!("BatchNorm2d({})", self.channels)
    }
}
