use std::borrow::Cow;

use ndarray::linalg::general_mat_mul;
use ndarray::{Array2, ArrayView2, ArrayViewMut2, Ix2};
use rand::RngCore;

use crate::{Layer, Mode, Param, Tensor};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
struct Geometry {
    kernel: usize,
    stride: usize,
    pad: usize,
}

impl Geometry {
    fn conv_out(&self, size: usize) -> usize {
        (size + 2 * self.pad - self.kernel) / self.stride + 1
    }

    fn transposed_out(&self, size: usize) -> usize {
        (size - 1) * self.stride + self.kernel - 2 * self.pad
    }
}

/// Output columns `[lo, hi)` whose kernel tap `kx` lands inside a row of width `w`.
fn valid_range(g: Geometry, kx: usize, w: usize, wo: usize) -> (usize, usize) {
    let lo = if g.pad > kx { (g.pad - kx).div_ceil(g.stride) } else { 0 };
    let hi = (w + g.pad - kx).div_ceil(g.stride).min(wo);
    (lo.min(hi), hi)
}

/// Unfolds one `C×H×W` image into a `(C·k·k) × (Ho·Wo)` patch matrix.
fn im2col(src: &[f32], (c, h, w): (usize, usize, usize), g: Geometry, ho: usize, wo: usize) -> Array2<f32> {
    let k = g.kernel;
    let cols = ho * wo;
    let mut out = vec![0.0f32; c * k * k * cols];
    for ci in 0..c {
        let plane = &src[ci * h * w..(ci + 1) * h * w];
        for ky in 0..k {
            for kx in 0..k {
                let row = (ci * k + ky) * k + kx;
                let dst_row = &mut out[row * cols..(row + 1) * cols];
                for oy in 0..ho {
                    let iy = (oy * g.stride + ky) as isize - g.pad as isize;
                    if iy < 0 || iy >= h as isize {
                        continue;
                    }
                    let src_row = &plane[iy as usize * w..(iy as usize + 1) * w];
                    let dst = &mut dst_row[oy * wo..(oy + 1) * wo];
                    let (lo, hi) = valid_range(g, kx, w, wo);
                    if g.stride == 1 {
                        let off = lo + kx - g.pad;
                        dst[lo..hi].copy_from_slice(&src_row[off..off + hi - lo]);
                    } else {
                        for ox in lo..hi {
                            dst[ox] = src_row[ox * g.stride + kx - g.pad];
                        }
                    }
                }
            }
        }
    }
    Array2::from_shape_vec((c * k * k, cols), out).expect("im2col shape")
}

/// Adjoint of [`im2col`]: accumulates a patch matrix into one `C×H×W` image.
fn col2im(cols: &Array2<f32>, dst: &mut [f32], (c, h, w): (usize, usize, usize), g: Geometry, ho: usize, wo: usize) {
    let k = g.kernel;
    let ncols = ho * wo;
    let src = cols.as_slice().expect("standard layout");
    for ci in 0..c {
        let plane = &mut dst[ci * h * w..(ci + 1) * h * w];
        for ky in 0..k {
            for kx in 0..k {
                let row = (ci * k + ky) * k + kx;
                let src_row = &src[row * ncols..(row + 1) * ncols];
                for oy in 0..ho {
                    let iy = (oy * g.stride + ky) as isize - g.pad as isize;
                    if iy < 0 || iy >= h as isize {
                        continue;
                    }
                    let dst_row = &mut plane[iy as usize * w..(iy as usize + 1) * w];
                    let s = &src_row[oy * wo..(oy + 1) * wo];
                    let (lo, hi) = valid_range(g, kx, w, wo);
                    if g.stride == 1 {
                        let off = lo + kx - g.pad;
                        for (d, &v) in dst_row[off..off + hi - lo].iter_mut().zip(&s[lo..hi]) {
                            *d += v;
                        }
                    } else {
                        for ox in lo..hi {
                            dst_row[ox * g.stride + kx - g.pad] += s[ox];
                        }
                    }
                }
            }
        }
    }
}

/// `c = alpha·a·b + beta·c`, with a plain row-axpy path for the degenerate
/// shapes (single output channel, rank-1 updates) that packed GEMM handles poorly.
fn gemm(alpha: f32, a: &ArrayView2<f32>, b: &ArrayView2<f32>, beta: f32, c: &mut ArrayViewMut2<f32>) {
    let (m, k) = a.dim();
    if m > 4 && k > 4 {
        general_mat_mul(alpha, a, b, beta, c);
        return;
    }
    if beta == 0.0 {
        c.fill(0.0);
    } else if beta != 1.0 {
        c.mapv_inplace(|v| v * beta);
    }
    if b.strides()[0] == 1 && b.ncols() > 1 {
        // b is a transposed view: its columns are contiguous.
        for i in 0..m {
            let ar = a.row(i);
            for (j, col) in b.columns().into_iter().enumerate() {
                c[[i, j]] += alpha * ar.dot(&col);
            }
        }
        return;
    }
    for i in 0..m {
        let mut row = c.row_mut(i);
        for p in 0..k {
            let coef = alpha * a[[i, p]];
            if coef != 0.0 {
                row.scaled_add(coef, &b.row(p));
            }
        }
    }
}

fn sample(x: &[f32], n: usize, len: usize) -> &[f32] {
    &x[n * len..(n + 1) * len]
}

fn mat(x: &[f32], rows: usize, cols: usize) -> ArrayView2<'_, f32> {
    ArrayView2::from_shape((rows, cols), x).expect("matrix view")
}

fn mat_mut(x: &mut [f32], rows: usize, cols: usize) -> ArrayViewMut2<'_, f32> {
    ArrayViewMut2::from_shape((rows, cols), x).expect("matrix view")
}

fn standard(x: &Tensor) -> Cow<'_, [f32]> {
    match x.as_slice() {
        Some(s) => Cow::Borrowed(s),
        None => Cow::Owned(x.iter().copied().collect()),
    }
}

fn add_bias(y: &mut Tensor, bias: &Param) {
    for (ci, mut plane) in y.axis_iter_mut(ndarray::Axis(1)).enumerate() {
        let b = bias.value[ci];
        plane.mapv_inplace(|v| v + b);
    }
}

fn accumulate_bias_grad(grad: &Tensor, bias: &mut Param) {
    for (ci, plane) in grad.axis_iter(ndarray::Axis(1)).enumerate() {
        bias.grad[ci] += plane.sum();
    }
}

fn weight(p: &Param) -> ArrayView2<'_, f32> {
    p.value.view().into_dimensionality::<Ix2>().expect("2-D weight")
}

fn weight_grad(p: &mut Param) -> ArrayViewMut2<'_, f32> {
    p.grad.view_mut().into_dimensionality::<Ix2>().expect("2-D weight")
}

/// 2-D convolution with square kernel, zero padding and optional bias.
///
/// Weights are stored as an `out × (in·k·k)` matrix. Images are processed
/// one at a time so the unfolded patch matrix stays cache-resident.
#[derive(Clone)]
pub struct Conv2d {
    weight: Param,
    bias: Option<Param>,
    in_channels: usize,
    out_channels: usize,
    geom: Geometry,
    input: Option<Tensor>,
}

impl Conv2d {
    pub fn new(
        in_channels: usize,
        out_channels: usize,
        kernel: usize,
        stride: usize,
        pad: usize,
        bias: bool,
        rng: &mut dyn RngCore,
    ) -> Self {
        let fan_in = (in_channels * kernel * kernel) as f32;
        let bound = (6.0 / fan_in).sqrt();
        Self {
            weight: Param::uniform(&[out_channels, in_channels * kernel * kernel], bound, rng),
            bias: bias.then(|| Param::zeros(&[out_channels])),
            in_channels,
            out_channels,
            geom: Geometry { kernel, stride, pad },
            input: None,
        }
    }

    pub fn out_size(&self, size: usize) -> usize {
        self.geom.conv_out(size)
    }

    fn run(&self, x: &Tensor) -> Tensor {
        let (n, c, h, w) = x.dim();
        assert_eq!(c, self.in_channels, "Conv2d: expected {} input channels, got {c}", self.in_channels);
        let (ho, wo) = (self.geom.conv_out(h), self.geom.conv_out(w));
        let src = standard(x);
        let out_len = self.out_channels * ho * wo;
        let mut out = vec![0.0f32; n * out_len];
        for ni in 0..n {
            let cols = im2col(sample(&src, ni, c * h * w), (c, h, w), self.geom, ho, wo);
            let mut y = mat_mut(&mut out[ni * out_len..(ni + 1) * out_len], self.out_channels, ho * wo);
            gemm(1.0, &weight(&self.weight), &cols.view(), 0.0, &mut y);
        }
        let mut out = Tensor::from_shape_vec((n, self.out_channels, ho, wo), out).expect("conv output");
        if let Some(b) = &self.bias {
            add_bias(&mut out, b);
        }
        out
    }
}

impl Layer for Conv2d {
    fn forward(&mut self, x: &Tensor, _mode: Mode) -> Tensor {
        self.input = Some(x.clone());
        self.run(x)
    }

    fn infer(&self, x: &Tensor) -> Tensor {
        self.run(x)
    }

    fn backward(&mut self, grad: &Tensor) -> Tensor {
        let x = self.input.take().expect("Conv2d::backward before forward");
        let (n, c, h, w) = x.dim();
        let (_, o, ho, wo) = grad.dim();
        let src = standard(&x);
        let gsrc = standard(grad);
        let k = self.geom.kernel;
        let mut dx = vec![0.0f32; n * c * h * w];
        let mut dcols = Array2::<f32>::zeros((c * k * k, ho * wo));
        for ni in 0..n {
            let cols = im2col(sample(&src, ni, c * h * w), (c, h, w), self.geom, ho, wo);
            let g = mat(sample(&gsrc, ni, o * ho * wo), o, ho * wo);
            gemm(1.0, &g, &cols.t(), 1.0, &mut weight_grad(&mut self.weight));
            gemm(1.0, &weight(&self.weight).t(), &g, 0.0, &mut dcols.view_mut());
            col2im(&dcols, &mut dx[ni * c * h * w..(ni + 1) * c * h * w], (c, h, w), self.geom, ho, wo);
        }
        if let Some(b) = &mut self.bias {
            accumulate_bias_grad(grad, b);
        }
        drop(src);
        self.input = Some(x);
        Tensor::from_shape_vec((n, c, h, w), dx).expect("conv input grad")
    }

    fn params(&self) -> Vec<&Param> {
        std::iter::once(&self.weight).chain(self.bias.as_ref()).collect()
    }

    fn params_mut(&mut self) -> Vec<&mut Param> {
        std::iter::once(&mut self.weight).chain(self.bias.as_mut()).collect()
    }

    fn box_clone(&self) -> Box<dyn Layer> {
        Box::new(self.clone())
    }

    fn describe(&self) -> String {
        format!(
            "Conv2d({}->{}, k{} s{} p{})",
            self.in_channels, self.out_channels, self.geom.kernel, self.geom.stride, self.geom.pad
        )
    }
}

/// Transposed convolution (the adjoint of [`Conv2d`] with the same geometry).
///
/// Weights are stored as an `in × (out·k·k)` matrix; the output spatial size is
/// `(H − 1)·stride + k − 2·pad`.
#[derive(Clone)]
pub struct ConvTranspose2d {
    weight: Param,
    bias: Option<Param>,
    in_channels: usize,
    out_channels: usize,
    geom: Geometry,
    input: Option<Tensor>,
}

impl ConvTranspose2d {
    pub fn new(
        in_channels: usize,
        out_channels: usize,
        kernel: usize,
        stride: usize,
        pad: usize,
        bias: bool,
        rng: &mut dyn RngCore,
    ) -> Self {
        let fan_in = ((in_channels * kernel * kernel) as f32 / (stride * stride) as f32).max(1.0);
        let bound = (6.0 / fan_in).sqrt();
        Self {
            weight: Param::uniform(&[in_channels, out_channels * kernel * kernel], bound, rng),
            bias: bias.then(|| Param::zeros(&[out_channels])),
            in_channels,
            out_channels,
            geom: Geometry { kernel, stride, pad },
            input: None,
        }
    }

    fn run(&self, x: &Tensor) -> Tensor {
        let (n, c, h, w) = x.dim();
        assert_eq!(
            c, self.in_channels,
            "ConvTranspose2d: expected {} input channels, got {c}",
            self.in_channels
        );
        let (ho, wo) = (self.geom.transposed_out(h), self.geom.transposed_out(w));
        let k = self.geom.kernel;
        let src = standard(x);
        let out_len = self.out_channels * ho * wo;
        let mut out = vec![0.0f32; n * out_len];
        let mut cols = Array2::<f32>::zeros((self.out_channels * k * k, h * w));
        for ni in 0..n {
            let xm = mat(sample(&src, ni, c * h * w), c, h * w);
            gemm(1.0, &weight(&self.weight).t(), &xm, 0.0, &mut cols.view_mut());
            col2im(
                &cols,
                &mut out[ni * out_len..(ni + 1) * out_len],
                (self.out_channels, ho, wo),
                self.geom,
                h,
                w,
            );
        }
        let mut out = Tensor::from_shape_vec((n, self.out_channels, ho, wo), out).expect("tconv output");
        if let Some(b) = &self.bias {
            add_bias(&mut out, b);
        }
        out
    }
}

impl Layer for ConvTranspose2d {
    fn forward(&mut self, x: &Tensor, _mode: Mode) -> Tensor {
        self.input = Some(x.clone());
        self.run(x)
    }

    fn infer(&self, x: &Tensor) -> Tensor {
        self.run(x)
    }

    fn backward(&mut self, grad: &Tensor) -> Tensor {
        let x = self.input.take().expect("ConvTranspose2d::backward before forward");
        let (n, c, h, w) = x.dim();
        let (_, o, ho, wo) = grad.dim();
        let src = standard(&x);
        let gsrc = standard(grad);
        let mut dx = vec![0.0f32; n * c * h * w];
        for ni in 0..n {
            let dcols = im2col(sample(&gsrc, ni, o * ho * wo), (o, ho, wo), self.geom, h, w);
            let xm = mat(sample(&src, ni, c * h * w), c, h * w);
            gemm(1.0, &xm, &dcols.t(), 1.0, &mut weight_grad(&mut self.weight));
            let mut d = mat_mut(&mut dx[ni * c * h * w..(ni + 1) * c * h * w], c, h * w);
            gemm(1.0, &weight(&self.weight), &dcols.view(), 0.0, &mut d);
        }
        if let Some(b) = &mut self.bias {
            accumulate_bias_grad(grad, b);
        }
        drop(src);
        self.input = Some(x);
        Tensor::from_shape_vec((n, c, h, w), dx).expect("tconv input grad")
    }

    fn params(&self) -> Vec<&Param> {
        std::iter::once(&self.weight).chain(self.bias.as_ref()).collect()
    }

    fn params_mut(&mut self) -> Vec<&mut Param> {
        std::iter::once(&mut self.weight).chain(self.bias.as_mut()).collect()
    }

    fn box_clone(&self) -> Box<dyn Layer> {
        Box::new(self.clone())
    }

    fn describe(&self) -> String {
        format!(
            "ConvTranspose2d({}->{}, k{} s{} p{})",
            self.in_channels, self.out_channels, self.geom.kernel, self.geom.stride, self.geom.pad
        )
    }
}
