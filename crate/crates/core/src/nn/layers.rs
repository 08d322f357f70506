//! Layers with explicit forward/backward passes.
//!
//! Each layer caches what its backward pass needs during forward.
//! Parameter gradients accumulate into [`Param::grad`]; callers zero them
//! between steps. Batches are `(n, c, h, w)` in f64; convolutions run as
//! one GEMM per sample against the im2col patch matrix, parallel over the
//! batch with an order-preserving collect so results stay deterministic.

use ndarray::{Array1, Array2, Array4, ArrayD, Axis, IxDyn};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use super::ops;
use crate::rng::standard_normal;

pub type Tensor = Array4<f64>;

/// A trainable array and its gradient accumulator.
#[derive(Debug, Clone)]
pub struct Param {
    pub value: ArrayD<f64>,
    pub grad: ArrayD<f64>,
}

impl Param {
    pub fn new(value: ArrayD<f64>) -> Self {
        let grad = ArrayD::zeros(value.raw_dim());
        Self { value, grad }
    }

    pub fn zero_grad(&mut self) {
        self.grad.fill(0.0);
    }
}

/// Weight initialization scheme.
#[derive(Debug, Clone, Copy)]
pub enum WInit {
    /// Zero-mean gaussian with the given standard deviation.
    Normal(f64),
    /// He initialization: `std = sqrt(2 / fan_in)`.
    He,
}

fn init_array(shape: &[usize], fan_in: usize, init: WInit, rng: &mut ChaCha8Rng) -> ArrayD<f64> {
    let std = match init {
        WInit::Normal(s) => s,
        WInit::He => (2.0 / fan_in as f64).sqrt(),
    };
    let mut arr = ArrayD::zeros(IxDyn(shape));
    for v in arr.iter_mut() {
        *v = std * standard_normal(rng);
    }
    arr
}

pub trait Layer: Send {
    fn forward(&mut self, x: &Tensor, train: bool) -> Tensor;
    /// Deep copy including parameters; caches come along but are inert.
    fn clone_box(&self) -> Box<dyn Layer>;
    /// Propagate `grad` (w.r.t. the last forward's output) back to the
    /// input, accumulating parameter gradients along the way.
    fn backward(&mut self, grad: &Tensor) -> Tensor;
    fn params_mut(&mut self) -> Vec<(&'static str, &mut Param)> {
        Vec::new()
    }
    fn kind(&self) -> &'static str;
}

// ---------------------------------------------------------------------
// Dense
// ---------------------------------------------------------------------

/// Fully connected layer on `(n, features, 1, 1)` tensors.
#[derive(Clone)]
pub struct Dense {
    pub w: Param, // (out, in)
    pub b: Param, // (out)
    cache_x: Option<Array2<f64>>,
}

impl Dense {
    pub fn new(in_f: usize, out_f: usize, init: WInit, rng: &mut ChaCha8Rng) -> Self {
        Self {
            w: Param::new(init_array(&[out_f, in_f], in_f, init, rng)),
            b: Param::new(ArrayD::zeros(IxDyn(&[out_f]))),
            cache_x: None,
        }
    }
}

impl Layer for Dense {
    fn forward(&mut self, x: &Tensor, _train: bool) -> Tensor {
        let (n, f, h, w) = x.dim();
        assert_eq!((h, w), (1, 1), "dense expects flattened input, got {h}x{w}");
        let x_mat = x.view().into_shape_with_order((n, f)).unwrap().to_owned();
        let w_mat = self.w.value.view().into_dimensionality::<ndarray::Ix2>().unwrap();
        let mut y = x_mat.dot(&w_mat.t());
        let b = self.b.value.view().into_dimensionality::<ndarray::Ix1>().unwrap();
        for mut row in y.rows_mut() {
            row += &b;
        }
        self.cache_x = Some(x_mat);
        let out = y.dim().1;
        y.into_shape_with_order((n, out, 1, 1)).unwrap()
    }

    fn backward(&mut self, grad: &Tensor) -> Tensor {
        let (n, o, _, _) = grad.dim();
        let g_mat = grad.view().into_shape_with_order((n, o)).unwrap().to_owned();
        let x_mat = self.cache_x.take().expect("backward before forward");
        let w_mat = self.w.value.view().into_dimensionality::<ndarray::Ix2>().unwrap();

        let dw = g_mat.t().dot(&x_mat);
        self.w.grad += &dw.into_dyn();
        let db = g_mat.sum_axis(Axis(0));
        self.b.grad += &db.into_dyn();

        let dx = g_mat.dot(&w_mat);
        let f = dx.dim().1;
        dx.into_shape_with_order((n, f, 1, 1)).unwrap()
    }

    fn params_mut(&mut self) -> Vec<(&'static str, &mut Param)> {
        vec![("weight", &mut self.w), ("bias", &mut self.b)]
    }

    fn kind(&self) -> &'static str {
        "dense"
    }

    fn clone_box(&self) -> Box<dyn Layer> {
        Box::new(self.clone())
    }
}

// ---------------------------------------------------------------------
// Conv2d
// ---------------------------------------------------------------------

#[derive(Clone)]
pub struct Conv2d {
    pub w: Param, // (oc, ic, kh, kw)
    pub b: Param, // (oc)
    pub stride: usize,
    pub pad: usize,
    cache_x: Option<Tensor>,
}

impl Conv2d {
    pub fn new(
        ic: usize,
        oc: usize,
        k: usize,
        stride: usize,
        pad: usize,
        init: WInit,
        rng: &mut ChaCha8Rng,
    ) -> Self {
        Self {
            w: Param::new(init_array(&[oc, ic, k, k], ic * k * k, init, rng)),
            b: Param::new(ArrayD::zeros(IxDyn(&[oc]))),
            stride,
            pad,
            cache_x: None,
        }
    }

    fn kernel(&self) -> (usize, usize, usize, usize) {
        let s = self.w.value.shape();
        (s[0], s[1], s[2], s[3])
    }
}

impl Layer for Conv2d {
    fn forward(&mut self, x: &Tensor, _train: bool) -> Tensor {
        let (n, ic, h, w) = x.dim();
        let (oc, ic2, kh, kw) = self.kernel();
        assert_eq!(ic, ic2, "conv2d channel mismatch");
        let oh = ops::conv_out_dim(h, kh, self.stride, self.pad);
        let ow = ops::conv_out_dim(w, kw, self.stride, self.pad);
        let w_mat = self
            .w
            .value
            .view()
            .into_shape_with_order((oc, ic * kh * kw))
            .unwrap()
            .to_owned();
        let b = self.b.value.view().into_dimensionality::<ndarray::Ix1>().unwrap().to_owned();
        let stride = self.stride;
        let pad = self.pad;

        let slices: Vec<Array2<f64>> = (0..n)
            .into_par_iter()
            .map(|i| {
                let xi = x.index_axis(Axis(0), i).to_owned();
                let cols = ops::im2col(&xi, kh, kw, stride, pad);
                let mut y = w_mat.dot(&cols);
                for (o, mut row) in y.rows_mut().into_iter().enumerate() {
                    row += b[o];
                }
                y
            })
            .collect();

        let mut out = Array4::zeros((n, oc, oh, ow));
        for (i, y) in slices.into_iter().enumerate() {
            let y3 = y.into_shape_with_order((oc, oh, ow)).unwrap();
            out.index_axis_mut(Axis(0), i).assign(&y3);
        }
        self.cache_x = Some(x.clone());
        out
    }

    fn backward(&mut self, grad: &Tensor) -> Tensor {
        let x = self.cache_x.take().expect("backward before forward");
        let (n, ic, h, w) = x.dim();
        let (oc, _, kh, kw) = self.kernel();
        let (_, _, oh, ow) = grad.dim();
        let w_mat = self
            .w
            .value
            .view()
            .into_shape_with_order((oc, ic * kh * kw))
            .unwrap()
            .to_owned();
        let stride = self.stride;
        let pad = self.pad;

        let parts: Vec<(Array2<f64>, Array1<f64>, ndarray::Array3<f64>)> = (0..n)
            .into_par_iter()
            .map(|i| {
                let xi = x.index_axis(Axis(0), i).to_owned();
                let cols = ops::im2col(&xi, kh, kw, stride, pad);
                let gi = grad
                    .index_axis(Axis(0), i)
                    .to_owned()
                    .into_shape_with_order((oc, oh * ow))
                    .unwrap();
                let dw = gi.dot(&cols.t());
                let db = gi.sum_axis(Axis(1));
                let dcols = w_mat.t().dot(&gi);
                let dx = ops::col2im(&dcols, ic, h, w, kh, kw, stride, pad);
                (dw, db, dx)
            })
            .collect();

        let mut dx = Array4::zeros((n, ic, h, w));
        for (i, (dw, db, dxi)) in parts.into_iter().enumerate() {
            // Sequential accumulation keeps float sums deterministic.
            self.w.grad += &dw.into_shape_with_order((oc, ic, kh, kw)).unwrap().into_dyn();
            self.b.grad += &db.into_dyn();
            dx.index_axis_mut(Axis(0), i).assign(&dxi);
        }
        dx
    }

    fn params_mut(&mut self) -> Vec<(&'static str, &mut Param)> {
        vec![("weight", &mut self.w), ("bias", &mut self.b)]
    }

    fn kind(&self) -> &'static str {
        "conv2d"
    }

    fn clone_box(&self) -> Box<dyn Layer> {
        Box::new(self.clone())
    }
}

// ---------------------------------------------------------------------
// ConvTranspose2d
// ---------------------------------------------------------------------

/// Transposed convolution; the exact adjoint of [`Conv2d`] with the same
/// geometry, so it reuses im2col/col2im with the roles swapped.
#[derive(Clone)]
pub struct ConvTranspose2d {
    pub w: Param, // (ic, oc, kh, kw)
    pub b: Param, // (oc)
    pub stride: usize,
    pub pad: usize,
    cache_x: Option<Tensor>,
}

impl ConvTranspose2d {
    pub fn new(
        ic: usize,
        oc: usize,
        k: usize,
        stride: usize,
        pad: usize,
        init: WInit,
        rng: &mut ChaCha8Rng,
    ) -> Self {
        Self {
            w: Param::new(init_array(&[ic, oc, k, k], ic * k * k, init, rng)),
            b: Param::new(ArrayD::zeros(IxDyn(&[oc]))),
            stride,
            pad,
            cache_x: None,
        }
    }

    fn kernel(&self) -> (usize, usize, usize, usize) {
        let s = self.w.value.shape();
        (s[0], s[1], s[2], s[3])
    }
}

impl Layer for ConvTranspose2d {
    fn forward(&mut self, x: &Tensor, _train: bool) -> Tensor {
        let (n, ic, ih, iw) = x.dim();
        let (ic2, oc, kh, kw) = self.kernel();
        assert_eq!(ic, ic2, "conv_transpose2d channel mismatch");
        let oh = ops::deconv_out_dim(ih, kh, self.stride, self.pad);
        let ow = ops::deconv_out_dim(iw, kw, self.stride, self.pad);
        let w_mat = self
            .w
            .value
            .view()
            .into_shape_with_order((ic, oc * kh * kw))
            .unwrap()
            .to_owned();
        let b = self.b.value.view().into_dimensionality::<ndarray::Ix1>().unwrap().to_owned();
        let stride = self.stride;
        let pad = self.pad;

        let slices: Vec<ndarray::Array3<f64>> = (0..n)
            .into_par_iter()
            .map(|i| {
                let xi = x
                    .index_axis(Axis(0), i)
                    .to_owned()
                    .into_shape_with_order((ic, ih * iw))
                    .unwrap();
                let cols = w_mat.t().dot(&xi); // (oc*kh*kw, ih*iw)
                let mut y = ops::col2im(&cols, oc, oh, ow, kh, kw, stride, pad);
                for (o, mut plane) in y.outer_iter_mut().enumerate() {
                    plane += b[o];
                }
                y
            })
            .collect();

        let mut out = Array4::zeros((n, oc, oh, ow));
        for (i, y) in slices.into_iter().enumerate() {
            out.index_axis_mut(Axis(0), i).assign(&y);
        }
        self.cache_x = Some(x.clone());
        out
    }

    fn backward(&mut self, grad: &Tensor) -> Tensor {
        let x = self.cache_x.take().expect("backward before forward");
        let (n, ic, ih, iw) = x.dim();
        let (_, oc, kh, kw) = self.kernel();
        let w_mat = self
            .w
            .value
            .view()
            .into_shape_with_order((ic, oc * kh * kw))
            .unwrap()
            .to_owned();
        let stride = self.stride;
        let pad = self.pad;

        let parts: Vec<(Array2<f64>, Array1<f64>, Array2<f64>)> = (0..n)
            .into_par_iter()
            .map(|i| {
                let gi = grad.index_axis(Axis(0), i).to_owned();
                let gcols = ops::im2col(&gi, kh, kw, stride, pad); // (oc*kh*kw, ih*iw)
                let xi = x
                    .index_axis(Axis(0), i)
                    .to_owned()
                    .into_shape_with_order((ic, ih * iw))
                    .unwrap();
                let dw = xi.dot(&gcols.t()); // (ic, oc*kh*kw)
                let db = gi.sum_axis(Axis(2)).sum_axis(Axis(1));
                let dx = w_mat.dot(&gcols); // (ic, ih*iw)
                (dw, db, dx)
            })
            .collect();

        let mut dx = Array4::zeros((n, ic, ih, iw));
        for (i, (dw, db, dxi)) in parts.into_iter().enumerate() {
            self.w.grad += &dw.into_shape_with_order((ic, oc, kh, kw)).unwrap().into_dyn();
            self.b.grad += &db.into_dyn();
            dx.index_axis_mut(Axis(0), i)
                .assign(&dxi.into_shape_with_order((ic, ih, iw)).unwrap());
        }
        dx
    }

    fn params_mut(&mut self) -> Vec<(&'static str, &mut Param)> {
        vec![("weight", &mut self.w), ("bias", &mut self.b)]
    }

    fn kind(&self) -> &'static str {
        "conv_transpose2d"
    }

    fn clone_box(&self) -> Box<dyn Layer> {
        Box::new(self.clone())
    }
}

// ---------------------------------------------------------------------
// BatchNorm2d
// ---------------------------------------------------------------------

#[derive(Clone)]
pub struct BatchNorm2d {
    pub gamma: Param, // (c)
    pub beta: Param,  // (c)
    pub running_mean: Array1<f64>,
    pub running_var: Array1<f64>,
    pub momentum: f64,
    pub eps: f64,
    cache: Option<BnCache>,
}

#[derive(Clone)]
struct BnCache {
    x_hat: Tensor,
    inv_std: Array1<f64>,
    train: bool,
}

impl BatchNorm2d {
    pub fn new(c: usize) -> Self {
        Self {
            gamma: Param::new(ArrayD::from_elem(IxDyn(&[c]), 1.0)),
            beta: Param::new(ArrayD::zeros(IxDyn(&[c]))),
            running_mean: Array1::zeros(c),
            running_var: Array1::from_elem(c, 1.0),
            momentum: 0.1,
            eps: 1e-5,
            cache: None,
        }
    }
}

impl Layer for BatchNorm2d {
    fn forward(&mut self, x: &Tensor, train: bool) -> Tensor {
        let (n, c, h, w) = x.dim();
        let count = (n * h * w) as f64;
        let gamma = self.gamma.value.view().into_dimensionality::<ndarray::Ix1>().unwrap();
        let beta = self.beta.value.view().into_dimensionality::<ndarray::Ix1>().unwrap();

        let (mean, var) = if train {
            let mut mean = Array1::zeros(c);
            let mut var = Array1::zeros(c);
            for ci in 0..c {
                let mut acc = 0.0;
                for i in 0..n {
                    for y in 0..h {
                        for xx in 0..w {
                            acc += x[(i, ci, y, xx)];
                        }
                    }
                }
                let mu = acc / count;
                let mut vacc = 0.0;
                for i in 0..n {
                    for y in 0..h {
                        for xx in 0..w {
                            let d = x[(i, ci, y, xx)] - mu;
                            vacc += d * d;
                        }
                    }
                }
                mean[ci] = mu;
                var[ci] = vacc / count; // biased, as normalization uses it
            }
            for ci in 0..c {
                self.running_mean[ci] =
                    (1.0 - self.momentum) * self.running_mean[ci] + self.momentum * mean[ci];
                self.running_var[ci] =
                    (1.0 - self.momentum) * self.running_var[ci] + self.momentum * var[ci];
            }
            (mean, var)
        } else {
            (self.running_mean.clone(), self.running_var.clone())
        };

        let inv_std = var.mapv(|v| 1.0 / (v + self.eps).sqrt());
        let mut x_hat = x.clone();
        for ci in 0..c {
            let mu = mean[ci];
            let is = inv_std[ci];
            for i in 0..n {
                for y in 0..h {
                    for xx in 0..w {
                        x_hat[(i, ci, y, xx)] = (x[(i, ci, y, xx)] - mu) * is;
                    }
                }
            }
        }
        let mut out = x_hat.clone();
        for ci in 0..c {
            let (g, b) = (gamma[ci], beta[ci]);
            for i in 0..n {
                for y in 0..h {
                    for xx in 0..w {
                        out[(i, ci, y, xx)] = g * x_hat[(i, ci, y, xx)] + b;
                    }
                }
            }
        }
        self.cache = Some(BnCache { x_hat, inv_std, train });
        out
    }

    fn backward(&mut self, grad: &Tensor) -> Tensor {
        let BnCache { x_hat, inv_std, train } = self.cache.take().expect("backward before forward");
        let (n, c, h, w) = grad.dim();
        let count = (n * h * w) as f64;
        let gamma = self.gamma.value.view().into_dimensionality::<ndarray::Ix1>().unwrap();

        let mut dgamma = Array1::zeros(c);
        let mut dbeta = Array1::zeros(c);
        for ci in 0..c {
            for i in 0..n {
                for y in 0..h {
                    for xx in 0..w {
                        dgamma[ci] += grad[(i, ci, y, xx)] * x_hat[(i, ci, y, xx)];
                        dbeta[ci] += grad[(i, ci, y, xx)];
                    }
                }
            }
        }

        let mut dx = Tensor::zeros((n, c, h, w));
        if train {
            for ci in 0..c {
                let scale = gamma[ci] * inv_std[ci] / count;
                for i in 0..n {
                    for y in 0..h {
                        for xx in 0..w {
                            dx[(i, ci, y, xx)] = scale
                                * (count * grad[(i, ci, y, xx)]
                                    - dbeta[ci]
                                    - x_hat[(i, ci, y, xx)] * dgamma[ci]);
                        }
                    }
                }
            }
        } else {
            for ci in 0..c {
                let scale = gamma[ci] * inv_std[ci];
                for i in 0..n {
                    for y in 0..h {
                        for xx in 0..w {
                            dx[(i, ci, y, xx)] = scale * grad[(i, ci, y, xx)];
                        }
                    }
                }
            }
        }
        self.gamma.grad += &dgamma.into_dyn();
        self.beta.grad += &dbeta.into_dyn();
        dx
    }

    fn params_mut(&mut self) -> Vec<(&'static str, &mut Param)> {
        vec![("gamma", &mut self.gamma), ("beta", &mut self.beta)]
    }

    fn kind(&self) -> &'static str {
        "batchnorm2d"
    }

    fn clone_box(&self) -> Box<dyn Layer> {
        Box::new(self.clone())
    }
}

// ---------------------------------------------------------------------
// Activations
// ---------------------------------------------------------------------

#[derive(Clone)]
pub struct LeakyRelu {
    pub alpha: f64,
    cache_x: Option<Tensor>,
}

impl LeakyRelu {
    pub fn new(alpha: f64) -> Self {
        Self { alpha, cache_x: None }
    }

    /// Plain ReLU.
    pub fn relu() -> Self {
        Self::new(0.0)
    }
}

impl Layer for LeakyRelu {
    fn forward(&mut self, x: &Tensor, _train: bool) -> Tensor {
        self.cache_x = Some(x.clone());
        let a = self.alpha;
        x.mapv(|v| if v >= 0.0 { v } else { a * v })
    }

    fn backward(&mut self, grad: &Tensor) -> Tensor {
        let x = self.cache_x.take().expect("backward before forward");
        let a = self.alpha;
        let mut dx = grad.clone();
        ndarray::Zip::from(&mut dx).and(&x).for_each(|g, v| {
            if *v < 0.0 {
                *g *= a;
            }
        });
        dx
    }

    fn kind(&self) -> &'static str {
        "leaky_relu"
    }

    fn clone_box(&self) -> Box<dyn Layer> {
        Box::new(self.clone())
    }
}

#[derive(Clone)]
pub struct Tanh {
    cache_y: Option<Tensor>,
}

impl Tanh {
    pub fn new() -> Self {
        Self { cache_y: None }
    }
}

impl Layer for Tanh {
    fn forward(&mut self, x: &Tensor, _train: bool) -> Tensor {
        let y = x.mapv(f64::tanh);
        self.cache_y = Some(y.clone());
        y
    }

    fn backward(&mut self, grad: &Tensor) -> Tensor {
        let y = self.cache_y.take().expect("backward before forward");
        let mut dx = grad.clone();
        ndarray::Zip::from(&mut dx).and(&y).for_each(|g, v| *g *= 1.0 - v * v);
        dx
    }

    fn kind(&self) -> &'static str {
        "tanh"
    }

    fn clone_box(&self) -> Box<dyn Layer> {
        Box::new(self.clone())
    }
}

#[derive(Clone)]
pub struct Sigmoid {
    cache_y: Option<Tensor>,
}

impl Sigmoid {
    pub fn new() -> Self {
        Self { cache_y: None }
    }
}

impl Layer for Sigmoid {
    fn forward(&mut self, x: &Tensor, _train: bool) -> Tensor {
        let y = x.mapv(|v| 1.0 / (1.0 + (-v).exp()));
        self.cache_y = Some(y.clone());
        y
    }

    fn backward(&mut self, grad: &Tensor) -> Tensor {
        let y = self.cache_y.take().expect("backward before forward");
        let mut dx = grad.clone();
        ndarray::Zip::from(&mut dx).and(&y).for_each(|g, v| *g *= v * (1.0 - v));
        dx
    }

    fn kind(&self) -> &'static str {
        "sigmoid"
    }

    fn clone_box(&self) -> Box<dyn Layer> {
        Box::new(self.clone())
    }
}

// ---------------------------------------------------------------------
// PGGAN-specific normalizations
// ---------------------------------------------------------------------

/// Pixelwise feature-vector normalization: `x / sqrt(mean_c(x^2) + eps)`.
#[derive(Clone)]
pub struct PixelNorm {
    pub eps: f64,
    cache_x: Option<Tensor>,
}

impl PixelNorm {
    pub fn new() -> Self {
        Self { eps: 1e-8, cache_x: None }
    }
}

impl Layer for PixelNorm {
    fn forward(&mut self, x: &Tensor, _train: bool) -> Tensor {
        let (n, c, h, w) = x.dim();
        self.cache_x = Some(x.clone());
        let mut y = x.clone();
        for i in 0..n {
            for yy in 0..h {
                for xx in 0..w {
                    let mut m = 0.0;
                    for ci in 0..c {
                        let v = x[(i, ci, yy, xx)];
                        m += v * v;
                    }
                    let d = (m / c as f64 + self.eps).sqrt();
                    for ci in 0..c {
                        y[(i, ci, yy, xx)] = x[(i, ci, yy, xx)] / d;
                    }
                }
            }
        }
        y
    }

    fn backward(&mut self, grad: &Tensor) -> Tensor {
        let x = self.cache_x.take().expect("backward before forward");
        let (n, c, h, w) = x.dim();
        let mut dx = Tensor::zeros((n, c, h, w));
        for i in 0..n {
            for yy in 0..h {
                for xx in 0..w {
                    let mut m = 0.0;
                    let mut gx = 0.0;
                    for ci in 0..c {
                        let v = x[(i, ci, yy, xx)];
                        m += v * v;
                        gx += grad[(i, ci, yy, xx)] * v;
                    }
                    let d2 = m / c as f64 + self.eps;
                    let d = d2.sqrt();
                    let d3 = d2 * d;
                    for ci in 0..c {
                        dx[(i, ci, yy, xx)] = grad[(i, ci, yy, xx)] / d
                            - x[(i, ci, yy, xx)] * gx / (c as f64 * d3);
                    }
                }
            }
        }
        dx
    }

    fn kind(&self) -> &'static str {
        "pixel_norm"
    }

    fn clone_box(&self) -> Box<dyn Layer> {
        Box::new(self.clone())
    }
}

/// Minibatch standard deviation: appends one channel holding the mean,
/// over features and positions, of the per-position standard deviation
/// across the batch.
#[derive(Clone)]
pub struct MinibatchStdDev {
    pub eps: f64,
    cache: Option<(Tensor, Tensor)>, // (x, per-position std)
}

impl MinibatchStdDev {
    pub fn new() -> Self {
        Self { eps: 1e-8, cache: None }
    }
}

impl Layer for MinibatchStdDev {
    fn forward(&mut self, x: &Tensor, _train: bool) -> Tensor {
        let (n, c, h, w) = x.dim();
        let mut std = Tensor::zeros((1, c, h, w));
        let mut s_acc = 0.0;
        for ci in 0..c {
            for yy in 0..h {
                for xx in 0..w {
                    let mut mu = 0.0;
                    for i in 0..n {
                        mu += x[(i, ci, yy, xx)];
                    }
                    mu /= n as f64;
                    let mut v = 0.0;
                    for i in 0..n {
                        let d = x[(i, ci, yy, xx)] - mu;
                        v += d * d;
                    }
                    let sd = (v / n as f64 + self.eps).sqrt();
                    std[(0, ci, yy, xx)] = sd;
                    s_acc += sd;
                }
            }
        }
        let s = s_acc / (c * h * w) as f64;
        let mut out = Tensor::zeros((n, c + 1, h, w));
        for i in 0..n {
            for ci in 0..c {
                for yy in 0..h {
                    for xx in 0..w {
                        out[(i, ci, yy, xx)] = x[(i, ci, yy, xx)];
                    }
                }
            }
            for yy in 0..h {
                for xx in 0..w {
                    out[(i, c, yy, xx)] = s;
                }
            }
        }
        self.cache = Some((x.clone(), std));
        out
    }

    fn backward(&mut self, grad: &Tensor) -> Tensor {
        let (x, std) = self.cache.take().expect("backward before forward");
        let (n, c, h, w) = x.dim();
        // Total gradient flowing into the scalar s.
        let mut ds = 0.0;
        for i in 0..n {
            for yy in 0..h {
                for xx in 0..w {
                    ds += grad[(i, c, yy, xx)];
                }
            }
        }
        let chw = (c * h * w) as f64;
        let mut dx = Tensor::zeros((n, c, h, w));
        for ci in 0..c {
            for yy in 0..h {
                for xx in 0..w {
                    let mut mu = 0.0;
                    for i in 0..n {
                        mu += x[(i, ci, yy, xx)];
                    }
                    mu /= n as f64;
                    let sd = std[(0, ci, yy, xx)];
                    for i in 0..n {
                        // ds/dx = (x - mu) / (n * chw * sd), plus identity path.
                        dx[(i, ci, yy, xx)] = grad[(i, ci, yy, xx)]
                            + ds * (x[(i, ci, yy, xx)] - mu) / (n as f64 * chw * sd);
                    }
                }
            }
        }
        dx
    }

    fn kind(&self) -> &'static str {
        "minibatch_stddev"
    }

    fn clone_box(&self) -> Box<dyn Layer> {
        Box::new(self.clone())
    }
}

// ---------------------------------------------------------------------
// Resampling and shape plumbing
// ---------------------------------------------------------------------

#[derive(Clone)]
pub struct UpsampleNearest2x;

impl Layer for UpsampleNearest2x {
    fn forward(&mut self, x: &Tensor, _train: bool) -> Tensor {
        ops::upsample2x(x)
    }

    fn backward(&mut self, grad: &Tensor) -> Tensor {
        ops::upsample2x_backward(grad)
    }

    fn kind(&self) -> &'static str {
        "upsample2x"
    }

    fn clone_box(&self) -> Box<dyn Layer> {
        Box::new(self.clone())
    }
}

#[derive(Clone)]
pub struct AvgPool2x;

impl Layer for AvgPool2x {
    fn forward(&mut self, x: &Tensor, _train: bool) -> Tensor {
        ops::downsample2x(x)
    }

    fn backward(&mut self, grad: &Tensor) -> Tensor {
        ops::downsample2x_backward(grad)
    }

    fn kind(&self) -> &'static str {
        "avgpool2x"
    }

    fn clone_box(&self) -> Box<dyn Layer> {
        Box::new(self.clone())
    }
}

/// 2x2 max pooling with stride 2 (even spatial dims required).
#[derive(Clone)]
pub struct MaxPool2x {
    cache: Option<(Tensor, Vec<(usize, usize)>)>, // argmax offsets, row-major
}

impl MaxPool2x {
    pub fn new() -> Self {
        Self { cache: None }
    }
}

impl Layer for MaxPool2x {
    fn forward(&mut self, x: &Tensor, _train: bool) -> Tensor {
        let (n, c, h, w) = x.dim();
        assert!(h % 2 == 0 && w % 2 == 0, "maxpool2x needs even dims");
        let mut out = Tensor::zeros((n, c, h / 2, w / 2));
        let mut arg = Vec::with_capacity(n * c * (h / 2) * (w / 2));
        for i in 0..n {
            for ci in 0..c {
                for oy in 0..h / 2 {
                    for ox in 0..w / 2 {
                        let mut best = f64::NEG_INFINITY;
                        let mut at = (0, 0);
                        for dy in 0..2 {
                            for dx in 0..2 {
                                let v = x[(i, ci, 2 * oy + dy, 2 * ox + dx)];
                                if v > best {
                                    best = v;
                                    at = (dy, dx);
                                }
                            }
                        }
                        out[(i, ci, oy, ox)] = best;
                        arg.push(at);
                    }
                }
            }
        }
        self.cache = Some((x.clone(), arg));
        out
    }

    fn backward(&mut self, grad: &Tensor) -> Tensor {
        let (x, arg) = self.cache.take().expect("backward before forward");
        let (n, c, h, w) = x.dim();
        let mut dx = Tensor::zeros((n, c, h, w));
        let mut k = 0;
        for i in 0..n {
            for ci in 0..c {
                for oy in 0..h / 2 {
                    for ox in 0..w / 2 {
                        let (dy, dx_) = arg[k];
                        dx[(i, ci, 2 * oy + dy, 2 * ox + dx_)] += grad[(i, ci, oy, ox)];
                        k += 1;
                    }
                }
            }
        }
        dx
    }

    fn kind(&self) -> &'static str {
        "maxpool2x"
    }

    fn clone_box(&self) -> Box<dyn Layer> {
        Box::new(self.clone())
    }
}

/// `(n, c, h, w)` -> `(n, c*h*w, 1, 1)`.
#[derive(Clone)]
pub struct Flatten {
    cache_dim: Option<(usize, usize, usize, usize)>,
}

impl Flatten {
    pub fn new() -> Self {
        Self { cache_dim: None }
    }
}

impl Layer for Flatten {
    fn forward(&mut self, x: &Tensor, _train: bool) -> Tensor {
        let d = x.dim();
        self.cache_dim = Some(d);
        let (n, c, h, w) = d;
        x.clone().into_shape_with_order((n, c * h * w, 1, 1)).unwrap()
    }

    fn backward(&mut self, grad: &Tensor) -> Tensor {
        let d = self.cache_dim.take().expect("backward before forward");
        grad.clone().into_shape_with_order(d).unwrap()
    }

    fn kind(&self) -> &'static str {
        "flatten"
    }

    fn clone_box(&self) -> Box<dyn Layer> {
        Box::new(self.clone())
    }
}

/// `(n, c*h*w, 1, 1)` -> `(n, c, h, w)`.
#[derive(Clone)]
pub struct Reshape {
    pub c: usize,
    pub h: usize,
    pub w: usize,
}

impl Layer for Reshape {
    fn forward(&mut self, x: &Tensor, _train: bool) -> Tensor {
        let n = x.dim().0;
        x.clone().into_shape_with_order((n, self.c, self.h, self.w)).unwrap()
    }

    fn backward(&mut self, grad: &Tensor) -> Tensor {
        let n = grad.dim().0;
        grad.clone().into_shape_with_order((n, self.c * self.h * self.w, 1, 1)).unwrap()
    }

    fn kind(&self) -> &'static str {
        "reshape"
    }

    fn clone_box(&self) -> Box<dyn Layer> {
        Box::new(self.clone())
    }
}
