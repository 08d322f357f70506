//! A small, self-contained neural-network stack in f64: layers with
//! hand-written backward passes, a sequential container, Adam, and the
//! finite-difference gradient checker that keeps the backward passes
//! honest.
//!
//! Nothing here knows about GANs or classifiers; those live in
//! [`crate::gan`] and [`crate::classify`] and compose these parts.

pub mod gradcheck;
pub mod layers;
pub mod ops;

use ndarray::ArrayD;

pub use layers::{Layer, Param, Tensor, WInit};

/// An ordered stack of layers trained as one unit.
pub struct Sequential {
    layers: Vec<Box<dyn Layer>>,
}

impl Clone for Sequential {
    fn clone(&self) -> Self {
        Self { layers: self.layers.iter().map(|l| l.clone_box()).collect() }
    }
}

impl Sequential {
    pub fn new(layers: Vec<Box<dyn Layer>>) -> Self {
        Self { layers }
    }

    pub fn forward(&mut self, x: &Tensor, train: bool) -> Tensor {
        let mut cur = x.clone();
        for layer in &mut self.layers {
            cur = layer.forward(&cur, train);
        }
        cur
    }

    pub fn backward(&mut self, grad: &Tensor) -> Tensor {
        let mut cur = grad.clone();
        for layer in self.layers.iter_mut().rev() {
            cur = layer.backward(&cur);
        }
        cur
    }

    /// Parameters with stable `index.name` labels, in layer order.
    pub fn params_mut(&mut self) -> Vec<(String, &mut Param)> {
        let mut out = Vec::new();
        for (i, layer) in self.layers.iter_mut().enumerate() {
            for (name, p) in layer.params_mut() {
                out.push((format!("{i}.{name}"), p));
            }
        }
        out
    }

    pub fn zero_grad(&mut self) {
        for (_, p) in self.params_mut() {
            p.zero_grad();
        }
    }

    pub fn layer_count(&self) -> usize {
        self.layers.len()
    }
}

/// Adam with per-parameter first/second moment state.
///
/// State is positional: the same parameter order must be presented on
/// every step, which [`Sequential::params_mut`] guarantees.
pub struct Adam {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    t: i32,
    m: Vec<ArrayD<f64>>,
    v: Vec<ArrayD<f64>>,
}

impl Adam {
    pub fn new(lr: f64, beta1: f64, beta2: f64, eps: f64) -> Self {
        Self { lr, beta1, beta2, eps, t: 0, m: Vec::new(), v: Vec::new() }
    }

    /// The DCGAN-convention optimizer: step 2e-4, beta1 0.5, beta2 0.999.
    pub fn dcgan_default() -> Self {
        Self::new(2e-4, 0.5, 0.999, 1e-8)
    }

    pub fn step(&mut self, params: &mut [(String, &mut Param)]) {
        if self.m.is_empty() {
            for (_, p) in params.iter() {
                self.m.push(ArrayD::zeros(p.value.raw_dim()));
                self.v.push(ArrayD::zeros(p.value.raw_dim()));
            }
        }
        assert_eq!(self.m.len(), params.len(), "parameter set changed under Adam");
        self.t += 1;
        let b1t = 1.0 - self.beta1.powi(self.t);
        let b2t = 1.0 - self.beta2.powi(self.t);
        for (k, (_, p)) in params.iter_mut().enumerate() {
            let m = &mut self.m[k];
            let v = &mut self.v[k];
            ndarray::Zip::from(&mut *m).and(&p.grad).for_each(|m, g| {
                *m = self.beta1 * *m + (1.0 - self.beta1) * g;
            });
            ndarray::Zip::from(&mut *v).and(&p.grad).for_each(|v, g| {
                *v = self.beta2 * *v + (1.0 - self.beta2) * g * g;
            });
            ndarray::Zip::from(&mut p.value).and(&*m).and(&*v).for_each(|w, m, v| {
                let m_hat = m / b1t;
                let v_hat = v / b2t;
                *w -= self.lr * m_hat / (v_hat.sqrt() + self.eps);
            });
        }
    }
}

/// Softmax cross-entropy over `(n, k, 1, 1)` logits.
///
/// Returns the mean loss and the gradient w.r.t. the logits.
pub fn softmax_cross_entropy(logits: &Tensor, labels: &[usize]) -> (f64, Tensor) {
    let (n, k, _, _) = logits.dim();
    assert_eq!(n, labels.len(), "label count mismatch");
    let mut grad = Tensor::zeros(logits.dim());
    let mut loss = 0.0;
    for i in 0..n {
        let row: Vec<f64> = (0..k).map(|j| logits[(i, j, 0, 0)]).collect();
        let max = row.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let exps: Vec<f64> = row.iter().map(|v| (v - max).exp()).collect();
        let z: f64 = exps.iter().sum();
        let y = labels[i];
        assert!(y < k, "label {y} out of range for {k} classes");
        loss += -(exps[y] / z).ln();
        for j in 0..k {
            let p = exps[j] / z;
            grad[(i, j, 0, 0)] = (p - if j == y { 1.0 } else { 0.0 }) / n as f64;
        }
    }
    (loss / n as f64, grad)
}

/// Softmax probabilities for `(n, k, 1, 1)` logits, row-normalized.
pub fn softmax(logits: &Tensor) -> Vec<Vec<f64>> {
    let (n, k, _, _) = logits.dim();
    (0..n)
        .map(|i| {
            let row: Vec<f64> = (0..k).map(|j| logits[(i, j, 0, 0)]).collect();
            let max = row.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            let exps: Vec<f64> = row.iter().map(|v| (v - max).exp()).collect();
            let z: f64 = exps.iter().sum();
            exps.into_iter().map(|e| e / z).collect()
        })
        .collect()
}
