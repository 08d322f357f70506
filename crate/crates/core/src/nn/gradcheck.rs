//! Central finite-difference verification of backward passes.
//!
//! The probe loss is `L = sum(forward(x) * R)` for a fixed random `R`, so
//! `dL/dy = R` exercises every output element with an O(1) gradient. Both
//! input and parameter gradients are compared against `(L(v+h) - L(v-h)) / 2h`.

use ndarray::ArrayD;
use rand::Rng;

use super::layers::{Layer, Tensor};
use crate::rng::rng_from_seed;

const STEP: f64 = 1e-5;
/// Elements probed per array; larger arrays are stride-sampled.
const MAX_PROBES: usize = 200;

/// Outcome of one gradient check.
#[derive(Debug, Clone)]
pub struct GradReport {
    pub layer: &'static str,
    pub max_rel_error: f64,
    pub probes: usize,
}

fn rel_error(analytic: f64, numeric: f64) -> f64 {
    let denom = analytic.abs().max(numeric.abs());
    if denom < 1e-7 {
        // Both effectively zero: report the absolute gap against the
        // finite-difference noise floor instead of a 0/0 ratio.
        (analytic - numeric).abs() / 1e-7
    } else {
        (analytic - numeric).abs() / denom
    }
}

fn probe_indices(len: usize) -> Vec<usize> {
    if len <= MAX_PROBES {
        (0..len).collect()
    } else {
        let stride = len / MAX_PROBES;
        (0..MAX_PROBES).map(|i| i * stride).collect()
    }
}

/// Check a layer's input and parameter gradients at `x`.
///
/// `train` is passed through to forward. Returns the worst relative
/// error observed; the layer is left with garbage gradient state.
pub fn check_layer(layer: &mut dyn Layer, x: &Tensor, train: bool, seed: u64) -> GradReport {
    let mut rng = rng_from_seed(seed);
    let y0 = layer.forward(x, train);
    let r = Tensor::from_shape_fn(y0.dim(), |_| rng.gen::<f64>() - 0.5);

    // Analytic pass.
    for (_, p) in layer.params_mut() {
        p.zero_grad();
    }
    let _ = layer.forward(x, train);
    let dx = layer.backward(&r);
    let param_grads: Vec<ArrayD<f64>> = layer.params_mut().iter().map(|(_, p)| p.grad.clone()).collect();

    let loss = |layer: &mut dyn Layer, x: &Tensor| -> f64 {
        let y = layer.forward(x, train);
        y.iter().zip(r.iter()).map(|(a, b)| a * b).sum()
    };

    let mut worst = 0f64;
    let mut probes = 0usize;

    // Input gradient.
    let flat_len = x.len();
    for idx in probe_indices(flat_len) {
        let mut xp = x.clone();
        let mut xm = x.clone();
        {
            let sp = xp.as_slice_mut().unwrap();
            sp[idx] += STEP;
        }
        {
            let sm = xm.as_slice_mut().unwrap();
            sm[idx] -= STEP;
        }
        let numeric = (loss(layer, &xp) - loss(layer, &xm)) / (2.0 * STEP);
        let analytic = dx.as_slice().unwrap()[idx];
        worst = worst.max(rel_error(analytic, numeric));
        probes += 1;
    }

    // Parameter gradients.
    let n_params = param_grads.len();
    for pi in 0..n_params {
        let len = param_grads[pi].len();
        for idx in probe_indices(len) {
            {
                let (_, p) = &mut layer.params_mut()[pi];
                p.value.as_slice_mut().unwrap()[idx] += STEP;
            }
            let lp = loss(layer, x);
            {
                let (_, p) = &mut layer.params_mut()[pi];
                p.value.as_slice_mut().unwrap()[idx] -= 2.0 * STEP;
            }
            let lm = loss(layer, x);
            {
                let (_, p) = &mut layer.params_mut()[pi];
                p.value.as_slice_mut().unwrap()[idx] += STEP;
            }
            let numeric = (lp - lm) / (2.0 * STEP);
            let analytic = param_grads[pi].as_slice().unwrap()[idx];
            worst = worst.max(rel_error(analytic, numeric));
            probes += 1;
        }
    }

    GradReport { layer: layer.kind(), max_rel_error: worst, probes }
}

/// A random batch kept away from activation kinks: values with magnitude
/// below `margin` are pushed out to `margin` with their sign.
pub fn kink_free_batch(shape: (usize, usize, usize, usize), margin: f64, seed: u64) -> Tensor {
    let mut rng = rng_from_seed(seed);
    Tensor::from_shape_fn(shape, |_| {
        let v: f64 = rng.gen::<f64>() * 2.0 - 1.0;
        if v.abs() < margin {
            margin * if v < 0.0 { -1.0 } else { 1.0 }
        } else {
            v
        }
    })
}
