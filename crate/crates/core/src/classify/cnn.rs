//! A small VGG-style convolutional classifier.
//!
//! Repeated blocks of two-or-three 3x3 convolutions plus max pooling,
//! widths table-driven by the input size, so the same code runs a
//! desk-scale net at 32x32 and a VGG16-shaped net at 256x256. After each
//! epoch the validation loss is recorded; the model returned is the epoch
//! that minimized it.

use ndarray::Array2;
use rand::seq::SliceRandom;

use crate::error::{Error, Result};
use crate::grid::PixelGrid;
use crate::nn::layers::*;
use crate::nn::{softmax, softmax_cross_entropy, Adam, Sequential, Tensor};
use crate::rng;

/// Block widths and depths plus head size; one entry per conv block.
#[derive(Debug, Clone, PartialEq)]
pub struct CnnArch {
    /// (channel width, convolutions) per block; each block ends in 2x2 max pool.
    pub blocks: Vec<(usize, usize)>,
    pub fc_width: usize,
}

impl CnnArch {
    /// Desk-scale table: enough blocks to pool the input down to 4x4,
    /// widths 8, 16, 32, ...
    pub fn desk(input_size: usize) -> Self {
        let n_blocks = (input_size as f64).log2() as usize - 2;
        let blocks = (0..n_blocks).map(|i| ((8usize << i).min(64), 2)).collect();
        Self { blocks, fc_width: 64 }
    }

    /// VGG16 block structure for 256-px inputs: widths 64..512, conv
    /// counts 2-2-3-3-3.
    pub fn vgg16() -> Self {
        Self {
            blocks: vec![(64, 2), (128, 2), (256, 3), (512, 3), (512, 3)],
            fc_width: 512,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct CnnConfig {
    pub arch: CnnArch,
    pub epochs: usize,
    pub batch_size: usize,
    pub lr: f64,
    /// Portion of the training set held out, stratified, for epoch selection.
    pub val_fraction: f64,
}

impl CnnConfig {
    pub fn desk(input_size: usize) -> Self {
        Self { arch: CnnArch::desk(input_size), epochs: 20, batch_size: 32, lr: 1e-3, val_fraction: 0.1 }
    }
}

pub struct CnnModel {
    net: Sequential,
    classes: Vec<usize>,
    pub best_epoch: usize,
    pub val_losses: Vec<f64>,
}

fn build_net(arch: &CnnArch, in_channels: usize, input_size: usize, classes: usize, rng: &mut rand_chacha::ChaCha8Rng) -> Result<Sequential> {
    let mut layers: Vec<Box<dyn Layer>> = Vec::new();
    let mut ch = in_channels;
    let mut size = input_size;
    for (width, convs) in &arch.blocks {
        for _ in 0..*convs {
            layers.push(Box::new(Conv2d::new(ch, *width, 3, 1, 1, WInit::He, rng)));
            layers.push(Box::new(LeakyRelu::relu()));
            ch = *width;
        }
        layers.push(Box::new(MaxPool2x::new()));
        if size % 2 != 0 || size < 2 {
            return Err(Error::Config(format!("input size {input_size} too small for {} blocks", arch.blocks.len())));
        }
        size /= 2;
    }
    layers.push(Box::new(Flatten::new()));
    layers.push(Box::new(Dense::new(ch * size * size, arch.fc_width, WInit::He, rng)));
    layers.push(Box::new(LeakyRelu::relu()));
    layers.push(Box::new(Dense::new(arch.fc_width, classes, WInit::He, rng)));
    Ok(Sequential::new(layers))
}

/// Images to a signed `(n, c, h, w)` tensor; unit-range inputs are
/// recentered to `[-1, 1]` so both corpora arms see identical scaling.
fn batch_tensor(images: &[&PixelGrid]) -> Result<Tensor> {
    crate::gan::grids_to_signed_tensor(images)
}

/// Stratified holdout: roughly `fraction` of each class, at least one
/// per class, deterministic in the rng.
fn stratified_holdout(labels: &[usize], fraction: f64, rng: &mut rand_chacha::ChaCha8Rng) -> (Vec<usize>, Vec<usize>) {
    let mut by_class: std::collections::BTreeMap<usize, Vec<usize>> = Default::default();
    for (i, l) in labels.iter().enumerate() {
        by_class.entry(*l).or_default().push(i);
    }
    let mut train = Vec::new();
    let mut val = Vec::new();
    for (_, mut members) in by_class {
        members.shuffle(rng);
        let n_val = ((members.len() as f64 * fraction).round() as usize).clamp(1, members.len() - 1);
        val.extend(members[..n_val].iter().copied());
        train.extend(members[n_val..].iter().copied());
    }
    train.sort_unstable();
    val.sort_unstable();
    (train, val)
}

/// Train on unit- or signed-range images; the returned model carries the
/// weights of the epoch with the lowest validation loss.
pub fn train_cnn(
    images: &[PixelGrid],
    labels: &[usize],
    config: &CnnConfig,
    seed: u64,
) -> Result<CnnModel> {
    if images.is_empty() || images.len() != labels.len() {
        return Err(Error::Precondition(format!(
            "{} images vs {} labels",
            images.len(),
            labels.len()
        )));
    }
    let mut classes: Vec<usize> = labels.to_vec();
    classes.sort_unstable();
    classes.dedup();
    if classes.len() < 2 {
        return Err(Error::Precondition("need at least two classes".into()));
    }
    let class_index: std::collections::BTreeMap<usize, usize> =
        classes.iter().enumerate().map(|(i, c)| (*c, i)).collect();
    let dense_labels: Vec<usize> = labels.iter().map(|l| class_index[l]).collect();

    let (h, w, c) = (images[0].height(), images[0].width(), images[0].channels());
    if h != w {
        return Err(Error::Precondition(format!("square inputs required, got {h}x{w}")));
    }
    for img in images {
        if (img.height(), img.width(), img.channels()) != (h, w, c) {
            return Err(Error::ShapeMismatch {
                expected: format!("{h}x{w}x{c}"),
                got: format!("{}x{}x{}", img.height(), img.width(), img.channels()),
            });
        }
    }

    let mut init_rng = rng::derive(seed, "cnn/init");
    let mut net = build_net(&config.arch, c, h, classes.len(), &mut init_rng)?;
    let mut adam = Adam::new(config.lr, 0.9, 0.999, 1e-8);
    let mut split_rng = rng::derive(seed, "cnn/valsplit");
    let (train_idx, val_idx) = stratified_holdout(&dense_labels, config.val_fraction, &mut split_rng);
    if val_idx.is_empty() {
        return Err(Error::Precondition("validation split is empty".into()));
    }
    let mut shuffle_rng = rng::derive(seed, "cnn/shuffle");

    let val_imgs: Vec<&PixelGrid> = val_idx.iter().map(|i| &images[*i]).collect();
    let val_x = batch_tensor(&val_imgs)?;
    let val_y: Vec<usize> = val_idx.iter().map(|i| dense_labels[*i]).collect();

    let mut best: Option<(f64, Sequential, usize)> = None;
    let mut val_losses = Vec::with_capacity(config.epochs);

    for epoch in 0..config.epochs {
        let mut order = train_idx.clone();
        order.shuffle(&mut shuffle_rng);
        for chunk in order.chunks(config.batch_size) {
            let imgs: Vec<&PixelGrid> = chunk.iter().map(|i| &images[*i]).collect();
            let x = batch_tensor(&imgs)?;
            let y: Vec<usize> = chunk.iter().map(|i| dense_labels[*i]).collect();
            net.zero_grad();
            let logits = net.forward(&x, true);
            let (loss, grad) = softmax_cross_entropy(&logits, &y);
            if !loss.is_finite() {
                return Err(Error::NonFinite(format!(
                    "training loss diverged at epoch {epoch} (lr {})",
                    config.lr
                )));
            }
            net.backward(&grad);
            adam.step(&mut net.params_mut());
        }

        let logits = net.forward(&val_x, false);
        let (val_loss, _) = softmax_cross_entropy(&logits, &val_y);
        if !val_loss.is_finite() {
            return Err(Error::NonFinite(format!("validation loss diverged at epoch {epoch}")));
        }
        val_losses.push(val_loss);
        let better = best.as_ref().map(|(b, _, _)| val_loss < *b).unwrap_or(true);
        if better {
            best = Some((val_loss, net.clone(), epoch));
        }
    }

    let (_, net, best_epoch) = best.expect("at least one epoch");
    Ok(CnnModel { net, classes, best_epoch, val_losses })
}

impl CnnModel {
    /// Per-class probabilities (softmax rows).
    pub fn predict_proba(&self, images: &[PixelGrid]) -> Result<Array2<f64>> {
        let refs: Vec<&PixelGrid> = images.iter().collect();
        let x = batch_tensor(&refs)?;
        let mut net = self.net.clone();
        let logits = net.forward(&x, false);
        let probs = softmax(&logits);
        Ok(Array2::from_shape_fn((probs.len(), self.classes.len()), |(i, j)| probs[i][j]))
    }

    pub fn predict(&self, images: &[PixelGrid]) -> Result<Vec<usize>> {
        let probs = self.predict_proba(images)?;
        Ok((0..probs.dim().0)
            .map(|i| {
                let row = probs.row(i);
                let mut best = 0;
                for j in 1..row.len() {
                    if row[j] > row[best] {
                        best = j;
                    }
                }
                self.classes[best]
            })
            .collect())
    }
}
