//! The adversarial training loop.
//!
//! One discriminator step then one generator step per batch. Everything
//! stochastic (shuffling, latents, fake labels) draws from streams
//! derived from the run seed, so identical seeds give identical loss
//! traces. A non-finite loss aborts training; checkpoints produced so
//! far stay valid.

use std::path::Path;

use rand::seq::SliceRandom;
use rand::Rng;

use super::model::{grids_to_signed_tensor, image_channel_grad, PROB_EPS};
use super::{
    gan_losses, progressive_schedule, stage_alpha, append_label_channels, Checkpoint, GanArch,
    GanConfig, GanModel, LatentBatch, Stage,
};
use crate::error::{Error, Result};
use crate::grid::PixelGrid;
use crate::nn::{ops, Adam, Tensor};
use crate::rng;

/// Everything a finished (or aborted) run leaves behind.
pub struct TrainedGan {
    pub model: GanModel,
    pub checkpoints: Vec<Checkpoint>,
    /// Per-batch discriminator / generator losses, in step order.
    pub d_loss_trace: Vec<f64>,
    pub g_loss_trace: Vec<f64>,
    /// Set when training stopped on a non-finite loss.
    pub aborted: Option<String>,
}

/// Train a model on unit-range images (plus labels when conditional).
///
/// Checkpoints are emitted once per epoch (per stage for pggan) and
/// written under `checkpoint_dir` when given; otherwise only their
/// metadata is recorded.
pub fn train_gan(
    config: &GanConfig,
    images: &[PixelGrid],
    labels: Option<&[usize]>,
    seed: u64,
    checkpoint_dir: Option<&Path>,
) -> Result<TrainedGan> {
    config.validate()?;
    if images.is_empty() {
        return Err(Error::Precondition("empty train set".into()));
    }
    for img in images {
        if img.height() != config.image_size || img.width() != config.image_size {
            return Err(Error::ShapeMismatch {
                expected: format!("{0}x{0}", config.image_size),
                got: format!("{}x{}", img.height(), img.width()),
            });
        }
        if img.channels() != config.image_channels {
            return Err(Error::ShapeMismatch {
                expected: format!("{} channels", config.image_channels),
                got: format!("{} channels", img.channels()),
            });
        }
    }
    if config.conditional {
        let ls = labels.ok_or_else(|| Error::Precondition("conditional training requires labels".into()))?;
        if ls.len() != images.len() {
            return Err(Error::Precondition(format!(
                "{} labels for {} images",
                ls.len(),
                images.len()
            )));
        }
        if let Some(bad) = ls.iter().find(|l| **l >= config.label_cardinality) {
            return Err(Error::Precondition(format!("label id {bad} out of range")));
        }
    }

    let stages: Vec<Stage> = match config.arch {
        GanArch::Dcgan => {
            vec![Stage { resolution: config.image_size, epochs: config.epochs, fades: false }]
        }
        GanArch::Pggan => progressive_schedule(config)?,
    };

    let mut model = GanModel::new(config.clone(), seed)?;
    let mut adam_g = Adam::new(config.adam.lr, config.adam.beta1, config.adam.beta2, config.adam.eps);
    let mut adam_d = Adam::new(config.adam.lr, config.adam.beta1, config.adam.beta2, config.adam.eps);
    let mut shuffle_rng = rng::derive(seed, &format!("gan/shuffle/{}", config.model_id));
    let mut latent_rng = rng::derive(seed, &format!("gan/latent/{}", config.model_id));

    let mut checkpoints = Vec::new();
    let mut d_trace = Vec::new();
    let mut g_trace = Vec::new();

    if let Some(dir) = checkpoint_dir {
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    }

    for (stage_idx, stage) in stages.iter().enumerate() {
        let batches_per_epoch = batch_starts(images.len(), config.batch_size).len();
        let total_steps = stage.epochs * batches_per_epoch;
        let mut step_in_stage = 0usize;
        // Optimizer moments do not transfer across growth events: the
        // parameter set they track changes shape.
        if config.arch == GanArch::Pggan {
            adam_g = Adam::new(config.adam.lr, config.adam.beta1, config.adam.beta2, config.adam.eps);
            adam_d = Adam::new(config.adam.lr, config.adam.beta1, config.adam.beta2, config.adam.eps);
        }

        for epoch in 0..stage.epochs {
            let mut order: Vec<usize> = (0..images.len()).collect();
            order.shuffle(&mut shuffle_rng);
            let mut epoch_d = Vec::new();
            let mut epoch_g = Vec::new();
            let mut last_alpha = if stage.fades { 0.0 } else { 1.0 };

            for start in batch_starts(images.len(), config.batch_size) {
                let idx = &order[start..(start + config.batch_size).min(images.len())];
                if idx.len() < 2 {
                    continue;
                }
                let alpha = stage_alpha(step_in_stage, total_steps, config.fade_fraction, stage.fades);
                last_alpha = alpha;

                let batch: Vec<&PixelGrid> = idx.iter().map(|i| &images[*i]).collect();
                let mut real = grids_to_signed_tensor(&batch)?;
                for _ in 0..log2_ratio(config.image_size, stage.resolution) {
                    real = ops::downsample2x(&real);
                }
                let real_labels: Option<Vec<usize>> =
                    labels.map(|ls| idx.iter().map(|i| ls[*i]).collect());

                let step = train_step(
                    &mut model,
                    config,
                    &real,
                    real_labels.as_deref(),
                    stage_idx,
                    alpha,
                    &mut adam_d,
                    &mut adam_g,
                    &mut latent_rng,
                )?;
                epoch_d.push(step.0);
                epoch_g.push(step.1);
                d_trace.push(step.0);
                g_trace.push(step.1);
                step_in_stage += 1;

                if !step.0.is_finite() || !step.1.is_finite() {
                    return Ok(TrainedGan {
                        model,
                        checkpoints,
                        d_loss_trace: d_trace,
                        g_loss_trace: g_trace,
                        aborted: Some(format!(
                            "non-finite loss at stage {} epoch {epoch} (d={}, g={})",
                            stage.resolution, step.0, step.1
                        )),
                    });
                }
            }

            let mean = |v: &[f64]| v.iter().sum::<f64>() / v.len().max(1) as f64;
            let mut ckpt = Checkpoint {
                model_id: config.model_id.clone(),
                epoch,
                stage_resolution: stage.resolution,
                alpha: last_alpha,
                payload_ref: String::new(),
                d_loss: mean(&epoch_d),
                g_loss: mean(&epoch_g),
            };
            if let Some(dir) = checkpoint_dir {
                let path = dir.join(format!("{}_{}.ckpt", config.model_id, ckpt.checkpoint_id()));
                super::save_checkpoint(&mut model, &ckpt, &path)?;
                ckpt.payload_ref = path.to_string_lossy().into_owned();
            }
            checkpoints.push(ckpt);
        }
    }

    Ok(TrainedGan { model, checkpoints, d_loss_trace: d_trace, g_loss_trace: g_trace, aborted: None })
}

/// One D step then one G step; returns (d_loss, g_loss).
#[allow(clippy::too_many_arguments)]
fn train_step(
    model: &mut GanModel,
    config: &GanConfig,
    real: &Tensor,
    real_labels: Option<&[usize]>,
    stage_idx: usize,
    alpha: f64,
    adam_d: &mut Adam,
    adam_g: &mut Adam,
    latent_rng: &mut rand_chacha::ChaCha8Rng,
) -> Result<(f64, f64)> {
    let n = real.dim().0;
    let card = config.label_cardinality;

    let disc_input = |images: &Tensor, labels: Option<&[usize]>| -> Result<Tensor> {
        match (config.conditional, labels) {
            (true, Some(ls)) => append_label_channels(images, ls, card),
            (true, None) => Err(Error::Precondition("conditional step without labels".into())),
            (false, _) => Ok(images.clone()),
        }
    };

    // --- discriminator step ---
    for (_, p) in model.disc_params_mut() {
        p.zero_grad();
    }
    let real_in = disc_input(real, real_labels)?;
    let p_real = model.disc_forward(&real_in, stage_idx, alpha, true);
    let grad_real = prob_grad(&p_real, ProbTerm::LnP, -1.0);
    model.disc_backward(&grad_real);

    let fake_labels: Option<Vec<usize>> = if config.conditional {
        Some((0..n).map(|_| latent_rng.gen_range(0..card)).collect())
    } else {
        None
    };
    let latents = LatentBatch::draw(n, config.latent_dim, fake_labels.clone(), latent_rng);
    let gen_input = latents.to_generator_input(config)?;
    let fake = model.generator_forward(&gen_input, stage_idx, alpha, true);
    let fake_in = disc_input(&fake, fake_labels.as_deref())?;
    let p_fake = model.disc_forward(&fake_in, stage_idx, alpha, true);
    let grad_fake = prob_grad(&p_fake, ProbTerm::LnOneMinusP, -1.0);
    model.disc_backward(&grad_fake);
    adam_d.step(&mut model.disc_params_mut());

    let (d_loss, _) = gan_losses(&flat(&p_real), &flat(&p_fake))?;

    // --- generator step ---
    for (_, p) in model.gen_params_mut() {
        p.zero_grad();
    }
    let g_labels: Option<Vec<usize>> = if config.conditional {
        Some((0..n).map(|_| latent_rng.gen_range(0..card)).collect())
    } else {
        None
    };
    let latents = LatentBatch::draw(n, config.latent_dim, g_labels.clone(), latent_rng);
    let gen_input = latents.to_generator_input(config)?;
    let fake = model.generator_forward(&gen_input, stage_idx, alpha, true);
    let fake_in = disc_input(&fake, g_labels.as_deref())?;
    let p = model.disc_forward(&fake_in, stage_idx, alpha, true);
    let grad_p = prob_grad(&p, ProbTerm::LnP, -1.0);
    let d_input_grad = model.disc_backward(&grad_p);
    let g_img_grad = image_channel_grad(&d_input_grad, config.image_channels);
    model.generator_backward(&g_img_grad);
    adam_g.step(&mut model.gen_params_mut());

    let (_, g_loss) = gan_losses(&flat(&p_real), &flat(&p))?;
    Ok((d_loss, g_loss))
}

enum ProbTerm {
    /// d/dp of mean ln p.
    LnP,
    /// d/dp of mean ln(1 - p).
    LnOneMinusP,
}

/// Gradient of `sign * mean(term)` w.r.t. each probability, with the
/// same clamping as the loss (zero gradient in the clamped region).
fn prob_grad(p: &Tensor, term: ProbTerm, sign: f64) -> Tensor {
    let n = p.dim().0 as f64;
    p.mapv(|v| {
        if !(PROB_EPS..=1.0 - PROB_EPS).contains(&v) {
            return 0.0;
        }
        match term {
            ProbTerm::LnP => sign / (n * v),
            ProbTerm::LnOneMinusP => -sign / (n * (1.0 - v)),
        }
    })
}

fn flat(p: &Tensor) -> Vec<f64> {
    p.iter().copied().collect()
}

fn batch_starts(n: usize, batch: usize) -> Vec<usize> {
    (0..n).step_by(batch.max(1)).filter(|s| n - s >= 2.min(n)).collect()
}

fn log2_ratio(full: usize, target: usize) -> usize {
    let mut k = 0;
    let mut r = target;
    while r < full {
        r *= 2;
        k += 1;
    }
    k
}

/// Fraction of generated samples the discriminator scores below 0.5,
/// evaluated on clones so the model is untouched.
pub fn disc_fake_accuracy(model: &GanModel, n: usize, seed: u64) -> Result<f64> {
    let config = model.config().clone();
    let mut rng = rng::derive(seed, "gan/fake_acc");
    let labels: Option<Vec<usize>> = if config.conditional {
        Some((0..n).map(|_| rng.gen_range(0..config.label_cardinality)).collect())
    } else {
        None
    };
    let latents = LatentBatch::draw(n, config.latent_dim, labels.clone(), &mut rng);
    let fake = model.sample_tensor(&latents)?;
    let fake_in = match labels {
        Some(ls) => append_label_channels(&fake, &ls, config.label_cardinality)?,
        None => fake,
    };
    let mut scratch = model.clone();
    let stage = scratch.stage_count() - 1;
    let p = scratch.disc_forward(&fake_in, stage, 1.0, false);
    Ok(p.iter().filter(|v| **v < 0.5).count() as f64 / n as f64)
}
