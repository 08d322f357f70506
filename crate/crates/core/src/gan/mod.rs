//! Generative adversarial models: DCGAN and progressive-growing (PGGAN)
//! generators/discriminators, unconditional or label-conditional, with
//! seeded training, per-epoch checkpoints and deterministic sampling.
//!
//! The adversarial objective is the non-saturating GAN loss on
//! discriminator probabilities; generators end in tanh so samples always
//! land in `[-1, 1]`. Conditional models receive the class as a one-hot
//! concatenated to the latent (generator) and as broadcast constant
//! channels (discriminator).

mod checkpoint;
mod model;
mod train;

pub use checkpoint::{load_checkpoint, save_checkpoint, TrainingLog};
pub use model::{GanModel, PROB_EPS};
pub(crate) use model::grids_to_signed_tensor;
pub use train::{disc_fake_accuracy, train_gan, TrainedGan};

use ndarray::{Array2, Array4};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum GanArch {
    Dcgan,
    Pggan,
}

/// Adam hyperparameters for both networks.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AdamParams {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl Default for AdamParams {
    fn default() -> Self {
        // DCGAN-paper convention.
        Self { lr: 2e-4, beta1: 0.5, beta2: 0.999, eps: 1e-8 }
    }
}

/// Full description of one generative experiment.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GanConfig {
    pub model_id: String,
    pub arch: GanArch,
    pub latent_dim: usize,
    /// Output resolution; must be `pggan_base * 2^k`.
    pub image_size: usize,
    pub image_channels: usize,
    pub conditional: bool,
    /// Number of classes when conditional, 0 otherwise.
    pub label_cardinality: usize,
    pub batch_size: usize,
    /// Training epochs (per stage for pggan).
    pub epochs: usize,
    pub adam: AdamParams,
    /// Starting resolution of the progressive schedule.
    pub pggan_base: usize,
    /// Portion of each stage's steps spent ramping the blend factor.
    pub fade_fraction: f64,
    /// Width table: channels at resolution r = min(channel_max, channel_base / r).
    pub channel_base: usize,
    pub channel_max: usize,
    /// PGGAN extras, on by default.
    pub pixel_norm: bool,
    pub minibatch_stddev: bool,
}

impl GanConfig {
    /// Small defaults suitable for a workstation smoke run.
    pub fn desk(model_id: &str, arch: GanArch) -> Self {
        Self {
            model_id: model_id.to_string(),
            arch,
            latent_dim: 32,
            image_size: 32,
            image_channels: 1,
            conditional: false,
            label_cardinality: 0,
            batch_size: 32,
            epochs: 3,
            adam: AdamParams::default(),
            pggan_base: 4,
            fade_fraction: 0.5,
            channel_base: 256,
            channel_max: 64,
            pixel_norm: true,
            minibatch_stddev: true,
        }
    }

    /// Full-scale X-ray preset: 256px, latent 512, batch 32.
    pub fn paper_xray(model_id: &str, arch: GanArch, conditional: bool, label_cardinality: usize) -> Self {
        Self {
            model_id: model_id.to_string(),
            arch,
            latent_dim: 512,
            image_size: 256,
            image_channels: 1,
            conditional,
            label_cardinality: if conditional { label_cardinality } else { 0 },
            batch_size: 32,
            epochs: if conditional { 60 } else { 30 },
            adam: AdamParams::default(),
            pggan_base: 4,
            fade_fraction: 0.5,
            channel_base: 8192,
            channel_max: 512,
            pixel_norm: true,
            minibatch_stddev: true,
        }
    }

    /// Full-scale histology preset: 256px RGB, latent 256, 10 epochs.
    pub fn paper_histology(model_id: &str, arch: GanArch) -> Self {
        Self {
            latent_dim: 256,
            image_channels: 3,
            epochs: 10,
            ..Self::paper_xray(model_id, arch, false, 0)
        }
    }

    /// Channel width at a resolution, from the table parameters.
    pub fn channels_at(&self, resolution: usize) -> usize {
        (self.channel_base / resolution).clamp(1, self.channel_max)
    }

    pub fn validate(&self) -> Result<()> {
        if self.latent_dim == 0 || self.batch_size == 0 || self.epochs == 0 {
            return Err(Error::Config("latent_dim, batch_size and epochs must be positive".into()));
        }
        if self.image_channels != 1 && self.image_channels != 3 {
            return Err(Error::Config(format!("image_channels must be 1 or 3, got {}", self.image_channels)));
        }
        if self.pggan_base < 4 || !self.pggan_base.is_power_of_two() {
            return Err(Error::Config(format!("pggan_base must be a power of two >= 4, got {}", self.pggan_base)));
        }
        // Both architectures build by doubling from the base resolution.
        let mut r = self.pggan_base;
        while r < self.image_size {
            r *= 2;
        }
        if r != self.image_size {
            return Err(Error::Config(format!(
                "image_size {} is not reachable by doubling from {}",
                self.image_size, self.pggan_base
            )));
        }
        if self.conditional && self.label_cardinality < 2 {
            return Err(Error::Config("conditional models need label_cardinality >= 2".into()));
        }
        if !self.conditional && self.label_cardinality != 0 {
            return Err(Error::Config("unconditional models must set label_cardinality = 0".into()));
        }
        if !(0.0..=1.0).contains(&self.fade_fraction) {
            return Err(Error::Config(format!("fade_fraction must be in [0,1], got {}", self.fade_fraction)));
        }
        Ok(())
    }
}

/// One stage of the progressive schedule.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Stage {
    pub resolution: usize,
    pub epochs: usize,
    /// Whether this stage fades in (the first stage never does).
    pub fades: bool,
}

/// Resolutions `base, 2*base, ..., image_size`, each with the full epoch
/// count; every stage past the first fades its new layers in.
pub fn progressive_schedule(config: &GanConfig) -> Result<Vec<Stage>> {
    if config.arch != GanArch::Pggan {
        return Err(Error::Precondition("progressive_schedule requires arch = pggan".into()));
    }
    config.validate()?;
    let mut stages = Vec::new();
    let mut r = config.pggan_base;
    loop {
        stages.push(Stage { resolution: r, epochs: config.epochs, fades: r != config.pggan_base });
        if r == config.image_size {
            break;
        }
        r *= 2;
    }
    Ok(stages)
}

/// Blend factor at `step` (0-based) of a stage with `total_steps`:
/// linear 0 -> 1 over the first `fade_fraction` of the steps, then 1.
pub fn stage_alpha(step: usize, total_steps: usize, fade_fraction: f64, fades: bool) -> f64 {
    if !fades || total_steps == 0 || fade_fraction <= 0.0 {
        return 1.0;
    }
    let ramp = fade_fraction * total_steps as f64;
    (step as f64 / ramp).min(1.0)
}

/// Fade-in combination `alpha * new + (1 - alpha) * upsampled_prev`.
pub fn blend(prev_upsampled: &Array4<f64>, new: &Array4<f64>, alpha: f64) -> Result<Array4<f64>> {
    if prev_upsampled.dim() != new.dim() {
        return Err(Error::ShapeMismatch {
            expected: format!("{:?}", new.dim()),
            got: format!("{:?}", prev_upsampled.dim()),
        });
    }
    if !(0.0..=1.0).contains(&alpha) {
        return Err(Error::Precondition(format!("alpha must be in [0,1], got {alpha}")));
    }
    Ok(prev_upsampled + &((new - prev_upsampled) * alpha))
}

/// Non-saturating GAN losses on clamped probabilities.
///
/// `d_loss = -mean ln d_real - mean ln(1 - d_fake)`,
/// `g_loss = -mean ln d_fake`, probabilities clamped to
/// `[PROB_EPS, 1 - PROB_EPS]` first.
pub fn gan_losses(d_real: &[f64], d_fake: &[f64]) -> Result<(f64, f64)> {
    if d_real.is_empty() || d_fake.is_empty() {
        return Err(Error::Precondition("probability batches must be non-empty".into()));
    }
    let clamp = |p: f64| p.clamp(PROB_EPS, 1.0 - PROB_EPS);
    let real_term = -d_real.iter().map(|p| clamp(*p).ln()).sum::<f64>() / d_real.len() as f64;
    let fake_term = -d_fake.iter().map(|p| (1.0 - clamp(*p)).ln()).sum::<f64>() / d_fake.len() as f64;
    let g_loss = -d_fake.iter().map(|p| clamp(*p).ln()).sum::<f64>() / d_fake.len() as f64;
    Ok((real_term + fake_term, g_loss))
}

/// A batch of latent vectors, optionally labeled.
#[derive(Debug, Clone)]
pub struct LatentBatch {
    /// `n x latent_dim`, standard normal.
    pub z: Array2<f64>,
    pub labels: Option<Vec<usize>>,
}

impl LatentBatch {
    /// Draw `n` latents from the generator stream of `rng`.
    pub fn draw(n: usize, latent_dim: usize, labels: Option<Vec<usize>>, rng: &mut rand_chacha::ChaCha8Rng) -> Self {
        let z = Array2::from_shape_fn((n, latent_dim), |_| rng::standard_normal(rng));
        Self { z, labels }
    }

    /// Labels present iff the model is conditional, every id in range.
    pub fn validate(&self, config: &GanConfig) -> Result<()> {
        match (&self.labels, config.conditional) {
            (Some(_), false) => {
                Err(Error::Precondition("labels supplied to an unconditional model".into()))
            }
            (None, true) => Err(Error::Precondition("conditional model requires labels".into())),
            (Some(ls), true) => {
                if ls.len() != self.z.dim().0 {
                    return Err(Error::Precondition(format!(
                        "{} labels for {} latents",
                        ls.len(),
                        self.z.dim().0
                    )));
                }
                if let Some(bad) = ls.iter().find(|l| **l >= config.label_cardinality) {
                    return Err(Error::Precondition(format!(
                        "label id {bad} out of range (cardinality {})",
                        config.label_cardinality
                    )));
                }
                Ok(())
            }
            (None, false) => Ok(()),
        }
    }

    /// Generator input `(n, latent_dim + label_cardinality, 1, 1)`:
    /// one-hot labels concatenated after the latent when conditional.
    pub fn to_generator_input(&self, config: &GanConfig) -> Result<Array4<f64>> {
        self.validate(config)?;
        let (n, d) = self.z.dim();
        let extra = if config.conditional { config.label_cardinality } else { 0 };
        let mut out = Array4::zeros((n, d + extra, 1, 1));
        for i in 0..n {
            for j in 0..d {
                out[(i, j, 0, 0)] = self.z[(i, j)];
            }
            if let Some(ls) = &self.labels {
                out[(i, d + ls[i], 0, 0)] = 1.0;
            }
        }
        Ok(out)
    }
}

/// Broadcast one-hot label planes appended to an image batch, the
/// discriminator-side conditioning.
pub fn append_label_channels(
    images: &Array4<f64>,
    labels: &[usize],
    cardinality: usize,
) -> Result<Array4<f64>> {
    let (n, c, h, w) = images.dim();
    if labels.len() != n {
        return Err(Error::Precondition(format!("{} labels for {n} images", labels.len())));
    }
    let mut out = Array4::zeros((n, c + cardinality, h, w));
    for i in 0..n {
        for ci in 0..c {
            for y in 0..h {
                for x in 0..w {
                    out[(i, ci, y, x)] = images[(i, ci, y, x)];
                }
            }
        }
        let l = labels[i];
        if l >= cardinality {
            return Err(Error::Precondition(format!("label id {l} out of range")));
        }
        for y in 0..h {
            for x in 0..w {
                out[(i, c + l, y, x)] = 1.0;
            }
        }
    }
    Ok(out)
}

/// Sample from a checkpointed model and write provenance-tagged PNGs.
///
/// Each record carries `source_kind = synthetic`, the (model, checkpoint)
/// provenance pair, and any fixed labels plus the per-sample label value
/// when the model is conditional.
#[allow(clippy::too_many_arguments)]
pub fn export_samples(
    model: &GanModel,
    ckpt: &Checkpoint,
    n: usize,
    label_ids: Option<&[usize]>,
    label_key: Option<(&str, &[String])>,
    fixed_labels: &[(String, String)],
    modality: crate::corpus::Modality,
    seed: u64,
    out_dir: &std::path::Path,
) -> Result<Vec<crate::corpus::ImageRecord>> {
    use crate::corpus::{ImageRecord, Provenance, SourceKind, Split};
    use crate::imageio::{save, SaveDepth};

    std::fs::create_dir_all(out_dir).map_err(|e| Error::io(out_dir, e))?;
    let samples = model.sample(n, label_ids, seed)?;
    let mut records = Vec::with_capacity(n);
    for (i, img) in samples.iter().enumerate() {
        // The seed is part of the id so that separate draws from the same
        // checkpoint never collide in a manifest.
        let id = format!("{}_{}_s{}_{:05}", ckpt.model_id, ckpt.checkpoint_id(), seed, i);
        let path = out_dir.join(format!("{id}.png"));
        let unit = img.signed_to_unit()?;
        save(&unit, &path, if unit.channels() == 1 { SaveDepth::Sixteen } else { SaveDepth::Eight })?;
        let mut labels: std::collections::BTreeMap<String, String> =
            fixed_labels.iter().cloned().collect();
        if let (Some(ids), Some((key, values))) = (label_ids, label_key) {
            let value = values.get(ids[i]).ok_or_else(|| {
                Error::Precondition(format!("label id {} has no value name", ids[i]))
            })?;
            labels.insert(key.to_string(), value.clone());
        }
        records.push(ImageRecord {
            id,
            path: path.to_string_lossy().into_owned(),
            modality,
            width: img.width() as u32,
            height: img.height() as u32,
            channels: img.channels() as u8,
            labels,
            split: Split::Train,
            source_kind: SourceKind::Synthetic,
            provenance: Some(Provenance {
                model_id: ckpt.model_id.clone(),
                checkpoint_id: ckpt.checkpoint_id(),
            }),
        });
    }
    Ok(records)
}

/// Per-epoch trained state: metadata plus a reference to the weight
/// payload (a checkpoint container file when persisted).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Checkpoint {
    pub model_id: String,
    /// Epoch index within the owning stage.
    pub epoch: usize,
    /// Resolution of the stage that produced this checkpoint (equals
    /// image_size for dcgan).
    pub stage_resolution: usize,
    /// Blend factor at the end of the epoch (1 outside fades).
    pub alpha: f64,
    /// Opaque payload reference: path of the weight container, empty for
    /// in-memory checkpoints.
    pub payload_ref: String,
    /// Mean losses over the epoch.
    pub d_loss: f64,
    pub g_loss: f64,
}

impl Checkpoint {
    pub fn checkpoint_id(&self) -> String {
        format!("s{}_e{:03}", self.stage_resolution, self.epoch)
    }

    pub fn validate(&self, config: &GanConfig) -> Result<()> {
        if !(0.0..=1.0).contains(&self.alpha) {
            return Err(Error::Precondition(format!("alpha {} outside [0,1]", self.alpha)));
        }
        let mut r = config.pggan_base;
        let mut ok = false;
        while r <= config.image_size {
            if r == self.stage_resolution {
                ok = true;
                break;
            }
            r *= 2;
        }
        if !ok {
            return Err(Error::Precondition(format!(
                "stage resolution {} not in the schedule of {}",
                self.stage_resolution, self.model_id
            )));
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn pg_config(target: usize) -> GanConfig {
        let mut c = GanConfig::desk("t", GanArch::Pggan);
        c.image_size = target;
        c
    }

    #[test]
    fn schedule_doubles_from_base_to_target() {
        let stages = progressive_schedule(&pg_config(256)).unwrap();
        let res: Vec<usize> = stages.iter().map(|s| s.resolution).collect();
        assert_eq!(res, vec![4, 8, 16, 32, 64, 128, 256]);
        assert_eq!(stages.len(), 7);
        assert!(stages.iter().all(|s| s.epochs == 3));
        assert!(!stages[0].fades);
        assert!(stages[1..].iter().all(|s| s.fades));
    }

    #[test]
    fn single_stage_schedule_never_fades() {
        let stages = progressive_schedule(&pg_config(4)).unwrap();
        assert_eq!(stages.len(), 1);
        assert!(!stages[0].fades);
        assert_eq!(stage_alpha(0, 100, 0.5, stages[0].fades), 1.0);
    }

    #[test]
    fn unreachable_target_is_a_config_error() {
        let mut c = pg_config(4);
        c.image_size = 6;
        assert!(progressive_schedule(&c).is_err());
    }

    #[test]
    fn schedule_length_is_log2_plus_one() {
        for k in 0..6 {
            let target = 4 << k;
            let stages = progressive_schedule(&pg_config(target)).unwrap();
            assert_eq!(stages.len(), k + 1, "target {target}");
        }
    }

    #[test]
    fn alpha_ramps_linearly_then_saturates() {
        let total = 100;
        assert_eq!(stage_alpha(0, total, 0.5, true), 0.0);
        assert!((stage_alpha(25, total, 0.5, true) - 0.5).abs() < 1e-12);
        assert_eq!(stage_alpha(50, total, 0.5, true), 1.0);
        assert_eq!(stage_alpha(99, total, 0.5, true), 1.0);
    }

    #[test]
    fn blend_endpoints_and_linearity() {
        let a = Array4::from_elem((2, 1, 4, 4), 0.0);
        let b = Array4::from_elem((2, 1, 4, 4), 1.0);
        assert_eq!(blend(&a, &b, 0.0).unwrap(), a);
        assert_eq!(blend(&a, &b, 1.0).unwrap(), b);
        let mid = blend(&a, &b, 0.5).unwrap();
        assert!(mid.iter().all(|v| (*v - 0.5).abs() < 1e-12));

        let mut rng = crate::rng::rng_from_seed(4);
        use rand::Rng;
        let a = Array4::from_shape_fn((2, 3, 4, 4), |_| rng.gen::<f64>());
        let b = Array4::from_shape_fn((2, 3, 4, 4), |_| rng.gen::<f64>());
        for alpha in [0.0, 0.25, 0.7, 1.0] {
            let got = blend(&a, &b, alpha).unwrap();
            let expect = &a + &((&b - &a) * alpha);
            for (x, y) in got.iter().zip(expect.iter()) {
                assert!((x - y).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn blend_rejects_shape_mismatch() {
        let a = Array4::<f64>::zeros((1, 1, 4, 4));
        let b = Array4::<f64>::zeros((1, 1, 8, 8));
        assert!(blend(&a, &b, 0.5).is_err());
    }

    #[test]
    fn losses_have_the_closed_form_at_half() {
        let (d, g) = gan_losses(&[0.5, 0.5], &[0.5]).unwrap();
        assert!((d - 2.0 * std::f64::consts::LN_2).abs() < 1e-6);
        assert!((g - std::f64::consts::LN_2).abs() < 1e-6);
    }

    #[test]
    fn losses_at_the_confident_extremes() {
        let (d, g) = gan_losses(&[1.0 - PROB_EPS], &[PROB_EPS]).unwrap();
        assert!(d.abs() < 1e-5, "d_loss should be near 0, got {d}");
        assert!((g - (-PROB_EPS.ln())).abs() < 1e-6, "g_loss should be -ln eps, got {g}");
        assert!(g > 15.0);
    }

    #[test]
    fn batch_losses_match_a_scalar_loop_oracle() {
        let mut rng = crate::rng::rng_from_seed(6);
        use rand::Rng;
        let d_real: Vec<f64> = (0..17).map(|_| rng.gen_range(0.001..0.999)).collect();
        let d_fake: Vec<f64> = (0..9).map(|_| rng.gen_range(0.001..0.999)).collect();
        let (d, g) = gan_losses(&d_real, &d_fake).unwrap();

        let mut dsum = 0.0;
        for p in &d_real {
            dsum += -p.clamp(PROB_EPS, 1.0 - PROB_EPS).ln() / d_real.len() as f64;
        }
        for p in &d_fake {
            dsum += -(1.0 - p.clamp(PROB_EPS, 1.0 - PROB_EPS)).ln() / d_fake.len() as f64;
        }
        let mut gsum = 0.0;
        for p in &d_fake {
            gsum += -p.clamp(PROB_EPS, 1.0 - PROB_EPS).ln() / d_fake.len() as f64;
        }
        assert!((d - dsum).abs() < 1e-12);
        assert!((g - gsum).abs() < 1e-12);
    }

    #[test]
    fn latent_batch_label_contract() {
        let mut rng = crate::rng::rng_from_seed(7);
        let mut cfg = GanConfig::desk("c", GanArch::Dcgan);
        cfg.conditional = true;
        cfg.label_cardinality = 3;

        let unlabeled = LatentBatch::draw(4, cfg.latent_dim, None, &mut rng);
        assert!(unlabeled.validate(&cfg).is_err());

        let labeled = LatentBatch::draw(4, cfg.latent_dim, Some(vec![0, 1, 2, 1]), &mut rng);
        labeled.validate(&cfg).unwrap();
        let input = labeled.to_generator_input(&cfg).unwrap();
        assert_eq!(input.dim(), (4, cfg.latent_dim + 3, 1, 1));
        assert_eq!(input[(2, cfg.latent_dim + 2, 0, 0)], 1.0);
        assert_eq!(input[(2, cfg.latent_dim + 1, 0, 0)], 0.0);

        let bad = LatentBatch::draw(2, cfg.latent_dim, Some(vec![0, 3]), &mut rng);
        assert!(bad.validate(&cfg).is_err());
    }

    #[test]
    fn label_planes_are_one_hot_broadcast() {
        let images = Array4::from_elem((2, 1, 4, 4), 0.5);
        let out = append_label_channels(&images, &[1, 0], 2).unwrap();
        assert_eq!(out.dim(), (2, 3, 4, 4));
        assert_eq!(out[(0, 2, 3, 3)], 1.0);
        assert_eq!(out[(0, 1, 3, 3)], 0.0);
        assert_eq!(out[(1, 1, 0, 0)], 1.0);
        assert_eq!(out[(0, 0, 2, 2)], 0.5);
    }
}
