//! Behavioral checks on GAN training: conditional sampling separates the
//! classes it was conditioned on, and the discriminator's grip on fakes
//! loosens as the generator trains.

use rand::Rng;

use synthbench_core::gan::{disc_fake_accuracy, train_gan, GanArch, GanConfig, GanModel};
use synthbench_core::grid::{PixelGrid, RangeTag};
use synthbench_core::rng;

/// Class 0: bright left half; class 1: bright right half.
fn sided_corpus(n: usize, size: usize, seed: u64) -> (Vec<PixelGrid>, Vec<usize>) {
    let mut r = rng::rng_from_seed(seed);
    let mut images = Vec::with_capacity(n);
    let mut labels = Vec::with_capacity(n);
    for i in 0..n {
        let class = i % 2;
        images.push(
            PixelGrid::from_fn(size, size, RangeTag::Unit, |_, x| {
                let bright = if class == 0 { x < size / 2 } else { x >= size / 2 };
                let base: f32 = if bright { 0.85 } else { 0.12 };
                (base + 0.08 * r.gen::<f32>()).clamp(0.0, 1.0)
            })
            .unwrap(),
        );
        labels.push(class);
    }
    (images, labels)
}

fn mean_image(samples: &[PixelGrid]) -> Vec<f64> {
    let len = samples[0].data().len();
    let mut acc = vec![0.0; len];
    for s in samples {
        for (a, v) in acc.iter_mut().zip(s.data().iter()) {
            *a += f64::from(*v) / samples.len() as f64;
        }
    }
    acc
}

fn l2(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b.iter()).map(|(x, y)| (x - y) * (x - y)).sum::<f64>().sqrt()
}

#[test]
fn conditional_dcgan_sampling_tracks_the_requested_class() {
    let size = 16;
    let (images, labels) = sided_corpus(128, size, 21);
    let config = GanConfig {
        conditional: true,
        label_cardinality: 2,
        image_size: size,
        latent_dim: 8,
        channel_base: 128,
        channel_max: 32,
        epochs: 30,
        batch_size: 16,
        ..GanConfig::desk("cond", GanArch::Dcgan)
    };
    let run = train_gan(&config, &images, Some(&labels), 5, None).unwrap();
    assert!(run.aborted.is_none(), "aborted: {:?}", run.aborted);

    // Class means of the real corpus, in the signed range the sampler uses.
    let signed: Vec<PixelGrid> = images.iter().map(|i| i.unit_to_signed().unwrap()).collect();
    let class0: Vec<PixelGrid> = signed
        .iter()
        .zip(labels.iter())
        .filter(|(_, l)| **l == 0)
        .map(|(i, _)| i.clone())
        .collect();
    let class1: Vec<PixelGrid> = signed
        .iter()
        .zip(labels.iter())
        .filter(|(_, l)| **l == 1)
        .map(|(i, _)| i.clone())
        .collect();
    let real_mean0 = mean_image(&class0);
    let real_mean1 = mean_image(&class1);

    let n = 64;
    let sampled0 = run.model.sample(n, Some(&vec![0; n]), 77).unwrap();
    let sampled1 = run.model.sample(n, Some(&vec![1; n]), 78).unwrap();
    let gen_mean0 = mean_image(&sampled0);
    let gen_mean1 = mean_image(&sampled1);

    // Each conditional mean sits closer to its own class mean.
    let d00 = l2(&gen_mean0, &real_mean0);
    let d01 = l2(&gen_mean0, &real_mean1);
    let d11 = l2(&gen_mean1, &real_mean1);
    let d10 = l2(&gen_mean1, &real_mean0);
    assert!(d00 < d01, "label-0 samples closer to class 1: {d00:.3} vs {d01:.3}");
    assert!(d11 < d10, "label-1 samples closer to class 0: {d11:.3} vs {d10:.3}");
}

/// Statistical check over 3 seeds; flags instead of failing, since
/// adversarial dynamics on a smoke budget are noisy.
#[test]
fn discriminator_fake_accuracy_moves_toward_equilibrium() {
    let size = 16;
    let (images, _) = sided_corpus(96, size, 31);
    let mut early_ok = 0;
    let mut late_ok = 0;
    for seed in [1u64, 2, 3] {
        let config = GanConfig {
            image_size: size,
            latent_dim: 8,
            channel_base: 128,
            channel_max: 32,
            epochs: 8,
            batch_size: 16,
            ..GanConfig::desk(&format!("flag{seed}"), GanArch::Dcgan)
        };
        let run = train_gan(&config, &images, None, seed, None).unwrap();
        assert!(run.aborted.is_none());

        // Trained discriminator vs an untrained generator's output.
        let untrained = GanModel::new(
            GanConfig { model_id: format!("fresh{seed}"), ..config.clone() },
            seed + 1000,
        )
        .unwrap();
        let garbage = untrained.sample(64, None, 9).unwrap();
        let probs = run.model.discriminate(&garbage, None).unwrap();
        let acc_untrained = probs.iter().filter(|p| **p < 0.5).count() as f64 / 64.0;

        // Same discriminator vs its own trained generator.
        let acc_trained = disc_fake_accuracy(&run.model, 64, 9).unwrap();

        if acc_untrained >= 0.9 {
            early_ok += 1;
        }
        if acc_trained <= 0.75 {
            late_ok += 1;
        }
        eprintln!(
            "seed {seed}: fake-accuracy untrained-G {acc_untrained:.2}, trained-G {acc_trained:.2}"
        );
    }
    if early_ok < 2 || late_ok < 2 {
        eprintln!(
            "FLAG: discriminator fake-accuracy did not move as expected \
             (untrained >= 0.9 in {early_ok}/3 seeds, trained <= 0.75 in {late_ok}/3 seeds)"
        );
    }
}
