//! Procedurally generated desk-scale corpora.
//!
//! Two families: a two-class texture corpus (oriented stripes vs blob
//! noise) for end-to-end substitution runs, and hull-shaped "anatomy"
//! images vs pure noise for triage checks. Everything derives from the
//! seed, so corpora regenerate bit-identically.

use std::path::Path;

use rand::Rng;
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::grid::{PixelGrid, RangeTag};
use crate::imageio::{save, SaveDepth};
use crate::rng;

pub const STRIPES: usize = 0;
pub const BLOBS: usize = 1;
pub const CLASS_NAMES: [&str; 2] = ["stripes", "blobs"];

/// Oriented sinusoidal stripes. Orientation, frequency and phase jitter
/// mildly around class-wide anchors (plus pixel noise), so individual
/// images differ while the coarse layout stays recognizable — the same
/// property real anatomy corpora have.
pub fn stripes_image(size: usize, rng: &mut ChaCha8Rng) -> PixelGrid {
    let angle = std::f32::consts::FRAC_PI_4 + 0.12 * (rng.gen::<f32>() - 0.5);
    let freq = 2.0 * std::f32::consts::PI * (4.0 + 0.4 * (rng.gen::<f32>() - 0.5)) / size as f32;
    let phase = 0.5 * (rng.gen::<f32>() - 0.5);
    let (ca, sa) = (angle.cos(), angle.sin());
    let mut noise = Vec::with_capacity(size * size);
    for _ in 0..size * size {
        noise.push(rng.gen::<f32>());
    }
    PixelGrid::from_fn(size, size, RangeTag::Unit, |y, x| {
        let t = ca * x as f32 + sa * y as f32;
        let wave = 0.5 + 0.5 * (freq * t + phase).sin();
        (0.75 * wave + 0.2 * noise[y * size + x] + 0.025).clamp(0.0, 1.0)
    })
    .expect("values clamped to range")
}

/// Smooth blob noise: gaussian bumps near four anchor positions with
/// positional and size jitter, no directional structure.
pub fn blobs_image(size: usize, rng: &mut ChaCha8Rng) -> PixelGrid {
    let s = size as f32;
    let anchors = [(0.30f32, 0.30f32), (0.70, 0.30), (0.30, 0.70), (0.70, 0.70)];
    let bumps: Vec<(f32, f32, f32)> = anchors
        .iter()
        .map(|(ax, ay)| {
            (
                (ax + 0.10 * (rng.gen::<f32>() - 0.5)) * s,
                (ay + 0.10 * (rng.gen::<f32>() - 0.5)) * s,
                s * (0.11 + 0.04 * rng.gen::<f32>()),
            )
        })
        .collect();
    let mut noise = Vec::with_capacity(size * size);
    for _ in 0..size * size {
        noise.push(rng.gen::<f32>());
    }
    PixelGrid::from_fn(size, size, RangeTag::Unit, |y, x| {
        let mut v = 0.0f32;
        for (cx, cy, sig) in &bumps {
            let dx = x as f32 - cx;
            let dy = y as f32 - cy;
            v += (-(dx * dx + dy * dy) / (2.0 * sig * sig)).exp();
        }
        (0.75 * v.min(1.0) + 0.2 * noise[y * size + x] + 0.025).clamp(0.0, 1.0)
    })
    .expect("values clamped to range")
}

/// A balanced stripes/blobs corpus: `n_total` images, labels aligned by
/// index, class-alternating order.
pub struct ToyCorpus {
    pub images: Vec<PixelGrid>,
    pub labels: Vec<usize>,
}

pub fn texture_corpus(n_total: usize, size: usize, seed: u64) -> ToyCorpus {
    let mut rng = rng::derive(seed, "toycorpus/texture");
    let mut images = Vec::with_capacity(n_total);
    let mut labels = Vec::with_capacity(n_total);
    for i in 0..n_total {
        let class = i % 2;
        images.push(if class == STRIPES {
            stripes_image(size, &mut rng)
        } else {
            blobs_image(size, &mut rng)
        });
        labels.push(class);
    }
    ToyCorpus { images, labels }
}

/// Write a corpus under `dir/<class>/<index>.png` (8-bit gray), the
/// layout the ingest label rule `class = dir component 0` expects.
pub fn write_corpus(corpus: &ToyCorpus, dir: &Path) -> Result<()> {
    for name in CLASS_NAMES {
        std::fs::create_dir_all(dir.join(name)).map_err(|e| Error::io(dir, e))?;
    }
    for (i, (img, label)) in corpus.images.iter().zip(corpus.labels.iter()).enumerate() {
        let path = dir.join(CLASS_NAMES[*label]).join(format!("{i:05}.png"));
        save(img, &path, SaveDepth::Eight)?;
    }
    Ok(())
}

/// Hull-shaped toy "anatomy": two bright lobes on a dark field, with
/// positional and size jitter. Global shape is stable, so average-hash
/// signatures of different draws stay close.
pub fn anatomy_image(size: usize, rng: &mut ChaCha8Rng) -> PixelGrid {
    let s = size as f32;
    let jitter = |rng: &mut ChaCha8Rng| (rng.gen::<f32>() - 0.5) * 0.06;
    let lobes = [
        (0.34 + jitter(rng), 0.52 + jitter(rng), 0.16 + 0.02 * rng.gen::<f32>(), 0.26 + 0.03 * rng.gen::<f32>()),
        (0.66 + jitter(rng), 0.52 + jitter(rng), 0.16 + 0.02 * rng.gen::<f32>(), 0.26 + 0.03 * rng.gen::<f32>()),
    ];
    let mut noise = Vec::with_capacity(size * size);
    for _ in 0..size * size {
        noise.push(rng.gen::<f32>());
    }
    PixelGrid::from_fn(size, size, RangeTag::Unit, |y, x| {
        let fx = x as f32 / s;
        let fy = y as f32 / s;
        let mut v = 0.06f32;
        for (cx, cy, rx, ry) in &lobes {
            let dx = (fx - cx) / rx;
            let dy = (fy - cy) / ry;
            if dx * dx + dy * dy <= 1.0 {
                v = 0.85;
            }
        }
        (v + 0.08 * noise[y * size + x]).clamp(0.0, 1.0)
    })
    .expect("values clamped to range")
}

pub fn anatomy_images(n: usize, size: usize, seed: u64) -> Vec<PixelGrid> {
    let mut rng = rng::derive(seed, "toycorpus/anatomy");
    (0..n).map(|_| anatomy_image(size, &mut rng)).collect()
}

/// Pure uniform pixel noise, the degenerate-sample stand-in.
pub fn noise_images(n: usize, size: usize, seed: u64) -> Vec<PixelGrid> {
    let mut rng = rng::derive(seed, "toycorpus/noise");
    (0..n)
        .map(|_| {
            let mut vals = Vec::with_capacity(size * size);
            for _ in 0..size * size {
                vals.push(rng.gen::<f32>());
            }
            PixelGrid::from_fn(size, size, RangeTag::Unit, |y, x| vals[y * size + x])
                .expect("uniform noise is in range")
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::features::{combined_descriptor, STANDARD_RADII};

    #[test]
    fn corpus_is_balanced_and_deterministic() {
        let a = texture_corpus(20, 16, 7);
        let b = texture_corpus(20, 16, 7);
        assert_eq!(a.images, b.images);
        assert_eq!(a.labels.iter().filter(|l| **l == STRIPES).count(), 10);
    }

    #[test]
    fn classes_are_separable_in_lbp_space() {
        // Nearest-centroid in descriptor space should already split the
        // classes; the full benchmark demands much more.
        let corpus = texture_corpus(40, 32, 3);
        let feats: Vec<Vec<f64>> = corpus
            .images
            .iter()
            .map(|i| combined_descriptor(i, &STANDARD_RADII).unwrap().values().to_vec())
            .collect();
        let d = feats[0].len();
        let mut centroids = [vec![0.0; d], vec![0.0; d]];
        for (f, l) in feats.iter().zip(corpus.labels.iter()) {
            for j in 0..d {
                centroids[*l][j] += f[j] / 20.0;
            }
        }
        let dist = |a: &[f64], b: &[f64]| -> f64 {
            a.iter().zip(b.iter()).map(|(x, y)| (x - y) * (x - y)).sum()
        };
        let mut hits = 0;
        for (f, l) in feats.iter().zip(corpus.labels.iter()) {
            let pred = usize::from(dist(f, &centroids[1]) < dist(f, &centroids[0]));
            if pred == *l {
                hits += 1;
            }
        }
        assert!(hits >= 38, "only {hits}/40 separable");
    }

    #[test]
    fn anatomy_images_hash_close_noise_hashes_far() {
        use crate::triage::{average_hash, hamming};
        let anatomy = anatomy_images(10, 32, 1);
        let noise = noise_images(10, 32, 2);
        let refs: Vec<_> = anatomy.iter().map(|i| average_hash(i, 16).unwrap()).collect();
        for img in &anatomy[1..] {
            let sig = average_hash(img, 16).unwrap();
            let min = refs.iter().map(|r| hamming(&sig, r).unwrap()).min().unwrap();
            assert!(min <= 64, "anatomy min distance {min}");
        }
        for img in &noise {
            let sig = average_hash(img, 16).unwrap();
            let min = refs.iter().map(|r| hamming(&sig, r).unwrap()).min().unwrap();
            assert!(min > 64, "noise min distance {min}");
        }
    }

    #[test]
    fn corpus_writes_to_the_ingest_layout() {
        let dir = tempfile::tempdir().unwrap();
        let corpus = texture_corpus(6, 16, 9);
        write_corpus(&corpus, dir.path()).unwrap();
        assert!(dir.path().join("stripes/00000.png").exists());
        assert!(dir.path().join("blobs/00001.png").exists());
    }
}
