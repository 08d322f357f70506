//! Degenerate-sample triage.
//!
//! Generated images are fingerprinted with a 256-bit average hash
//! (16x16, area-average resize, strict greater-than-mean bit rule) and
//! kept only when close, in Hamming distance, to a reference set hashed
//! from verified-valid images. Montage grids support the human
//! per-epoch checkpoint review.

use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::gan::{Checkpoint, GanModel};
use crate::grid::PixelGrid;
use crate::imageio::{save, SaveDepth};
use crate::preprocess::{resize, to_grayscale};

pub const DEFAULT_HASH_SIZE: usize = 16;
/// Default acceptance threshold: 25% of the 256 bits.
pub const DEFAULT_TAU: u32 = 64;

/// A packed bit fingerprint, row-major, LSB of word 0 first.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct HashSignature {
    words: Vec<u64>,
    nbits: usize,
}

impl HashSignature {
    pub fn from_bits(bits: &[bool]) -> Self {
        let mut words = vec![0u64; bits.len().div_ceil(64)];
        for (i, b) in bits.iter().enumerate() {
            if *b {
                words[i / 64] |= 1 << (i % 64);
            }
        }
        Self { words, nbits: bits.len() }
    }

    pub fn len(&self) -> usize {
        self.nbits
    }

    pub fn is_empty(&self) -> bool {
        self.nbits == 0
    }

    pub fn bit(&self, i: usize) -> bool {
        self.words[i / 64] >> (i % 64) & 1 == 1
    }

    pub fn count_ones(&self) -> u32 {
        self.words.iter().map(|w| w.count_ones()).sum()
    }

    pub fn complement(&self) -> Self {
        let mut words: Vec<u64> = self.words.iter().map(|w| !w).collect();
        // Clear padding bits past nbits.
        let tail = self.nbits % 64;
        if tail != 0 {
            if let Some(last) = words.last_mut() {
                *last &= (1u64 << tail) - 1;
            }
        }
        Self { words, nbits: self.nbits }
    }

    /// Hex encoding, 4 bits per character, bit `4j` the most significant
    /// bit of character `j`. 256-bit signatures give 64 characters.
    pub fn to_hex(&self) -> String {
        let mut s = String::with_capacity(self.nbits / 4);
        for j in 0..self.nbits.div_ceil(4) {
            let mut nibble = 0u8;
            for k in 0..4 {
                let i = 4 * j + k;
                if i < self.nbits && self.bit(i) {
                    nibble |= 1 << (3 - k);
                }
            }
            s.push(char::from_digit(u32::from(nibble), 16).unwrap());
        }
        s
    }

    pub fn from_hex(s: &str) -> Result<Self> {
        let mut bits = Vec::with_capacity(s.len() * 4);
        for ch in s.chars() {
            let nibble = ch.to_digit(16).ok_or_else(|| Error::Format(format!("bad hex char '{ch}'")))?;
            for k in 0..4 {
                bits.push(nibble >> (3 - k) & 1 == 1);
            }
        }
        Ok(Self::from_bits(&bits))
    }
}

/// Average hash: grayscale, area-average resize to `h`x`h`, then one bit
/// per cell, set iff the cell is strictly brighter than the mean of all
/// `h*h` cells. A constant image hashes to all zeros.
pub fn average_hash(img: &PixelGrid, h: usize) -> Result<HashSignature> {
    if h == 0 {
        return Err(Error::Precondition("hash size must be positive".into()));
    }
    let gray = to_grayscale(img)?;
    let small = resize(&gray, h, h)?;
    let mean = small.data().iter().map(|v| f64::from(*v)).sum::<f64>() / (h * h) as f64;
    let mut bits = Vec::with_capacity(h * h);
    for y in 0..h {
        for x in 0..h {
            bits.push(f64::from(small.luma(y, x)) > mean);
        }
    }
    Ok(HashSignature::from_bits(&bits))
}

/// Number of differing bit positions.
pub fn hamming(a: &HashSignature, b: &HashSignature) -> Result<u32> {
    if a.nbits != b.nbits {
        return Err(Error::ShapeMismatch {
            expected: format!("{} bits", a.nbits),
            got: format!("{} bits", b.nbits),
        });
    }
    Ok(a.words.iter().zip(b.words.iter()).map(|(x, y)| (x ^ y).count_ones()).sum())
}

/// Hashes of verified-valid images plus the acceptance threshold.
#[derive(Debug, Clone)]
pub struct ReferenceSet {
    pub signatures: Vec<HashSignature>,
    pub tau: u32,
}

impl ReferenceSet {
    /// Hash a set of reference images at the default 16x16 size.
    pub fn from_images(images: &[PixelGrid], tau: u32) -> Result<Self> {
        let signatures = images
            .iter()
            .map(|img| average_hash(img, DEFAULT_HASH_SIZE))
            .collect::<Result<Vec<_>>>()?;
        Ok(Self { signatures, tau })
    }

    pub fn check_usable(&self) -> Result<()> {
        if self.signatures.is_empty() {
            return Err(Error::Precondition("reference set is empty".into()));
        }
        let nbits = self.signatures[0].len() as u32;
        if self.tau > nbits {
            return Err(Error::Precondition(format!(
                "tau {} exceeds signature length {nbits}",
                self.tau
            )));
        }
        Ok(())
    }
}

/// Per-candidate audit row.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TriageDistance {
    pub index: usize,
    pub min_distance: u32,
    pub kept: bool,
}

/// Outcome of [`filter_synthetic`]: indices into the candidate batch.
#[derive(Debug, Clone)]
pub struct FilterOutcome {
    pub kept: Vec<usize>,
    pub rejected: Vec<usize>,
    pub distances: Vec<TriageDistance>,
}

impl FilterOutcome {
    pub fn rejection_rate(&self) -> f64 {
        if self.distances.is_empty() {
            return 0.0;
        }
        self.rejected.len() as f64 / self.distances.len() as f64
    }

    /// Line-JSON audit trail, one row per candidate.
    pub fn audit_lines(&self) -> String {
        let mut out = String::new();
        for d in &self.distances {
            out.push_str(&serde_json::to_string(d).expect("distance serializes"));
            out.push('\n');
        }
        out
    }
}

/// Keep each candidate iff its minimum Hamming distance to the reference
/// signatures is at most `tau`.
pub fn filter_synthetic(candidates: &[PixelGrid], refs: &ReferenceSet) -> Result<FilterOutcome> {
    refs.check_usable()?;
    let distances: Vec<TriageDistance> = candidates
        .par_iter()
        .enumerate()
        .map(|(index, img)| {
            let sig = average_hash(img, DEFAULT_HASH_SIZE)?;
            let min_distance = refs
                .signatures
                .iter()
                .map(|r| hamming(&sig, r))
                .collect::<Result<Vec<_>>>()?
                .into_iter()
                .min()
                .expect("non-empty reference set");
            Ok(TriageDistance { index, min_distance, kept: min_distance <= refs.tau })
        })
        .collect::<Result<Vec<_>>>()?;
    let kept = distances.iter().filter(|d| d.kept).map(|d| d.index).collect();
    let rejected = distances.iter().filter(|d| !d.kept).map(|d| d.index).collect();
    Ok(FilterOutcome { kept, rejected, distances })
}

/// Render a rows x cols grid of fresh samples from a checkpoint for
/// visual review. Deterministic in the seed; the filename encodes model,
/// stage and epoch. Conditional models cycle labels round-robin.
pub fn emit_montage(
    model: &GanModel,
    meta: &Checkpoint,
    rows: usize,
    cols: usize,
    seed: u64,
    out_dir: &Path,
) -> Result<PathBuf> {
    if rows == 0 || cols == 0 {
        return Err(Error::Precondition("montage grid must be non-empty".into()));
    }
    let n = rows * cols;
    let labels = if model.config().conditional {
        Some((0..n).map(|i| i % model.config().label_cardinality).collect::<Vec<_>>())
    } else {
        None
    };
    let samples = model.sample(n, labels.as_deref(), seed)?;
    let montage = montage_grid(&samples, rows, cols)?;
    std::fs::create_dir_all(out_dir).map_err(|e| Error::io(out_dir, e))?;
    let name = format!(
        "montage_{}_s{}_e{:03}_seed{}.png",
        meta.model_id, meta.stage_resolution, meta.epoch, seed
    );
    let path = out_dir.join(name);
    save(&montage.signed_to_unit()?, &path, SaveDepth::Eight)?;
    Ok(path)
}

/// Tile equally-sized images into a rows x cols grid, row-major.
pub fn montage_grid(samples: &[PixelGrid], rows: usize, cols: usize) -> Result<PixelGrid> {
    if samples.len() != rows * cols {
        return Err(Error::Precondition(format!(
            "montage needs {} samples, got {}",
            rows * cols,
            samples.len()
        )));
    }
    let (sh, sw, sc) = (samples[0].height(), samples[0].width(), samples[0].channels());
    for s in samples {
        if (s.height(), s.width(), s.channels()) != (sh, sw, sc) {
            return Err(Error::ShapeMismatch {
                expected: format!("{sh}x{sw}x{sc}"),
                got: format!("{}x{}x{}", s.height(), s.width(), s.channels()),
            });
        }
    }
    let data = ndarray::Array3::from_shape_fn((rows * sh, cols * sw, sc), |(y, x, c)| {
        let tile = (y / sh) * cols + x / sw;
        samples[tile].get(y % sh, x % sw, c)
    });
    PixelGrid::new(data, samples[0].range())
}
