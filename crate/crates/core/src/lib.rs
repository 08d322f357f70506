//! Core library for the synthetic-image substitution benchmark.
//!
//! The pipeline catalogs a real image corpus, trains DCGAN / progressive-growing
//! GAN generators on it, triages the generated replicas with perceptual hashes,
//! extracts LBP texture descriptors, and quantifies the cost of swapping real
//! training data for synthetic data by running matched train-real vs
//! train-synthetic classification benchmarks scored on held-out real images.
//!
//! Modules map onto pipeline stages:
//!
//! * [`corpus`] — manifests, study groups, balanced sampling, train/test splits
//! * [`preprocess`] — percentile normalization, foreground masks, tiling, resize
//! * [`gan`] — DCGAN and PGGAN definition, training, checkpoints, sampling
//! * [`triage`] — average-hash filtering of degenerate samples, review montages
//! * [`features`] — local binary pattern descriptors
//! * [`classify`] — k-NN, SVM, random forest, small VGG-style CNN with 5-fold CV
//! * [`bench`] — the train-on-real vs train-on-synthetic protocol and reports
//!
//! Everything stochastic draws from ChaCha8 streams derived from a single run
//! seed (see [`rng`]), so every result in the pipeline is reproducible from the
//! manifest digests and the seed alone.

pub mod bench;
pub mod classify;
pub mod config;
pub mod corpus;
pub mod error;
pub mod features;
pub mod gan;
pub mod grid;
pub mod imageio;
pub mod nn;
pub mod preprocess;
pub mod rng;
pub mod toycorpus;
pub mod triage;

pub use error::{Error, Result};
pub use grid::{MaskRegion, PixelGrid, RangeTag};
