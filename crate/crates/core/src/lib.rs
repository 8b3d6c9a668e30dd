//! Audio-face-body active speaker detection at desk scale.
//!
//! The crate provides the full pipeline: a synthetic audio-visual data
//! generator, an MFCC audio frontend, from-scratch neural building blocks
//! with analytic backward passes, tri-modal stream encoders fused through a
//! squeeze-and-excitation gate, SE-gate interpretability (attention heatmaps,
//! modality importance, gate-zeroing ablation), a deterministic training
//! loop, and the evaluation metrics (average precision, F1, caption scores).
//!
//! Everything is driven by explicit seeds: given the same seed, config and
//! data, runs are reproducible bit for bit. With the `parallel` feature
//! (default) the data-parallel inner loops run on rayon; the sequential
//! fallback produces identical output.

pub mod asdtext;
pub mod checkpoint;
pub mod config;
pub mod data;
pub mod encoders;
pub mod eval;
pub mod fusion;
pub mod interpret;
pub mod mfcc;
pub mod model;
pub mod nn;
pub(crate) mod par;
pub mod train;
