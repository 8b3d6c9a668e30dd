//! SE-gated combination of the three stream embeddings.
//!
//! Streams concatenate in the fixed order (audio, face, body); one SE gate
//! computed from the temporal mean rescales the 3E channels. Modality
//! masking zeroes a modality both at the gate and at the SE input, so a
//! masked prediction is bitwise independent of that modality's content.

use ndarray::{s, Array1, Array2};
use rand_chacha::ChaCha8Rng;

use crate::nn::se::{SeBlock, SeSeqCache};
use crate::nn::{BuildError, ParamStore};

/// Input stream identity. Also fixes the channel order of the fusion.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Modality {
    Audio,
    Face,
    Body,
}

impl Modality {
    pub const ALL: [Modality; 3] = [Modality::Audio, Modality::Face, Modality::Body];

    pub fn index(self) -> usize {
        match self {
            Modality::Audio => 0,
            Modality::Face => 1,
            Modality::Body => 2,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Modality::Audio => "audio",
            Modality::Face => "face",
            Modality::Body => "body",
        }
    }

    pub fn parse(s: &str) -> Option<Modality> {
        match s.trim().to_ascii_lowercase().as_str() {
            "audio" => Some(Modality::Audio),
            "face" => Some(Modality::Face),
            "body" => Some(Modality::Body),
            _ => None,
        }
    }

    /// Channel slice of this modality inside the fused vector.
    pub fn slice(self, embed_dim: usize) -> std::ops::Range<usize> {
        let i = self.index();
        i * embed_dim..(i + 1) * embed_dim
    }
}

/// Set of modalities (used for gate zeroing).
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct ModalitySet {
    bits: [bool; 3],
}

impl ModalitySet {
    pub fn empty() -> Self {
        Self::default()
    }

    pub fn all() -> Self {
        ModalitySet { bits: [true; 3] }
    }

    pub fn of(mods: &[Modality]) -> Self {
        let mut set = Self::default();
        for m in mods {
            set.bits[m.index()] = true;
        }
        set
    }

    pub fn with(mut self, m: Modality) -> Self {
        self.bits[m.index()] = true;
        self
    }

    pub fn contains(&self, m: Modality) -> bool {
        self.bits[m.index()]
    }

    pub fn is_empty(&self) -> bool {
        !self.bits.iter().any(|b| *b)
    }

    pub fn iter(&self) -> impl Iterator<Item = Modality> + '_ {
        Modality::ALL.into_iter().filter(|m| self.contains(*m))
    }
}

/// A per-stream embedding tagged with its modality.
#[derive(Debug, Clone)]
pub struct StreamEmbedding {
    pub values: Array2<f64>,
    pub modality: Modality,
}

/// Gated fused sequence. `pre_gate` keeps the concatenated (and possibly
/// modality-zeroed) inputs so masking can recompute the gate.
#[derive(Debug, Clone)]
pub struct FusedSequence {
    pub pre_gate: Array2<f64>,
    pub values: Array2<f64>,
    pub gate: Array1<f64>,
    pub embed_dim: usize,
}

#[derive(Debug, Error)]
pub enum FusionError {
    #[error("stream lengths differ: audio {audio}, face {face}, body {body}")]
    LengthMismatch {
        audio: usize,
        face: usize,
        body: usize,
    },
    #[error("stream {modality:?} has width {got}, expected {expected}")]
    WidthMismatch {
        modality: Modality,
        got: usize,
        expected: usize,
    },
}

use thiserror::Error;

#[derive(Debug, Clone)]
pub struct FusionSe {
    pub se: SeBlock,
    pub embed_dim: usize,
}

pub struct FusionCache {
    se: SeSeqCache,
}

impl FusionSe {
    pub fn new(
        ps: &mut ParamStore,
        rng: &mut ChaCha8Rng,
        name: &str,
        embed_dim: usize,
        se_ratio: usize,
    ) -> Result<Self, BuildError> {
        Ok(FusionSe {
            se: SeBlock::new(ps, rng, name, 3 * embed_dim, se_ratio)?,
            embed_dim,
        })
    }

    fn concat(
        &self,
        audio: &Array2<f64>,
        face: &Array2<f64>,
        body: &Array2<f64>,
    ) -> Result<Array2<f64>, FusionError> {
        let t = audio.nrows();
        if face.nrows() != t || body.nrows() != t {
            return Err(FusionError::LengthMismatch {
                audio: t,
                face: face.nrows(),
                body: body.nrows(),
            });
        }
        for (m, arr) in [
            (Modality::Audio, audio),
            (Modality::Face, face),
            (Modality::Body, body),
        ] {
            if arr.ncols() != self.embed_dim {
                return Err(FusionError::WidthMismatch {
                    modality: m,
                    got: arr.ncols(),
                    expected: self.embed_dim,
                });
            }
        }
        let mut cat = Array2::zeros((t, 3 * self.embed_dim));
        cat.slice_mut(s![.., Modality::Audio.slice(self.embed_dim)])
            .assign(audio);
        cat.slice_mut(s![.., Modality::Face.slice(self.embed_dim)])
            .assign(face);
        cat.slice_mut(s![.., Modality::Body.slice(self.embed_dim)])
            .assign(body);
        Ok(cat)
    }

    /// Concatenate and gate the three streams (training path).
    pub fn fuse_train(
        &self,
        ps: &ParamStore,
        audio: &Array2<f64>,
        face: &Array2<f64>,
        body: &Array2<f64>,
    ) -> Result<(FusedSequence, FusionCache), FusionError> {
        let cat = self.concat(audio, face, body)?;
        let (values, gate, se_cache) = self.se.forward_seq(ps, &cat);
        Ok((
            FusedSequence {
                pre_gate: cat,
                values,
                gate,
                embed_dim: self.embed_dim,
            },
            FusionCache { se: se_cache },
        ))
    }

    /// Inference fuse with a set of modalities zeroed: their channels are
    /// blanked before the squeeze and their gate components forced to zero,
    /// mirroring gate-zeroing ablation.
    pub fn fuse_masked(
        &self,
        ps: &ParamStore,
        audio: &Array2<f64>,
        face: &Array2<f64>,
        body: &Array2<f64>,
        zero: ModalitySet,
    ) -> Result<FusedSequence, FusionError> {
        let cat = self.concat(audio, face, body)?;
        Ok(self.gate_masked(ps, cat, zero))
    }

    fn gate_masked(&self, ps: &ParamStore, mut cat: Array2<f64>, zero: ModalitySet) -> FusedSequence {
        for m in zero.iter() {
            cat.slice_mut(s![.., m.slice(self.embed_dim)]).fill(0.0);
        }
        let (mut values, mut gate, _) = self.se.forward_seq(ps, &cat);
        for m in zero.iter() {
            let range = m.slice(self.embed_dim);
            gate.slice_mut(s![range.clone()]).fill(0.0);
            values.slice_mut(s![.., range]).fill(0.0);
        }
        FusedSequence {
            pre_gate: cat,
            values,
            gate,
            embed_dim: self.embed_dim,
        }
    }

    /// Re-gate an existing fused sequence with `zero` modalities zeroed
    /// out; values are recomputed from the stored pre-gate channels.
    pub fn apply_modality_mask(
        &self,
        ps: &ParamStore,
        seq: &FusedSequence,
        zero: ModalitySet,
    ) -> FusedSequence {
        self.gate_masked(ps, seq.pre_gate.clone(), zero)
    }

    pub fn backward(
        &self,
        ps: &mut ParamStore,
        cache: &FusionCache,
        grad_values: &Array2<f64>,
    ) -> (Array2<f64>, Array2<f64>, Array2<f64>) {
        let d_cat = self.se.backward_seq(ps, &cache.se, grad_values);
        let d_audio = d_cat
            .slice(s![.., Modality::Audio.slice(self.embed_dim)])
            .to_owned();
        let d_face = d_cat
            .slice(s![.., Modality::Face.slice(self.embed_dim)])
            .to_owned();
        let d_body = d_cat
            .slice(s![.., Modality::Body.slice(self.embed_dim)])
            .to_owned();
        (d_audio, d_face, d_body)
    }
}
