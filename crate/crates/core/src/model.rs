//! Full tri-modal model: two visual streams (face, body) with separate
//! weights, the audio stream, SE fusion, optional self-attention sites and
//! the classification heads.

use ndarray::{Array1, Array2, Array3, Array4};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::config::ModelConfig;
use crate::encoders::audio::{AudioEncoder, AudioEncoderCache};
use crate::encoders::visual::{
    TemporalNet, TemporalNetCache, VisualBackbone, VisualBackboneCache, VisualBackboneOutput,
};
use crate::fusion::{FusedSequence, FusionCache, FusionError, FusionSe, Modality, ModalitySet};
use crate::nn::attention::{positional_encoding, SelfAttention, SelfAttentionCache};
use crate::nn::linear::LinearCache;
use crate::nn::loss::softmax_rows;
use crate::nn::{BuildError, Linear, ParamStore};

/// Preprocessed inputs for one clip: face and body crops `[T][3][S][S]`
/// and aligned MFCCs `[T][4][13]`.
#[derive(Debug, Clone)]
pub struct ClipTensors {
    pub face: Array4<f64>,
    pub body: Array4<f64>,
    pub audio: Array3<f64>,
}

/// Per-frame speaking prediction.
#[derive(Debug, Clone, Copy)]
pub struct FramePrediction {
    /// Speaking probability, `softmax(logits)[1]`.
    pub score: f64,
    pub logits: [f64; 2],
}

/// One visual stream: backbone, temporal net, optional self-attention.
#[derive(Debug, Clone)]
pub struct VisualStream {
    pub backbone: VisualBackbone,
    pub temporal: TemporalNet,
    pub attention: Option<SelfAttention>,
}

pub struct VisualStreamCache {
    backbone: VisualBackboneCache,
    temporal: TemporalNetCache,
    attention: Option<SelfAttentionCache>,
}

impl VisualStream {
    fn new(
        ps: &mut ParamStore,
        rng: &mut ChaCha8Rng,
        name: &str,
        config: &ModelConfig,
    ) -> Result<Self, BuildError> {
        let backbone = VisualBackbone::new(ps, rng, &format!("{name}.backbone"), config)?;
        let temporal = TemporalNet::new(
            ps,
            rng,
            &format!("{name}.temporal"),
            config.widths[3],
            config.embed_dim,
        )?;
        let attention = if config.visual_attention {
            Some(SelfAttention::new(
                ps,
                rng,
                &format!("{name}.sa"),
                config.embed_dim,
                config.heads,
            )?)
        } else {
            None
        };
        Ok(VisualStream {
            backbone,
            temporal,
            attention,
        })
    }

    fn forward_train(
        &self,
        ps: &mut ParamStore,
        crops: &Array4<f64>,
    ) -> (Array2<f64>, VisualBackboneOutput, VisualStreamCache) {
        let (backbone_out, backbone_cache) = self.backbone.forward_train(ps, crops);
        let (temporal_out, temporal_cache) = self.temporal.forward_train(ps, &backbone_out.embedding);
        let (embedding, attention_cache) = match &self.attention {
            Some(sa) => {
                let (y, cache) = sa.forward(ps, &temporal_out);
                (y, Some(cache))
            }
            None => (temporal_out, None),
        };
        (
            embedding,
            backbone_out,
            VisualStreamCache {
                backbone: backbone_cache,
                temporal: temporal_cache,
                attention: attention_cache,
            },
        )
    }

    fn forward_infer(&self, ps: &ParamStore, crops: &Array4<f64>) -> (Array2<f64>, VisualBackboneOutput) {
        let backbone_out = self.backbone.forward_infer(ps, crops);
        let temporal_out = self.temporal.forward_infer(ps, &backbone_out.embedding);
        let embedding = match &self.attention {
            Some(sa) => sa.forward_infer(ps, &temporal_out),
            None => temporal_out,
        };
        (embedding, backbone_out)
    }

    fn backward(
        &self,
        ps: &mut ParamStore,
        cache: &VisualStreamCache,
        grad_embedding: &Array2<f64>,
    ) {
        let g = match (&self.attention, &cache.attention) {
            (Some(sa), Some(sa_cache)) => sa.backward(ps, sa_cache, grad_embedding),
            _ => grad_embedding.clone(),
        };
        let g = self.temporal.backward(ps, &cache.temporal, &g);
        self.backbone.backward(ps, &cache.backbone, &g);
    }
}

#[derive(Debug, Clone)]
pub struct AsdModel {
    pub config: ModelConfig,
    pub face: VisualStream,
    pub body: VisualStream,
    pub audio: AudioEncoder,
    pub fusion: FusionSe,
    pub fused_attention: Option<SelfAttention>,
    pub head: Linear,
    /// Auxiliary per-stream probes in (audio, face, body) order; training
    /// only, never read at inference.
    pub aux_heads: [Linear; 3],
}

/// Training-path outputs.
pub struct TrainOutputs {
    pub fused_logits: Array2<f64>,
    /// (audio, face, body) auxiliary logits.
    pub aux_logits: [Array2<f64>; 3],
}

pub struct ModelCache {
    audio: AudioEncoderCache,
    face: VisualStreamCache,
    body: VisualStreamCache,
    fusion: FusionCache,
    fused_attention: Option<SelfAttentionCache>,
    head: LinearCache,
    aux: [LinearCache; 3],
    embeddings: [Array2<f64>; 3],
}

/// Captured interpretability state from an inference pass.
#[derive(Debug, Clone)]
pub struct ModelCaptures {
    pub face: VisualBackboneOutput,
    pub body: VisualBackboneOutput,
    pub fused: FusedSequence,
}

pub struct EvalOutputs {
    pub predictions: Vec<FramePrediction>,
    pub captures: Option<ModelCaptures>,
}

impl AsdModel {
    /// Build the model. Parameter initialization is fully determined by
    /// `seed`.
    pub fn new(config: &ModelConfig, seed: u64) -> Result<(Self, ParamStore), BuildError> {
        let mut ps = ParamStore::new();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let face = VisualStream::new(&mut ps, &mut rng, "face", config)?;
        let body = VisualStream::new(&mut ps, &mut rng, "body", config)?;
        let audio = AudioEncoder::new(&mut ps, &mut rng, "audio", config)?;
        let fusion = FusionSe::new(&mut ps, &mut rng, "fusion.se", config.embed_dim, config.se_ratio)?;
        let fused_attention = if config.fused_attention {
            Some(SelfAttention::new(
                &mut ps,
                &mut rng,
                "fused.sa",
                config.fused_dim(),
                config.heads,
            )?)
        } else {
            None
        };
        let head = Linear::new(&mut ps, &mut rng, "head", config.fused_dim(), 2)?;
        let aux_heads = [
            Linear::new(&mut ps, &mut rng, "aux.audio", config.embed_dim, 2)?,
            Linear::new(&mut ps, &mut rng, "aux.face", config.embed_dim, 2)?,
            Linear::new(&mut ps, &mut rng, "aux.body", config.embed_dim, 2)?,
        ];
        Ok((
            AsdModel {
                config: config.clone(),
                face,
                body,
                audio,
                fusion,
                fused_attention,
                head,
                aux_heads,
            },
            ps,
        ))
    }

    pub fn forward_train(
        &self,
        ps: &mut ParamStore,
        x: &ClipTensors,
    ) -> Result<(TrainOutputs, ModelCache), FusionError> {
        let (audio_emb, audio_cache) = self.audio.forward_train(ps, &x.audio);
        let (face_emb, _, face_cache) = self.face.forward_train(ps, &x.face);
        let (body_emb, _, body_cache) = self.body.forward_train(ps, &x.body);

        let (fused, fusion_cache) = self.fusion.fuse_train(ps, &audio_emb, &face_emb, &body_emb)?;
        let mut seq = fused.values.clone();
        if self.config.fused_pos_enc && self.fused_attention.is_some() {
            seq += &positional_encoding(seq.nrows(), seq.ncols());
        }
        let (seq, fused_sa_cache) = match &self.fused_attention {
            Some(sa) => {
                let (y, cache) = sa.forward(ps, &seq);
                (y, Some(cache))
            }
            None => (seq, None),
        };
        let (fused_logits, head_cache) = self.head.forward(ps, &seq);

        let (aux_a, aux_a_cache) = self.aux_heads[0].forward(ps, &audio_emb);
        let (aux_f, aux_f_cache) = self.aux_heads[1].forward(ps, &face_emb);
        let (aux_b, aux_b_cache) = self.aux_heads[2].forward(ps, &body_emb);

        Ok((
            TrainOutputs {
                fused_logits,
                aux_logits: [aux_a, aux_f, aux_b],
            },
            ModelCache {
                audio: audio_cache,
                face: face_cache,
                body: body_cache,
                fusion: fusion_cache,
                fused_attention: fused_sa_cache,
                head: head_cache,
                aux: [aux_a_cache, aux_f_cache, aux_b_cache],
                embeddings: [audio_emb, face_emb, body_emb],
            },
        ))
    }

    /// Backward pass from logit gradients; accumulates into `ps`.
    pub fn backward(
        &self,
        ps: &mut ParamStore,
        cache: &ModelCache,
        d_fused_logits: &Array2<f64>,
        d_aux_logits: &[Array2<f64>; 3],
    ) {
        let d_seq = self.head.backward(ps, &cache.head, d_fused_logits);
        let d_values = match (&self.fused_attention, &cache.fused_attention) {
            (Some(sa), Some(sa_cache)) => sa.backward(ps, sa_cache, &d_seq),
            _ => d_seq,
        };
        // Positional encoding is additive: gradient passes through.
        let (mut d_audio, mut d_face, mut d_body) = self.fusion.backward(ps, &cache.fusion, &d_values);
        d_audio += &self.aux_heads[0].backward(ps, &cache.aux[0], &d_aux_logits[0]);
        d_face += &self.aux_heads[1].backward(ps, &cache.aux[1], &d_aux_logits[1]);
        d_body += &self.aux_heads[2].backward(ps, &cache.aux[2], &d_aux_logits[2]);
        let _ = &cache.embeddings;
        self.audio.backward(ps, &cache.audio, &d_audio);
        self.face.backward(ps, &cache.face, &d_face);
        self.body.backward(ps, &cache.body, &d_body);
    }

    /// Inference with frozen parameters and running batch-norm statistics.
    /// `zero` masks modalities at the fusion gate; `capture` returns the
    /// interpretability state.
    pub fn forward_eval(
        &self,
        ps: &ParamStore,
        x: &ClipTensors,
        zero: ModalitySet,
        capture: bool,
    ) -> Result<EvalOutputs, FusionError> {
        let audio_emb = self.audio.forward_infer(ps, &x.audio);
        let (face_emb, face_out) = self.face.forward_infer(ps, &x.face);
        let (body_emb, body_out) = self.body.forward_infer(ps, &x.body);
        let fused = self
            .fusion
            .fuse_masked(ps, &audio_emb, &face_emb, &body_emb, zero)?;
        let predictions = self.classify(ps, &fused);
        let captures = capture.then(|| ModelCaptures {
            face: face_out,
            body: body_out,
            fused,
        });
        Ok(EvalOutputs {
            predictions,
            captures,
        })
    }

    /// Classification head over a fused sequence: optional positional
    /// encoding and self-attention, then the per-frame linear head.
    pub fn classify(&self, ps: &ParamStore, fused: &FusedSequence) -> Vec<FramePrediction> {
        let mut seq = fused.values.clone();
        if self.config.fused_pos_enc && self.fused_attention.is_some() {
            seq += &positional_encoding(seq.nrows(), seq.ncols());
        }
        let seq = match &self.fused_attention {
            Some(sa) => sa.forward_infer(ps, &seq),
            None => seq,
        };
        let logits = self.head.forward_infer(ps, &seq);
        let probs = softmax_rows(&logits);
        (0..logits.nrows())
            .map(|t| FramePrediction {
                score: probs[[t, 1]],
                logits: [logits[[t, 0]], logits[[t, 1]]],
            })
            .collect()
    }

    /// Modality importance source: the fusion gate of an unmasked pass.
    pub fn fusion_gate(&self, fused: &FusedSequence) -> Array1<f64> {
        fused.gate.clone()
    }

    pub fn modality_slice(&self, m: Modality) -> std::ops::Range<usize> {
        m.slice(self.config.embed_dim)
    }
}
