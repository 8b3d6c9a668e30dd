//! Audio stream: aligned MFCCs viewed as a `1 x (4T) x 13` image, a
//! residual trunk with an SE block in every residual block, a temporal
//! stride schedule taking `4T` back to `T`, global frequency pooling, and a
//! pointwise projection to the embedding width.

use ndarray::{Array2, Array3, Array4};
use rand_chacha::ChaCha8Rng;

use crate::config::ModelConfig;
use crate::nn::norm::{relu4, relu4_backward, BatchNorm, BatchNormCache, BnMode};
use crate::nn::{BuildError, Conv2d, ParamStore, PointwiseConv1d};

use super::block::{
    build_stage, stage_backward, stage_forward_infer, stage_forward_train, ResidualBlock,
    ResidualBlockCache,
};

/// Stage strides: time `4T -> 4T -> 2T -> T -> T`, frequency `13 -> 13 ->
/// 7 -> 4 -> 4`.
const STAGE_STRIDES: [(usize, usize); 4] = [(1, 1), (2, 2), (2, 2), (1, 1)];

#[derive(Debug, Clone)]
pub struct AudioEncoder {
    pub stem: Conv2d,
    pub stem_bn: BatchNorm,
    pub stages: Vec<Vec<ResidualBlock>>,
    pub proj: PointwiseConv1d,
    pub out_channels: usize,
}

pub struct AudioEncoderCache {
    stem: crate::nn::conv::Conv2dCache,
    stem_bn: BatchNormCache,
    stem_relu: Array4<f64>,
    stages: Vec<Vec<ResidualBlockCache>>,
    /// Final maps `[1][C][T][F]` ahead of the frequency pool.
    final_dims: (usize, usize, usize),
    proj: crate::nn::conv::PointwiseCache,
}

impl AudioEncoder {
    pub fn new(
        ps: &mut ParamStore,
        rng: &mut ChaCha8Rng,
        name: &str,
        config: &ModelConfig,
    ) -> Result<Self, BuildError> {
        let w = config.widths;
        let stem = Conv2d::new(ps, rng, &format!("{name}.stem"), 1, w[0], (3, 3), (1, 1), (1, 1))?;
        let stem_bn = BatchNorm::new(ps, &format!("{name}.stem_bn"), w[0], BnMode::PerSample)?;
        let mut stages = Vec::with_capacity(4);
        let mut in_ch = w[0];
        for (i, (&out_ch, &blocks)) in w.iter().zip(config.audio_blocks.iter()).enumerate() {
            stages.push(build_stage(
                ps,
                rng,
                &format!("{name}.stage{i}"),
                blocks,
                in_ch,
                out_ch,
                STAGE_STRIDES[i],
                BnMode::PerSample,
                Some(config.se_ratio),
            )?);
            in_ch = out_ch;
        }
        let proj = PointwiseConv1d::new(ps, rng, &format!("{name}.proj"), w[3], config.embed_dim)?;
        Ok(AudioEncoder {
            stem,
            stem_bn,
            stages,
            proj,
            out_channels: w[3],
        })
    }

    fn to_image(aligned: &Array3<f64>) -> Array4<f64> {
        let (t, per, coeffs) = aligned.dim();
        aligned
            .clone()
            .into_shape_with_order((1, 1, t * per, coeffs))
            .expect("aligned mfcc is contiguous")
    }

    /// `aligned` is `[T][4][13]`; returns the `[T][embed]` stream embedding.
    pub fn forward_train(
        &self,
        ps: &mut ParamStore,
        aligned: &Array3<f64>,
    ) -> (Array2<f64>, AudioEncoderCache) {
        let t_frames = aligned.dim().0;
        let x = Self::to_image(aligned);
        let (stem_out, stem_cache) = self.stem.forward(ps, &x);
        let (bn_out, stem_bn_cache) = self.stem_bn.forward_train(ps, &stem_out);
        let stem_relu = relu4(&bn_out);
        let mut h = stem_relu.clone();
        let mut stage_caches = Vec::with_capacity(self.stages.len());
        for stage in &self.stages {
            let (next, caches) = stage_forward_train(stage, ps, h);
            stage_caches.push(caches);
            h = next;
        }
        let (_, c, time, freq) = h.dim();
        assert_eq!(time, t_frames, "stride schedule must return 4T to T");
        let pooled = pool_freq(&h); // [C][T]
        let (y, proj_cache) = self.proj.forward(ps, &pooled);
        let cache = AudioEncoderCache {
            stem: stem_cache,
            stem_bn: stem_bn_cache,
            stem_relu,
            stages: stage_caches,
            final_dims: (c, time, freq),
            proj: proj_cache,
        };
        (y.t().to_owned(), cache)
    }

    pub fn forward_infer(&self, ps: &ParamStore, aligned: &Array3<f64>) -> Array2<f64> {
        let x = Self::to_image(aligned);
        let stem_relu = relu4(&self.stem_bn.forward_infer(ps, &self.stem.forward_infer(ps, &x)));
        let mut h = stem_relu;
        for stage in &self.stages {
            h = stage_forward_infer(stage, ps, h);
        }
        let pooled = pool_freq(&h);
        self.proj.forward_infer(ps, &pooled).t().to_owned()
    }

    /// `grad_embedding` is `[T][embed]`; returns the gradient w.r.t. the
    /// aligned MFCC input.
    pub fn backward(
        &self,
        ps: &mut ParamStore,
        cache: &AudioEncoderCache,
        grad_embedding: &Array2<f64>,
    ) -> Array3<f64> {
        let g = grad_embedding.t().to_owned();
        let d_pooled = self.proj.backward(ps, &cache.proj, &g);
        let (c, time, freq) = cache.final_dims;
        let mut d_maps = Array4::zeros((1, c, time, freq));
        for ci in 0..c {
            for ti in 0..time {
                let v = d_pooled[[ci, ti]] / freq as f64;
                for fi in 0..freq {
                    d_maps[[0, ci, ti, fi]] = v;
                }
            }
        }
        let mut g = d_maps;
        for (stage, caches) in self.stages.iter().zip(cache.stages.iter()).rev() {
            g = stage_backward(stage, ps, caches, g);
        }
        let g = relu4_backward(&cache.stem_relu, &g);
        let g = self.stem_bn.backward(ps, &cache.stem_bn, &g);
        let dx = self.stem.backward(ps, &cache.stem, &g);
        let (_, _, four_t, coeffs) = dx.dim();
        dx.into_shape_with_order((four_t / 4, 4, coeffs))
            .expect("contiguous gradient")
    }
}

/// Mean over the frequency axis of `[1][C][T][F]` maps, producing `[C][T]`.
fn pool_freq(maps: &Array4<f64>) -> Array2<f64> {
    let (_, c, t, f) = maps.dim();
    let mut out = Array2::zeros((c, t));
    for ci in 0..c {
        for ti in 0..t {
            out[[ci, ti]] = maps.slice(ndarray::s![0, ci, ti, ..]).sum() / f as f64;
        }
    }
    out
}
