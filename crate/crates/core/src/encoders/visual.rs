//! Visual stream: 3D-conv stem, per-frame 2D residual trunk, SE gating
//! before pooling, then a depthwise-separable temporal network projecting
//! to the stream embedding.

use ndarray::{Array2, Array4, Axis};
use rand_chacha::ChaCha8Rng;

use crate::config::ModelConfig;
use crate::nn::conv::Conv3dCache;
use crate::nn::norm::{relu2, relu2_backward, relu4, relu4_backward, BatchNorm, BatchNormCache, BnMode};
use crate::nn::se::{SeBlock, SeMapsCache};
use crate::nn::{BuildError, Conv3d, DsConv1d, ParamStore, PointwiseConv1d};

use super::block::{
    build_stage, stage_backward, stage_forward_infer, stage_forward_train, ResidualBlock,
    ResidualBlockCache,
};

pub const TEMPORAL_LAYERS: usize = 5;

/// Trunk output plus the captured SE state.
#[derive(Debug, Clone)]
pub struct VisualBackboneOutput {
    /// Final trunk maps before gating, `[T][C][h][w]`; heatmaps render from
    /// these.
    pub pre_pool_maps: Array4<f64>,
    /// Per-frame SE gates, `[T][C]`.
    pub se_gates: Array2<f64>,
    /// Spatial mean of the gated maps, `[T][C]`.
    pub embedding: Array2<f64>,
}

#[derive(Debug, Clone)]
pub struct VisualBackbone {
    pub stem: Conv3d,
    pub stem_bn: BatchNorm,
    pub stages: Vec<Vec<ResidualBlock>>,
    pub se: SeBlock,
    pub out_channels: usize,
}

pub struct VisualBackboneCache {
    stem: Conv3dCache,
    stem_bn: BatchNormCache,
    stem_relu: Array4<f64>,
    stages: Vec<Vec<ResidualBlockCache>>,
    se: SeMapsCache,
    map_dims: (usize, usize),
}

impl VisualBackbone {
    pub fn new(
        ps: &mut ParamStore,
        rng: &mut ChaCha8Rng,
        name: &str,
        config: &ModelConfig,
    ) -> Result<Self, BuildError> {
        let w = config.widths;
        let stem = Conv3d::new(ps, rng, &format!("{name}.stem"), 3, w[0], (5, 7, 7), 2, 3)?;
        let stem_bn = BatchNorm::new(ps, &format!("{name}.stem_bn"), w[0], BnMode::ClipPooled)?;
        let mut stages = Vec::with_capacity(4);
        let mut in_ch = w[0];
        for (i, (&out_ch, &blocks)) in w.iter().zip(config.visual_blocks.iter()).enumerate() {
            let stride = if i == 0 { (1, 1) } else { (2, 2) };
            stages.push(build_stage(
                ps,
                rng,
                &format!("{name}.stage{i}"),
                blocks,
                in_ch,
                out_ch,
                stride,
                BnMode::ClipPooled,
                None,
            )?);
            in_ch = out_ch;
        }
        let se = SeBlock::new(ps, rng, &format!("{name}.se"), w[3], config.se_ratio)?;
        Ok(VisualBackbone {
            stem,
            stem_bn,
            stages,
            se,
            out_channels: w[3],
        })
    }

    /// `crops` is `[T][3][S][S]` with S divisible by 16.
    pub fn forward_train(
        &self,
        ps: &mut ParamStore,
        crops: &Array4<f64>,
    ) -> (VisualBackboneOutput, VisualBackboneCache) {
        let (stem_out, stem_cache) = self.stem.forward(ps, crops);
        let (bn_out, stem_bn_cache) = self.stem_bn.forward_train(ps, &stem_out);
        let stem_relu = relu4(&bn_out);
        let mut h = stem_relu.clone();
        let mut stage_caches = Vec::with_capacity(self.stages.len());
        for stage in &self.stages {
            let (next, caches) = stage_forward_train(stage, ps, h);
            stage_caches.push(caches);
            h = next;
        }
        let pre_pool_maps = h;
        let (gated, gates, se_cache) = self.se.forward_maps(ps, &pre_pool_maps);
        let (_, _, mh, mw) = gated.dim();
        let embedding = pool_spatial(&gated);
        let output = VisualBackboneOutput {
            pre_pool_maps,
            se_gates: gates,
            embedding,
        };
        let cache = VisualBackboneCache {
            stem: stem_cache,
            stem_bn: stem_bn_cache,
            stem_relu,
            stages: stage_caches,
            se: se_cache,
            map_dims: (mh, mw),
        };
        (output, cache)
    }

    pub fn forward_infer(&self, ps: &ParamStore, crops: &Array4<f64>) -> VisualBackboneOutput {
        let stem_relu = relu4(&self.stem_bn.forward_infer(ps, &self.stem.forward_infer(ps, crops)));
        let mut h = stem_relu;
        for stage in &self.stages {
            h = stage_forward_infer(stage, ps, h);
        }
        let (gated, gates) = self.se.forward_maps_infer(ps, &h);
        VisualBackboneOutput {
            embedding: pool_spatial(&gated),
            pre_pool_maps: h,
            se_gates: gates,
        }
    }

    /// `grad_embedding` is `[T][C]`.
    pub fn backward(
        &self,
        ps: &mut ParamStore,
        cache: &VisualBackboneCache,
        grad_embedding: &Array2<f64>,
    ) -> Array4<f64> {
        let (mh, mw) = cache.map_dims;
        let (t, c) = grad_embedding.dim();
        let area = (mh * mw) as f64;
        let mut d_gated = Array4::zeros((t, c, mh, mw));
        for ti in 0..t {
            for ci in 0..c {
                let g = grad_embedding[[ti, ci]] / area;
                d_gated
                    .index_axis_mut(Axis(0), ti)
                    .index_axis_mut(Axis(0), ci)
                    .fill(g);
            }
        }
        let mut g = self.se.backward_maps(ps, &cache.se, &d_gated);
        for (stage, caches) in self.stages.iter().zip(cache.stages.iter()).rev() {
            g = stage_backward(stage, ps, caches, g);
        }
        let g = relu4_backward(&cache.stem_relu, &g);
        let g = self.stem_bn.backward(ps, &cache.stem_bn, &g);
        self.stem.backward(ps, &cache.stem, &g)
    }
}

/// Spatial mean over `[N][C][h][w]` maps.
pub fn pool_spatial(maps: &Array4<f64>) -> Array2<f64> {
    let (n, c, h, w) = maps.dim();
    let area = (h * w) as f64;
    let mut out = Array2::zeros((n, c));
    for ni in 0..n {
        for ci in 0..c {
            out[[ni, ci]] = maps.index_axis(Axis(0), ni).index_axis(Axis(0), ci).sum() / area;
        }
    }
    out
}

/// Five residual DS-Conv1D layers with ReLUs between them, then a pointwise
/// projection to the embedding width. Input and output are `[T][C]`.
#[derive(Debug, Clone)]
pub struct TemporalNet {
    pub layers: Vec<DsConv1d>,
    pub proj: PointwiseConv1d,
}

pub struct TemporalNetCache {
    /// Input to each DS layer in `[C][T]` layout.
    layer_caches: Vec<crate::nn::dsconv::DsConv1dCache>,
    /// ReLU outputs feeding layers 1.. (for masking).
    relu_outs: Vec<Array2<f64>>,
    proj: crate::nn::conv::PointwiseCache,
}

impl TemporalNet {
    pub fn new(
        ps: &mut ParamStore,
        rng: &mut ChaCha8Rng,
        name: &str,
        channels: usize,
        embed_dim: usize,
    ) -> Result<Self, BuildError> {
        let mut layers = Vec::with_capacity(TEMPORAL_LAYERS);
        for i in 0..TEMPORAL_LAYERS {
            layers.push(DsConv1d::new(
                ps,
                rng,
                &format!("{name}.ds{i}"),
                channels,
                channels,
                true,
            )?);
        }
        let proj = PointwiseConv1d::new(ps, rng, &format!("{name}.proj"), channels, embed_dim)?;
        Ok(TemporalNet { layers, proj })
    }

    pub fn forward_train(
        &self,
        ps: &ParamStore,
        x: &Array2<f64>,
    ) -> (Array2<f64>, TemporalNetCache) {
        let mut h = x.t().to_owned(); // [C][T]
        let mut layer_caches = Vec::with_capacity(self.layers.len());
        let mut relu_outs = Vec::new();
        for (i, layer) in self.layers.iter().enumerate() {
            if i > 0 {
                h = relu2(&h);
                relu_outs.push(h.clone());
            }
            let (next, cache) = layer.forward(ps, &h);
            layer_caches.push(cache);
            h = next;
        }
        let (y, proj_cache) = self.proj.forward(ps, &h);
        (
            y.t().to_owned(),
            TemporalNetCache {
                layer_caches,
                relu_outs,
                proj: proj_cache,
            },
        )
    }

    pub fn forward_infer(&self, ps: &ParamStore, x: &Array2<f64>) -> Array2<f64> {
        let mut h = x.t().to_owned();
        for (i, layer) in self.layers.iter().enumerate() {
            if i > 0 {
                h = relu2(&h);
            }
            h = layer.forward_infer(ps, &h);
        }
        self.proj.forward_infer(ps, &h).t().to_owned()
    }

    pub fn backward(
        &self,
        ps: &mut ParamStore,
        cache: &TemporalNetCache,
        grad_out: &Array2<f64>,
    ) -> Array2<f64> {
        let g = grad_out.t().to_owned();
        let mut g = self.proj.backward(ps, &cache.proj, &g);
        for (i, layer) in self.layers.iter().enumerate().rev() {
            g = layer.backward(ps, &cache.layer_caches[i], &g);
            if i > 0 {
                g = relu2_backward(&cache.relu_outs[i - 1], &g);
            }
        }
        g.t().to_owned()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;

    #[test]
    fn default_widths_give_contract_shapes() {
        let mut ps = ParamStore::new();
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let config = ModelConfig::default();
        let backbone = VisualBackbone::new(&mut ps, &mut rng, "face", &config).unwrap();
        let crops = Array4::from_elem((5, 3, 112, 112), 0.3);
        let out = backbone.forward_infer(&ps, &crops);
        assert_eq!(out.pre_pool_maps.dim(), (5, 128, 7, 7));
        assert_eq!(out.embedding.dim(), (5, 128));
        assert_eq!(out.se_gates.dim(), (5, 128));
    }

    #[test]
    fn zero_input_zero_embedding_at_init() {
        let mut ps = ParamStore::new();
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let config = ModelConfig::miniature();
        let backbone = VisualBackbone::new(&mut ps, &mut rng, "v", &config).unwrap();
        let crops = Array4::zeros((2, 3, 16, 16));
        let out = backbone.forward_infer(&ps, &crops);
        assert!(out.embedding.iter().all(|v| *v == 0.0));
        assert!(out.se_gates.iter().all(|g| (0.0..1.0).contains(g)));
    }

    #[test]
    fn embedding_is_mean_of_gated_maps() {
        let mut ps = ParamStore::new();
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let config = ModelConfig::miniature();
        let backbone = VisualBackbone::new(&mut ps, &mut rng, "v", &config).unwrap();
        let crops = Array4::from_shape_fn((3, 3, 16, 16), |(t, c, y, x)| {
            ((t + c + y + x) % 5) as f64 * 0.2
        });
        let out = backbone.forward_infer(&ps, &crops);
        let (t, c, h, w) = out.pre_pool_maps.dim();
        for ti in 0..t {
            for ci in 0..c {
                let mut mean = 0.0;
                for yy in 0..h {
                    for xx in 0..w {
                        mean += out.pre_pool_maps[[ti, ci, yy, xx]] * out.se_gates[[ti, ci]];
                    }
                }
                mean /= (h * w) as f64;
                assert!((out.embedding[[ti, ci]] - mean).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn temporal_net_shapes_and_identity_init() {
        let mut ps = ParamStore::new();
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        for channels in [64usize, 128, 256] {
            let net = TemporalNet::new(&mut ps, &mut rng, &format!("t{channels}"), channels, 128)
                .unwrap();
            let x = Array2::from_shape_fn((4, channels), |(t, c)| ((t + c) % 9) as f64 * 0.11);
            let (y, _) = net.forward_train(&ps, &x);
            assert_eq!(y.dim(), (4, 128));
        }
        // Identity-initialized DS layers reduce the net to the projection.
        let net = TemporalNet::new(&mut ps, &mut rng, "ident", 16, 8).unwrap();
        for layer in &net.layers {
            layer.reset_identity(&mut ps);
        }
        let x = Array2::from_shape_fn((6, 16), |(t, c)| ((t * 16 + c) % 7) as f64 * 0.14);
        let (y, _) = net.forward_train(&ps, &x);
        let direct = net.proj.forward_infer(&ps, &x.t().to_owned()).t().to_owned();
        for (a, b) in y.iter().zip(direct.iter()) {
            assert!((a - b).abs() < 1e-13);
        }
        // Single-frame input is legal.
        let x1 = Array2::from_elem((1, 16), 0.4);
        let (y1, _) = net.forward_train(&ps, &x1);
        assert_eq!(y1.dim(), (1, 8));
    }
}
