//! Basic residual block shared by the visual and audio trunks.

use ndarray::{Array2, Array4};
use rand_chacha::ChaCha8Rng;

use crate::nn::norm::{relu4, relu4_backward, BatchNorm, BatchNormCache, BnMode};
use crate::nn::se::{SeBlock, SeMapsCache};
use crate::nn::{BuildError, Conv2d, ParamStore};

/// `conv-bn-relu-conv-bn [-se] + shortcut -> relu`, stride on the first
/// conv. The audio trunk puts an SE block on the residual branch.
#[derive(Debug, Clone)]
pub struct ResidualBlock {
    pub conv1: Conv2d,
    pub bn1: BatchNorm,
    pub conv2: Conv2d,
    pub bn2: BatchNorm,
    pub shortcut: Option<(Conv2d, BatchNorm)>,
    pub se: Option<SeBlock>,
}

pub struct ResidualBlockCache {
    conv1: crate::nn::conv::Conv2dCache,
    bn1: BatchNormCache,
    h1: Array4<f64>,
    conv2: crate::nn::conv::Conv2dCache,
    bn2: BatchNormCache,
    se: Option<SeMapsCache>,
    shortcut: Option<(crate::nn::conv::Conv2dCache, BatchNormCache)>,
    y: Array4<f64>,
}

impl ResidualBlock {
    #[allow(clippy::too_many_arguments)]
    pub fn new(
        ps: &mut ParamStore,
        rng: &mut ChaCha8Rng,
        name: &str,
        in_ch: usize,
        out_ch: usize,
        stride: (usize, usize),
        bn_mode: BnMode,
        se_ratio: Option<usize>,
    ) -> Result<Self, BuildError> {
        let conv1 = Conv2d::new(
            ps,
            rng,
            &format!("{name}.conv1"),
            in_ch,
            out_ch,
            (3, 3),
            stride,
            (1, 1),
        )?;
        let bn1 = BatchNorm::new(ps, &format!("{name}.bn1"), out_ch, bn_mode)?;
        let conv2 = Conv2d::new(
            ps,
            rng,
            &format!("{name}.conv2"),
            out_ch,
            out_ch,
            (3, 3),
            (1, 1),
            (1, 1),
        )?;
        let bn2 = BatchNorm::new(ps, &format!("{name}.bn2"), out_ch, bn_mode)?;
        let shortcut = if in_ch != out_ch || stride != (1, 1) {
            let conv = Conv2d::new(
                ps,
                rng,
                &format!("{name}.down"),
                in_ch,
                out_ch,
                (1, 1),
                stride,
                (0, 0),
            )?;
            let bn = BatchNorm::new(ps, &format!("{name}.down_bn"), out_ch, bn_mode)?;
            Some((conv, bn))
        } else {
            None
        };
        let se = match se_ratio {
            Some(r) => Some(SeBlock::new(ps, rng, &format!("{name}.se"), out_ch, r)?),
            None => None,
        };
        Ok(ResidualBlock {
            conv1,
            bn1,
            conv2,
            bn2,
            shortcut,
            se,
        })
    }

    pub fn forward_train(
        &self,
        ps: &mut ParamStore,
        x: &Array4<f64>,
    ) -> (Array4<f64>, ResidualBlockCache) {
        let (c1, conv1_cache) = self.conv1.forward(ps, x);
        let (b1, bn1_cache) = self.bn1.forward_train(ps, &c1);
        let h1 = relu4(&b1);
        let (c2, conv2_cache) = self.conv2.forward(ps, &h1);
        let (b2, bn2_cache) = self.bn2.forward_train(ps, &c2);
        let (branch, se_cache) = match &self.se {
            Some(se) => {
                let (s, _, cache) = se.forward_maps(ps, &b2);
                (s, Some(cache))
            }
            None => (b2, None),
        };
        let (sc, sc_cache) = match &self.shortcut {
            Some((conv, bn)) => {
                let (c, ccache) = conv.forward(ps, x);
                let (b, bcache) = bn.forward_train(ps, &c);
                (b, Some((ccache, bcache)))
            }
            None => (x.clone(), None),
        };
        let y = relu4(&(&branch + &sc));
        let cache = ResidualBlockCache {
            conv1: conv1_cache,
            bn1: bn1_cache,
            h1,
            conv2: conv2_cache,
            bn2: bn2_cache,
            se: se_cache,
            shortcut: sc_cache,
            y: y.clone(),
        };
        (y, cache)
    }

    pub fn forward_infer(&self, ps: &ParamStore, x: &Array4<f64>) -> Array4<f64> {
        let h1 = relu4(&self.bn1.forward_infer(ps, &self.conv1.forward_infer(ps, x)));
        let b2 = self.bn2.forward_infer(ps, &self.conv2.forward_infer(ps, &h1));
        let branch = match &self.se {
            Some(se) => se.forward_maps_infer(ps, &b2).0,
            None => b2,
        };
        let sc = match &self.shortcut {
            Some((conv, bn)) => bn.forward_infer(ps, &conv.forward_infer(ps, x)),
            None => x.clone(),
        };
        relu4(&(&branch + &sc))
    }

    pub fn backward(
        &self,
        ps: &mut ParamStore,
        cache: &ResidualBlockCache,
        grad_out: &Array4<f64>,
    ) -> Array4<f64> {
        let d_sum = relu4_backward(&cache.y, grad_out);
        // Branch side.
        let d_branch = match (&self.se, &cache.se) {
            (Some(se), Some(se_cache)) => se.backward_maps(ps, se_cache, &d_sum),
            _ => d_sum.clone(),
        };
        let d_c2 = self.bn2.backward(ps, &cache.bn2, &d_branch);
        let d_h1 = self.conv2.backward(ps, &cache.conv2, &d_c2);
        let d_b1 = relu4_backward(&cache.h1, &d_h1);
        let d_c1 = self.bn1.backward(ps, &cache.bn1, &d_b1);
        let mut dx = self.conv1.backward(ps, &cache.conv1, &d_c1);
        // Shortcut side.
        match (&self.shortcut, &cache.shortcut) {
            (Some((conv, bn)), Some((ccache, bcache))) => {
                let d_c = bn.backward(ps, bcache, &d_sum);
                dx += &conv.backward(ps, ccache, &d_c);
            }
            _ => {
                dx += &d_sum;
            }
        }
        dx
    }
}

/// Build one trunk stage: `blocks` residual blocks, stride on the first.
#[allow(clippy::too_many_arguments)]
pub fn build_stage(
    ps: &mut ParamStore,
    rng: &mut ChaCha8Rng,
    name: &str,
    blocks: usize,
    in_ch: usize,
    out_ch: usize,
    stride: (usize, usize),
    bn_mode: BnMode,
    se_ratio: Option<usize>,
) -> Result<Vec<ResidualBlock>, BuildError> {
    let mut stage = Vec::with_capacity(blocks);
    for b in 0..blocks {
        let (ic, st) = if b == 0 { (in_ch, stride) } else { (out_ch, (1, 1)) };
        stage.push(ResidualBlock::new(
            ps,
            rng,
            &format!("{name}.b{b}"),
            ic,
            out_ch,
            st,
            bn_mode,
            se_ratio,
        )?);
    }
    Ok(stage)
}

/// Feature map pass through a whole stage.
pub fn stage_forward_train(
    stage: &[ResidualBlock],
    ps: &mut ParamStore,
    x: Array4<f64>,
) -> (Array4<f64>, Vec<ResidualBlockCache>) {
    let mut h = x;
    let mut caches = Vec::with_capacity(stage.len());
    for block in stage {
        let (next, cache) = block.forward_train(ps, &h);
        caches.push(cache);
        h = next;
    }
    (h, caches)
}

pub fn stage_forward_infer(stage: &[ResidualBlock], ps: &ParamStore, x: Array4<f64>) -> Array4<f64> {
    let mut h = x;
    for block in stage {
        h = block.forward_infer(ps, &h);
    }
    h
}

pub fn stage_backward(
    stage: &[ResidualBlock],
    ps: &mut ParamStore,
    caches: &[ResidualBlockCache],
    grad: Array4<f64>,
) -> Array4<f64> {
    let mut g = grad;
    for (block, cache) in stage.iter().zip(caches.iter()).rev() {
        g = block.backward(ps, cache, &g);
    }
    g
}

/// Per-frame transpose helper: `[T][C]` sequence to `[C][T]` and back.
pub fn transpose2(x: &Array2<f64>) -> Array2<f64> {
    x.t().to_owned()
}
