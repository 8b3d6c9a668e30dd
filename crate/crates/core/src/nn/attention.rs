//! Multi-head scaled dot-product self-attention with residual connection
//! and post layer norm. Non-causal: every timestep attends to the full
//! window.

use ndarray::{s, Array2, Array3};
use rand_chacha::ChaCha8Rng;

use super::linear::{Linear, LinearCache};
use super::norm::{LayerNorm, LayerNormCache};
use super::param::ParamStore;
use super::BuildError;

#[derive(Debug, Clone)]
pub struct SelfAttention {
    pub wq: Linear,
    pub wk: Linear,
    pub wv: Linear,
    pub wo: Linear,
    pub norm: LayerNorm,
    pub dim: usize,
    pub heads: usize,
}

pub struct SelfAttentionCache {
    x: Array2<f64>,
    q: Array2<f64>,
    k: Array2<f64>,
    v: Array2<f64>,
    /// Softmax attention weights per head: `[heads][T][T]`.
    weights: Array3<f64>,
    q_cache: LinearCache,
    k_cache: LinearCache,
    v_cache: LinearCache,
    o_cache: LinearCache,
    norm_cache: LayerNormCache,
}

impl SelfAttentionCache {
    /// Attention weight rows (for diagnostics and tests).
    pub fn weights(&self) -> &Array3<f64> {
        &self.weights
    }
}

impl SelfAttention {
    pub fn new(
        ps: &mut ParamStore,
        rng: &mut ChaCha8Rng,
        name: &str,
        dim: usize,
        heads: usize,
    ) -> Result<Self, BuildError> {
        if heads == 0 || dim % heads != 0 {
            return Err(BuildError::HeadSplit {
                context: name.to_string(),
                dim,
                heads,
            });
        }
        Ok(SelfAttention {
            wq: Linear::new(ps, rng, &format!("{name}.q"), dim, dim)?,
            wk: Linear::new(ps, rng, &format!("{name}.k"), dim, dim)?,
            wv: Linear::new(ps, rng, &format!("{name}.v"), dim, dim)?,
            wo: Linear::new(ps, rng, &format!("{name}.o"), dim, dim)?,
            norm: LayerNorm::new(ps, &format!("{name}.norm"), dim)?,
            dim,
            heads,
        })
    }

    pub fn forward(&self, ps: &ParamStore, x: &Array2<f64>) -> (Array2<f64>, SelfAttentionCache) {
        let (t, d) = x.dim();
        assert_eq!(d, self.dim, "attention input dim");
        let hd = d / self.heads;
        let scale = 1.0 / (hd as f64).sqrt();

        let (q, q_cache) = self.wq.forward(ps, x);
        let (k, k_cache) = self.wk.forward(ps, x);
        let (v, v_cache) = self.wv.forward(ps, x);

        let mut weights = Array3::zeros((self.heads, t, t));
        let mut concat = Array2::zeros((t, d));
        for h in 0..self.heads {
            let cols = h * hd..(h + 1) * hd;
            let qh = q.slice(s![.., cols.clone()]);
            let kh = k.slice(s![.., cols.clone()]);
            let vh = v.slice(s![.., cols.clone()]);
            let mut scores = qh.dot(&kh.t());
            scores *= scale;
            // Row softmax, numerically stabilized.
            for mut row in scores.rows_mut() {
                let max = row.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
                let mut sum = 0.0;
                for v in row.iter_mut() {
                    *v = (*v - max).exp();
                    sum += *v;
                }
                for v in row.iter_mut() {
                    *v /= sum;
                }
            }
            let out_h = scores.dot(&vh);
            weights.slice_mut(s![h, .., ..]).assign(&scores);
            concat.slice_mut(s![.., cols]).assign(&out_h);
        }

        let (proj, o_cache) = self.wo.forward(ps, &concat);
        let residual = &proj + x;
        let (y, norm_cache) = self.norm.forward(ps, &residual);
        (
            y,
            SelfAttentionCache {
                x: x.clone(),
                q,
                k,
                v,
                weights,
                q_cache,
                k_cache,
                v_cache,
                o_cache,
                norm_cache,
            },
        )
    }

    pub fn forward_infer(&self, ps: &ParamStore, x: &Array2<f64>) -> Array2<f64> {
        self.forward(ps, x).0
    }

    pub fn backward(
        &self,
        ps: &mut ParamStore,
        cache: &SelfAttentionCache,
        grad_out: &Array2<f64>,
    ) -> Array2<f64> {
        let (t, d) = cache.x.dim();
        let hd = d / self.heads;
        let scale = 1.0 / (hd as f64).sqrt();

        let d_residual = self.norm.backward(ps, &cache.norm_cache, grad_out);
        // Residual add: gradient flows to both the projection and x.
        let d_concat = self.wo.backward(ps, &cache.o_cache, &d_residual);

        let mut dq = Array2::zeros((t, d));
        let mut dk = Array2::zeros((t, d));
        let mut dv = Array2::zeros((t, d));
        for h in 0..self.heads {
            let cols = h * hd..(h + 1) * hd;
            let qh = cache.q.slice(s![.., cols.clone()]);
            let kh = cache.k.slice(s![.., cols.clone()]);
            let vh = cache.v.slice(s![.., cols.clone()]);
            let w = cache.weights.slice(s![h, .., ..]);
            let d_out_h = d_concat.slice(s![.., cols.clone()]);

            // out = W V
            let dw = d_out_h.dot(&vh.t());
            let dvh = w.t().dot(&d_out_h);
            // Softmax backward per row: ds = w .* (dw - rowsum(dw .* w)).
            let mut dscores = Array2::zeros((t, t));
            for ti in 0..t {
                let wrow = w.slice(s![ti, ..]);
                let dwrow = dw.slice(s![ti, ..]);
                let dot: f64 = wrow.iter().zip(dwrow.iter()).map(|(a, b)| a * b).sum();
                for tj in 0..t {
                    dscores[[ti, tj]] = wrow[tj] * (dwrow[tj] - dot);
                }
            }
            dscores *= scale;
            let dqh = dscores.dot(&kh);
            let dkh = dscores.t().dot(&qh);
            dq.slice_mut(s![.., cols.clone()]).assign(&dqh);
            dk.slice_mut(s![.., cols.clone()]).assign(&dkh);
            dv.slice_mut(s![.., cols]).assign(&dvh);
        }

        let mut dx = self.wq.backward(ps, &cache.q_cache, &dq);
        dx += &self.wk.backward(ps, &cache.k_cache, &dk);
        dx += &self.wv.backward(ps, &cache.v_cache, &dv);
        dx += &d_residual;
        dx
    }
}

/// Sinusoidal positional encoding table `[T][D]`.
pub fn positional_encoding(t: usize, d: usize) -> Array2<f64> {
    let mut pe = Array2::zeros((t, d));
    for ti in 0..t {
        for i in 0..d / 2 {
            let rate = 1.0 / 10_000f64.powf(2.0 * i as f64 / d as f64);
            pe[[ti, 2 * i]] = (ti as f64 * rate).sin();
            pe[[ti, 2 * i + 1]] = (ti as f64 * rate).cos();
        }
    }
    pe
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;

    fn build(dim: usize, heads: usize) -> (ParamStore, SelfAttention) {
        let mut ps = ParamStore::new();
        let mut rng = ChaCha8Rng::seed_from_u64(42);
        let sa = SelfAttention::new(&mut ps, &mut rng, "sa", dim, heads).unwrap();
        (ps, sa)
    }

    #[test]
    fn rejects_indivisible_heads() {
        let mut ps = ParamStore::new();
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        assert!(matches!(
            SelfAttention::new(&mut ps, &mut rng, "sa", 10, 8),
            Err(BuildError::HeadSplit { .. })
        ));
    }

    #[test]
    fn attention_rows_sum_to_one() {
        let (ps, sa) = build(16, 4);
        let x = Array2::from_shape_fn((7, 16), |(t, d)| ((t * 16 + d) % 13) as f64 * 0.17 - 1.0);
        let (_, cache) = sa.forward(&ps, &x);
        for h in 0..4 {
            for t in 0..7 {
                let sum: f64 = cache.weights().slice(s![h, t, ..]).sum();
                assert!((sum - 1.0).abs() < 1e-6, "head {h} row {t} sums to {sum}");
            }
        }
    }

    #[test]
    fn single_timestep_weight_is_one() {
        let (ps, sa) = build(8, 2);
        let x = Array2::from_shape_fn((1, 8), |(_, d)| d as f64 * 0.3 - 1.0);
        let (y, cache) = sa.forward(&ps, &x);
        for h in 0..2 {
            assert!((cache.weights()[[h, 0, 0]] - 1.0).abs() < 1e-12);
        }
        // Output equals layernorm(x + proj(V)).
        let (v, _) = sa.wv.forward(&ps, &x);
        let (proj, _) = sa.wo.forward(&ps, &v);
        let (expect, _) = sa.norm.forward(&ps, &(&proj + &x));
        for (a, b) in y.iter().zip(expect.iter()) {
            assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn equal_timesteps_give_equal_rows() {
        let (ps, sa) = build(16, 4);
        let row: Vec<f64> = (0..16).map(|d| d as f64 * 0.11 - 0.9).collect();
        let mut x = Array2::zeros((3, 16));
        for t in 0..3 {
            for d in 0..16 {
                x[[t, d]] = row[d];
            }
        }
        let (y, _) = sa.forward(&ps, &x);
        for t in 1..3 {
            for d in 0..16 {
                assert!((y[[t, d]] - y[[0, d]]).abs() < 1e-12);
            }
        }
    }
}
