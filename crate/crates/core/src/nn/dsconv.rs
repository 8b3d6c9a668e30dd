//! Depthwise-separable temporal convolution.
//!
//! A per-channel kernel-3 depthwise pass followed by a pointwise channel
//! mix, optionally with a residual connection when channel counts match.
//! There is no activation inside the block; callers insert nonlinearities
//! between layers.

use ndarray::{Array2, Ix2};
use rand_chacha::ChaCha8Rng;

use super::conv::PointwiseConv1d;
use super::init;
use super::param::{ParamId, ParamStore};
use super::BuildError;

pub const DS_KERNEL: usize = 3;

#[derive(Debug, Clone)]
pub struct DsConv1d {
    pub depthwise: ParamId,
    pub pointwise: PointwiseConv1d,
    pub in_ch: usize,
    pub out_ch: usize,
    pub residual: bool,
}

pub struct DsConv1dCache {
    x: Array2<f64>,
    pointwise: super::conv::PointwiseCache,
}

impl DsConv1d {
    pub fn new(
        ps: &mut ParamStore,
        rng: &mut ChaCha8Rng,
        name: &str,
        in_ch: usize,
        out_ch: usize,
        residual: bool,
    ) -> Result<Self, BuildError> {
        assert!(
            !residual || in_ch == out_ch,
            "residual requires matching channel counts"
        );
        let depthwise = ps.add(
            &format!("{name}.dw"),
            init::kaiming_uniform(rng, &[in_ch, DS_KERNEL], DS_KERNEL),
        )?;
        let pointwise = PointwiseConv1d::new(ps, rng, &format!("{name}.pw"), in_ch, out_ch)?;
        Ok(DsConv1d {
            depthwise,
            pointwise,
            in_ch,
            out_ch,
            residual,
        })
    }

    /// Identity configuration: center-tap depthwise kernel and zero
    /// pointwise weights, so a residual layer passes its input through
    /// unchanged.
    pub fn reset_identity(&self, ps: &mut ParamStore) {
        let dw = ps.value_mut(self.depthwise);
        dw.fill(0.0);
        for c in 0..self.in_ch {
            dw[[c, 1]] = 1.0;
        }
        ps.value_mut(self.pointwise.w).fill(0.0);
        ps.value_mut(self.pointwise.b).fill(0.0);
    }

    /// `x` is `[C][T]`; zero padding of one step on both sides preserves T.
    pub fn forward(&self, ps: &ParamStore, x: &Array2<f64>) -> (Array2<f64>, DsConv1dCache) {
        let after_dw = self.depthwise_forward(ps, x);
        let (mut y, pw_cache) = self.pointwise.forward(ps, &after_dw);
        if self.residual {
            y += x;
        }
        (
            y,
            DsConv1dCache {
                x: x.clone(),
                pointwise: pw_cache,
            },
        )
    }

    pub fn forward_infer(&self, ps: &ParamStore, x: &Array2<f64>) -> Array2<f64> {
        let after_dw = self.depthwise_forward(ps, x);
        let mut y = self.pointwise.forward_infer(ps, &after_dw);
        if self.residual {
            y += x;
        }
        y
    }

    fn depthwise_forward(&self, ps: &ParamStore, x: &Array2<f64>) -> Array2<f64> {
        let (c, t) = x.dim();
        assert_eq!(c, self.in_ch, "ds conv input channels");
        let w = ps.value(self.depthwise).view().into_dimensionality::<Ix2>().unwrap();
        let mut y = Array2::zeros((c, t));
        for ci in 0..c {
            let row = x.row(ci);
            let k = [w[[ci, 0]], w[[ci, 1]], w[[ci, 2]]];
            for ti in 0..t {
                let mut acc = k[1] * row[ti];
                if ti > 0 {
                    acc += k[0] * row[ti - 1];
                }
                if ti + 1 < t {
                    acc += k[2] * row[ti + 1];
                }
                y[[ci, ti]] = acc;
            }
        }
        y
    }

    pub fn backward(
        &self,
        ps: &mut ParamStore,
        cache: &DsConv1dCache,
        grad_out: &Array2<f64>,
    ) -> Array2<f64> {
        let d_after_dw = self.pointwise.backward(ps, &cache.pointwise, grad_out);
        let (c, t) = cache.x.dim();
        let w = ps
            .value(self.depthwise)
            .view()
            .into_dimensionality::<Ix2>()
            .unwrap()
            .to_owned();
        let mut dw = Array2::<f64>::zeros((c, DS_KERNEL));
        let mut dx = Array2::<f64>::zeros((c, t));
        for ci in 0..c {
            let x_row = cache.x.row(ci);
            let g_row = d_after_dw.row(ci);
            for ti in 0..t {
                let g = g_row[ti];
                dw[[ci, 1]] += g * x_row[ti];
                dx[[ci, ti]] += g * w[[ci, 1]];
                if ti > 0 {
                    dw[[ci, 0]] += g * x_row[ti - 1];
                    dx[[ci, ti - 1]] += g * w[[ci, 0]];
                }
                if ti + 1 < t {
                    dw[[ci, 2]] += g * x_row[ti + 1];
                    dx[[ci, ti + 1]] += g * w[[ci, 2]];
                }
            }
        }
        ps.grad_add(self.depthwise, dw.into_dyn().view());
        if self.residual {
            dx += grad_out;
        }
        dx
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;

    #[test]
    fn center_tap_identity_without_residual() {
        let mut ps = ParamStore::new();
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let ds = DsConv1d::new(&mut ps, &mut rng, "ds", 3, 3, false).unwrap();
        // Depthwise [0,1,0], pointwise identity.
        let dw = ps.value_mut(ds.depthwise);
        dw.fill(0.0);
        for c in 0..3 {
            dw[[c, 1]] = 1.0;
        }
        let pw = ps.value_mut(ds.pointwise.w);
        pw.fill(0.0);
        for c in 0..3 {
            pw[[c, c]] = 1.0;
        }
        ps.value_mut(ds.pointwise.b).fill(0.0);
        let x = Array2::from_shape_fn((3, 7), |(c, t)| (c as f64 - 1.0) * (t as f64 + 0.3));
        let (y, _) = ds.forward(&ps, &x);
        for (a, b) in x.iter().zip(y.iter()) {
            assert!((a - b).abs() < 1e-14);
        }
    }

    #[test]
    fn single_step_input_uses_zero_padding() {
        let mut ps = ParamStore::new();
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        let ds = DsConv1d::new(&mut ps, &mut rng, "ds", 4, 4, true).unwrap();
        let x = Array2::from_shape_fn((4, 1), |(c, _)| c as f64 * 0.5 - 1.0);
        let (y, _) = ds.forward(&ps, &x);
        assert_eq!(y.dim(), (4, 1));
        assert!(y.iter().all(|v| v.is_finite()));
    }

    #[test]
    fn identity_reset_is_identity_with_residual() {
        let mut ps = ParamStore::new();
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let ds = DsConv1d::new(&mut ps, &mut rng, "ds", 4, 4, true).unwrap();
        ds.reset_identity(&mut ps);
        let x = Array2::from_shape_fn((4, 5), |(c, t)| (c * 5 + t) as f64 * 0.2 - 1.5);
        let (y, _) = ds.forward(&ps, &x);
        assert_eq!(x, y);
    }
}
