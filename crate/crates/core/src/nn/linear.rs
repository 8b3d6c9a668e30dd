use ndarray::{Array1, Array2, Ix1, Ix2};
use rand_chacha::ChaCha8Rng;

use super::init;
use super::param::{ParamId, ParamStore};
use super::BuildError;

/// Dense layer `y = x W^T + b` over row vectors.
#[derive(Debug, Clone)]
pub struct Linear {
    pub w: ParamId,
    pub b: ParamId,
    pub in_dim: usize,
    pub out_dim: usize,
}

pub struct LinearCache {
    x: Array2<f64>,
}

impl Linear {
    pub fn new(
        ps: &mut ParamStore,
        rng: &mut ChaCha8Rng,
        name: &str,
        in_dim: usize,
        out_dim: usize,
    ) -> Result<Self, BuildError> {
        let w = ps.add(
            &format!("{name}.w"),
            init::xavier_uniform(rng, &[out_dim, in_dim], in_dim, out_dim),
        )?;
        let b = ps.add(&format!("{name}.b"), init::zeros(&[out_dim]))?;
        Ok(Linear {
            w,
            b,
            in_dim,
            out_dim,
        })
    }

    /// Zero-weight variant (used by classification heads in tests).
    pub fn new_zeroed(
        ps: &mut ParamStore,
        name: &str,
        in_dim: usize,
        out_dim: usize,
    ) -> Result<Self, BuildError> {
        let w = ps.add(&format!("{name}.w"), init::zeros(&[out_dim, in_dim]))?;
        let b = ps.add(&format!("{name}.b"), init::zeros(&[out_dim]))?;
        Ok(Linear {
            w,
            b,
            in_dim,
            out_dim,
        })
    }

    pub fn forward(&self, ps: &ParamStore, x: &Array2<f64>) -> (Array2<f64>, LinearCache) {
        let y = self.forward_infer(ps, x);
        (y, LinearCache { x: x.clone() })
    }

    pub fn forward_infer(&self, ps: &ParamStore, x: &Array2<f64>) -> Array2<f64> {
        debug_assert_eq!(x.ncols(), self.in_dim);
        let w = ps.value(self.w).view().into_dimensionality::<Ix2>().unwrap();
        let b = ps.value(self.b).view().into_dimensionality::<Ix1>().unwrap();
        let mut y = x.dot(&w.t());
        y += &b;
        y
    }

    pub fn backward(
        &self,
        ps: &mut ParamStore,
        cache: &LinearCache,
        grad_out: &Array2<f64>,
    ) -> Array2<f64> {
        let w = ps
            .value(self.w)
            .view()
            .into_dimensionality::<Ix2>()
            .unwrap()
            .to_owned();
        let grad_w = grad_out.t().dot(&cache.x);
        let grad_b: Array1<f64> = grad_out.sum_axis(ndarray::Axis(0));
        ps.grad_add(self.w, grad_w.into_dyn().view());
        ps.grad_add(self.b, grad_b.into_dyn().view());
        grad_out.dot(&w)
    }
}
