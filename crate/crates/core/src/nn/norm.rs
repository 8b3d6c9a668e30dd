use ndarray::{Array1, Array2, Array4, Axis, Ix1};

use super::init;
use super::param::{ParamId, ParamStore};
use super::BuildError;

pub const BN_EPS: f64 = 1e-5;
pub const BN_MOMENTUM: f64 = 0.1;

/// Which elements share normalization statistics in training mode.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BnMode {
    /// The leading axis is the frames of one clip: statistics pool over
    /// `(N, H, W)` per channel. Deterministic per clip.
    ClipPooled,
    /// The leading axis is a batch of independent samples: statistics pool
    /// over `(H, W)` per `(n, c)`.
    PerSample,
}

/// Batch norm over `[N][C][H][W]`. Population statistics; running averages
/// (EMA, momentum 0.1) are stored as non-trainable state for inference.
#[derive(Debug, Clone)]
pub struct BatchNorm {
    pub gamma: ParamId,
    pub beta: ParamId,
    pub running_mean: ParamId,
    pub running_var: ParamId,
    pub channels: usize,
    pub mode: BnMode,
}

pub struct BatchNormCache {
    x_hat: Array4<f64>,
    inv_std: Vec<f64>, // per statistics group
}

impl BatchNorm {
    pub fn new(
        ps: &mut ParamStore,
        name: &str,
        channels: usize,
        mode: BnMode,
    ) -> Result<Self, BuildError> {
        Ok(BatchNorm {
            gamma: ps.add(&format!("{name}.gamma"), init::ones(&[channels]))?,
            beta: ps.add(&format!("{name}.beta"), init::zeros(&[channels]))?,
            running_mean: ps.add_state(&format!("{name}.running_mean"), init::zeros(&[channels]))?,
            running_var: ps.add_state(&format!("{name}.running_var"), init::ones(&[channels]))?,
            channels,
            mode,
        })
    }

    pub fn forward_train(
        &self,
        ps: &mut ParamStore,
        x: &Array4<f64>,
    ) -> (Array4<f64>, BatchNormCache) {
        let (n, c, h, w) = x.dim();
        assert_eq!(c, self.channels);
        let mut x_hat = Array4::zeros(x.dim());
        let mut y = Array4::zeros(x.dim());
        let gamma = ps.value(self.gamma).clone();
        let beta = ps.value(self.beta).clone();
        let mut batch_mean = vec![0.0; c];
        let mut batch_var = vec![0.0; c];
        let mut inv_std = Vec::new();

        match self.mode {
            BnMode::ClipPooled => {
                let m = (n * h * w) as f64;
                for ci in 0..c {
                    let lane = x.index_axis(Axis(1), ci);
                    let mean = lane.sum() / m;
                    let var = lane.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / m;
                    let istd = 1.0 / (var + BN_EPS).sqrt();
                    inv_std.push(istd);
                    batch_mean[ci] = mean;
                    batch_var[ci] = var;
                    let g = gamma[ci];
                    let b = beta[ci];
                    let mut xh = x_hat.index_axis_mut(Axis(1), ci);
                    let mut yy = y.index_axis_mut(Axis(1), ci);
                    ndarray::Zip::from(&mut xh).and(&mut yy).and(&lane).for_each(
                        |xh, yy, &v| {
                            *xh = (v - mean) * istd;
                            *yy = g * *xh + b;
                        },
                    );
                }
            }
            BnMode::PerSample => {
                let m = (h * w) as f64;
                for ni in 0..n {
                    for ci in 0..c {
                        let lane = x.index_axis(Axis(0), ni);
                        let lane = lane.index_axis(Axis(0), ci);
                        let mean = lane.sum() / m;
                        let var = lane.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / m;
                        let istd = 1.0 / (var + BN_EPS).sqrt();
                        inv_std.push(istd);
                        batch_mean[ci] += mean / n as f64;
                        batch_var[ci] += var / n as f64;
                        let g = gamma[ci];
                        let b = beta[ci];
                        for yy in 0..h {
                            for xx in 0..w {
                                let xh = (x[[ni, ci, yy, xx]] - mean) * istd;
                                x_hat[[ni, ci, yy, xx]] = xh;
                                y[[ni, ci, yy, xx]] = g * xh + b;
                            }
                        }
                    }
                }
            }
        }

        // EMA update of the inference statistics.
        {
            let rm = ps.value_mut(self.running_mean);
            for (slot, m) in rm.iter_mut().zip(batch_mean.iter()) {
                *slot = (1.0 - BN_MOMENTUM) * *slot + BN_MOMENTUM * m;
            }
        }
        {
            let rv = ps.value_mut(self.running_var);
            for (slot, v) in rv.iter_mut().zip(batch_var.iter()) {
                *slot = (1.0 - BN_MOMENTUM) * *slot + BN_MOMENTUM * v;
            }
        }

        (y, BatchNormCache { x_hat, inv_std })
    }

    /// Inference mode: normalize with the stored running statistics.
    pub fn forward_infer(&self, ps: &ParamStore, x: &Array4<f64>) -> Array4<f64> {
        let (_, c, _, _) = x.dim();
        assert_eq!(c, self.channels);
        let gamma = ps.value(self.gamma);
        let beta = ps.value(self.beta);
        let rm = ps.value(self.running_mean);
        let rv = ps.value(self.running_var);
        let mut y = x.clone();
        for ci in 0..c {
            let g = gamma[ci];
            let b = beta[ci];
            let mean = rm[ci];
            let istd = 1.0 / (rv[ci] + BN_EPS).sqrt();
            let mut lane = y.index_axis_mut(Axis(1), ci);
            lane.mapv_inplace(|v| g * (v - mean) * istd + b);
        }
        y
    }

    pub fn backward(
        &self,
        ps: &mut ParamStore,
        cache: &BatchNormCache,
        grad_out: &Array4<f64>,
    ) -> Array4<f64> {
        let (n, c, h, w) = grad_out.dim();
        let gamma = ps.value(self.gamma).clone();
        let mut dgamma = Array1::<f64>::zeros(c);
        let mut dbeta = Array1::<f64>::zeros(c);
        let mut dx = Array4::zeros(grad_out.dim());

        match self.mode {
            BnMode::ClipPooled => {
                let m = (n * h * w) as f64;
                for ci in 0..c {
                    let go = grad_out.index_axis(Axis(1), ci);
                    let xh = cache.x_hat.index_axis(Axis(1), ci);
                    let sum_dy = go.sum();
                    let sum_dy_xh = go.iter().zip(xh.iter()).map(|(a, b)| a * b).sum::<f64>();
                    dgamma[ci] = sum_dy_xh;
                    dbeta[ci] = sum_dy;
                    let scale = gamma[ci] * cache.inv_std[ci] / m;
                    let mut dxi = dx.index_axis_mut(Axis(1), ci);
                    ndarray::Zip::from(&mut dxi).and(&go).and(&xh).for_each(
                        |dxi, &dy, &xh| {
                            *dxi = scale * (m * dy - sum_dy - xh * sum_dy_xh);
                        },
                    );
                }
            }
            BnMode::PerSample => {
                let m = (h * w) as f64;
                for ni in 0..n {
                    for ci in 0..c {
                        let istd = cache.inv_std[ni * c + ci];
                        let mut sum_dy = 0.0;
                        let mut sum_dy_xh = 0.0;
                        for yy in 0..h {
                            for xx in 0..w {
                                let dy = grad_out[[ni, ci, yy, xx]];
                                sum_dy += dy;
                                sum_dy_xh += dy * cache.x_hat[[ni, ci, yy, xx]];
                            }
                        }
                        dgamma[ci] += sum_dy_xh;
                        dbeta[ci] += sum_dy;
                        let scale = gamma[ci] * istd / m;
                        for yy in 0..h {
                            for xx in 0..w {
                                let dy = grad_out[[ni, ci, yy, xx]];
                                let xh = cache.x_hat[[ni, ci, yy, xx]];
                                dx[[ni, ci, yy, xx]] =
                                    scale * (m * dy - sum_dy - xh * sum_dy_xh);
                            }
                        }
                    }
                }
            }
        }

        ps.grad_add(self.gamma, dgamma.into_dyn().view());
        ps.grad_add(self.beta, dbeta.into_dyn().view());
        dx
    }
}

/// Layer norm over the last axis of a `[T][D]` sequence.
#[derive(Debug, Clone)]
pub struct LayerNorm {
    pub gamma: ParamId,
    pub beta: ParamId,
    pub dim: usize,
}

pub struct LayerNormCache {
    x_hat: Array2<f64>,
    inv_std: Vec<f64>,
}

pub const LN_EPS: f64 = 1e-5;

impl LayerNorm {
    pub fn new(ps: &mut ParamStore, name: &str, dim: usize) -> Result<Self, BuildError> {
        Ok(LayerNorm {
            gamma: ps.add(&format!("{name}.gamma"), init::ones(&[dim]))?,
            beta: ps.add(&format!("{name}.beta"), init::zeros(&[dim]))?,
            dim,
        })
    }

    pub fn forward(&self, ps: &ParamStore, x: &Array2<f64>) -> (Array2<f64>, LayerNormCache) {
        let (t, d) = x.dim();
        assert_eq!(d, self.dim);
        let gamma = ps.value(self.gamma).view().into_dimensionality::<Ix1>().unwrap();
        let beta = ps.value(self.beta).view().into_dimensionality::<Ix1>().unwrap();
        let mut y = Array2::zeros((t, d));
        let mut x_hat = Array2::zeros((t, d));
        let mut inv_std = Vec::with_capacity(t);
        for ti in 0..t {
            let row = x.row(ti);
            let mean = row.sum() / d as f64;
            let var = row.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / d as f64;
            let istd = 1.0 / (var + LN_EPS).sqrt();
            inv_std.push(istd);
            for di in 0..d {
                let xh = (row[di] - mean) * istd;
                x_hat[[ti, di]] = xh;
                y[[ti, di]] = gamma[di] * xh + beta[di];
            }
        }
        (y, LayerNormCache { x_hat, inv_std })
    }

    pub fn backward(
        &self,
        ps: &mut ParamStore,
        cache: &LayerNormCache,
        grad_out: &Array2<f64>,
    ) -> Array2<f64> {
        let (t, d) = grad_out.dim();
        let gamma = ps.value(self.gamma).clone();
        let mut dgamma = Array1::<f64>::zeros(d);
        let mut dbeta = Array1::<f64>::zeros(d);
        let mut dx = Array2::zeros((t, d));
        let m = d as f64;
        for ti in 0..t {
            let mut sum_dyg = 0.0;
            let mut sum_dyg_xh = 0.0;
            for di in 0..d {
                let dy = grad_out[[ti, di]];
                let xh = cache.x_hat[[ti, di]];
                dgamma[di] += dy * xh;
                dbeta[di] += dy;
                let dyg = dy * gamma[di];
                sum_dyg += dyg;
                sum_dyg_xh += dyg * xh;
            }
            let istd = cache.inv_std[ti];
            for di in 0..d {
                let dyg = grad_out[[ti, di]] * gamma[di];
                let xh = cache.x_hat[[ti, di]];
                dx[[ti, di]] = istd / m * (m * dyg - sum_dyg - xh * sum_dyg_xh);
            }
        }
        ps.grad_add(self.gamma, dgamma.into_dyn().view());
        ps.grad_add(self.beta, dbeta.into_dyn().view());
        dx
    }
}

/// Elementwise ReLU helpers shared by the conv stacks.
pub fn relu4(x: &Array4<f64>) -> Array4<f64> {
    x.mapv(|v| v.max(0.0))
}

pub fn relu4_backward(y: &Array4<f64>, grad_out: &Array4<f64>) -> Array4<f64> {
    let mut dx = grad_out.clone();
    ndarray::Zip::from(&mut dx).and(y).for_each(|d, &yy| {
        if yy <= 0.0 {
            *d = 0.0;
        }
    });
    dx
}

pub fn relu2(x: &Array2<f64>) -> Array2<f64> {
    x.mapv(|v| v.max(0.0))
}

pub fn relu2_backward(y: &Array2<f64>, grad_out: &Array2<f64>) -> Array2<f64> {
    let mut dx = grad_out.clone();
    ndarray::Zip::from(&mut dx).and(y).for_each(|d, &yy| {
        if yy <= 0.0 {
            *d = 0.0;
        }
    });
    dx
}
