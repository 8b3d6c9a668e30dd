//! Squeeze-and-excitation channel gating.
//!
//! Squeeze is a global mean over the non-channel axes, excitation is a
//! two-layer bottleneck (`C -> C/r -> C`) ending in a sigmoid, and the
//! resulting gate rescales each channel. The gate vector is returned from
//! every forward pass: it is the unit of interpretability downstream.

use ndarray::{Array1, Array2, Array4, Axis, Ix2};
use rand_chacha::ChaCha8Rng;

use super::init;
use super::param::{ParamId, ParamStore};
use super::BuildError;

/// Captured excitation vector. Components are sigmoid outputs, strictly
/// inside `(0, 1)`.
#[derive(Debug, Clone)]
pub struct SeGate {
    pub values: Array1<f64>,
    pub reduction_ratio: usize,
}

#[derive(Debug, Clone)]
pub struct SeBlock {
    pub fc1_w: ParamId,
    pub fc1_b: ParamId,
    pub fc2_w: ParamId,
    pub fc2_b: ParamId,
    pub channels: usize,
    pub reduction_ratio: usize,
}

pub struct SeMapsCache {
    x: Array4<f64>,
    squeeze: Array2<f64>,
    hidden: Array2<f64>,
    gates: Array2<f64>,
}

pub struct SeSeqCache {
    x: Array2<f64>,
    squeeze: Array1<f64>,
    hidden: Array1<f64>,
    gate: Array1<f64>,
}

impl SeBlock {
    pub fn new(
        ps: &mut ParamStore,
        rng: &mut ChaCha8Rng,
        name: &str,
        channels: usize,
        reduction_ratio: usize,
    ) -> Result<Self, BuildError> {
        if reduction_ratio == 0 || channels % reduction_ratio != 0 {
            return Err(BuildError::SeRatio {
                context: name.to_string(),
                channels,
                ratio: reduction_ratio,
            });
        }
        let hidden = channels / reduction_ratio;
        // A normalized input can have an exactly zero squeeze vector; the
        // small positive bias keeps the bottleneck off the ReLU kink at
        // initialization.
        let mut fc1_bias = init::zeros(&[hidden]);
        fc1_bias.fill(0.1);
        Ok(SeBlock {
            fc1_w: ps.add(
                &format!("{name}.fc1.w"),
                init::kaiming_uniform(rng, &[hidden, channels], channels),
            )?,
            fc1_b: ps.add(&format!("{name}.fc1.b"), fc1_bias)?,
            fc2_w: ps.add(
                &format!("{name}.fc2.w"),
                init::xavier_uniform(rng, &[channels, hidden], hidden, channels),
            )?,
            fc2_b: ps.add(&format!("{name}.fc2.b"), init::zeros(&[channels]))?,
            channels,
            reduction_ratio,
        })
    }

    /// Excitation MLP on a batch of squeeze vectors `[N][C]`.
    fn excite(&self, ps: &ParamStore, squeeze: &Array2<f64>) -> (Array2<f64>, Array2<f64>) {
        let w1 = ps.value(self.fc1_w).view().into_dimensionality::<Ix2>().unwrap();
        let w2 = ps.value(self.fc2_w).view().into_dimensionality::<Ix2>().unwrap();
        let b1 = ps.value(self.fc1_b);
        let b2 = ps.value(self.fc2_b);
        let mut hidden = squeeze.dot(&w1.t());
        for mut row in hidden.rows_mut() {
            for (v, b) in row.iter_mut().zip(b1.iter()) {
                *v = (*v + b).max(0.0);
            }
        }
        let mut gates = hidden.dot(&w2.t());
        for mut row in gates.rows_mut() {
            for (v, b) in row.iter_mut().zip(b2.iter()) {
                *v = sigmoid(*v + b);
            }
        }
        (hidden, gates)
    }

    /// Gate feature maps `[N][C][h][w]`, one gate vector per leading index.
    /// Returns the scaled maps and the `[N][C]` gate matrix.
    pub fn forward_maps(
        &self,
        ps: &ParamStore,
        x: &Array4<f64>,
    ) -> (Array4<f64>, Array2<f64>, SeMapsCache) {
        let (n, c, h, w) = x.dim();
        assert_eq!(c, self.channels);
        let area = (h * w) as f64;
        let mut squeeze = Array2::zeros((n, c));
        for ni in 0..n {
            for ci in 0..c {
                squeeze[[ni, ci]] =
                    x.index_axis(Axis(0), ni).index_axis(Axis(0), ci).sum() / area;
            }
        }
        let (hidden, gates) = self.excite(ps, &squeeze);
        let mut y = x.clone();
        for ni in 0..n {
            for ci in 0..c {
                let g = gates[[ni, ci]];
                let mut lane = y.index_axis_mut(Axis(0), ni);
                let mut lane = lane.index_axis_mut(Axis(0), ci);
                lane.mapv_inplace(|v| v * g);
            }
        }
        let cache = SeMapsCache {
            x: x.clone(),
            squeeze,
            hidden,
            gates: gates.clone(),
        };
        (y, gates, cache)
    }

    pub fn forward_maps_infer(&self, ps: &ParamStore, x: &Array4<f64>) -> (Array4<f64>, Array2<f64>) {
        let (y, gates, _) = self.forward_maps(ps, x);
        (y, gates)
    }

    pub fn backward_maps(
        &self,
        ps: &mut ParamStore,
        cache: &SeMapsCache,
        grad_out: &Array4<f64>,
    ) -> Array4<f64> {
        let (n, c, h, w) = grad_out.dim();
        let area = (h * w) as f64;
        // Direct path plus gate gradient.
        let mut dgates = Array2::zeros((n, c));
        let mut dx = grad_out.clone();
        for ni in 0..n {
            for ci in 0..c {
                let g = cache.gates[[ni, ci]];
                let mut acc = 0.0;
                for yy in 0..h {
                    for xx in 0..w {
                        acc += grad_out[[ni, ci, yy, xx]] * cache.x[[ni, ci, yy, xx]];
                        dx[[ni, ci, yy, xx]] *= g;
                    }
                }
                dgates[[ni, ci]] = acc;
            }
        }
        let dsqueeze = self.excite_backward(ps, &cache.squeeze, &cache.hidden, &cache.gates, &dgates);
        for ni in 0..n {
            for ci in 0..c {
                let spread = dsqueeze[[ni, ci]] / area;
                let mut lane = dx.index_axis_mut(Axis(0), ni);
                let mut lane = lane.index_axis_mut(Axis(0), ci);
                lane.mapv_inplace(|v| v + spread);
            }
        }
        dx
    }

    /// Gate a `[T][C]` sequence with a single gate from the temporal mean.
    pub fn forward_seq(
        &self,
        ps: &ParamStore,
        x: &Array2<f64>,
    ) -> (Array2<f64>, Array1<f64>, SeSeqCache) {
        let (t, c) = x.dim();
        assert_eq!(c, self.channels);
        let squeeze: Array1<f64> = x.sum_axis(Axis(0)) / t as f64;
        let squeeze2 = squeeze.clone().insert_axis(Axis(0));
        let (hidden2, gates2) = self.excite(ps, &squeeze2);
        let gate = gates2.row(0).to_owned();
        let hidden = hidden2.row(0).to_owned();
        let mut y = x.clone();
        for mut row in y.rows_mut() {
            for (v, g) in row.iter_mut().zip(gate.iter()) {
                *v *= g;
            }
        }
        let cache = SeSeqCache {
            x: x.clone(),
            squeeze,
            hidden,
            gate: gate.clone(),
        };
        (y, gate, cache)
    }

    pub fn backward_seq(
        &self,
        ps: &mut ParamStore,
        cache: &SeSeqCache,
        grad_out: &Array2<f64>,
    ) -> Array2<f64> {
        let (t, c) = grad_out.dim();
        let mut dgate = Array1::zeros(c);
        let mut dx = grad_out.clone();
        for ti in 0..t {
            for ci in 0..c {
                dgate[ci] += grad_out[[ti, ci]] * cache.x[[ti, ci]];
                dx[[ti, ci]] *= cache.gate[ci];
            }
        }
        let dsq = self.excite_backward(
            ps,
            &cache.squeeze.clone().insert_axis(Axis(0)),
            &cache.hidden.clone().insert_axis(Axis(0)),
            &cache.gate.clone().insert_axis(Axis(0)),
            &dgate.insert_axis(Axis(0)),
        );
        for ti in 0..t {
            for ci in 0..c {
                dx[[ti, ci]] += dsq[[0, ci]] / t as f64;
            }
        }
        dx
    }

    /// Backprop through the excitation MLP; returns d(squeeze).
    fn excite_backward(
        &self,
        ps: &mut ParamStore,
        squeeze: &Array2<f64>,
        hidden: &Array2<f64>,
        gates: &Array2<f64>,
        dgates: &Array2<f64>,
    ) -> Array2<f64> {
        let w1 = ps
            .value(self.fc1_w)
            .view()
            .into_dimensionality::<Ix2>()
            .unwrap()
            .to_owned();
        let w2 = ps
            .value(self.fc2_w)
            .view()
            .into_dimensionality::<Ix2>()
            .unwrap()
            .to_owned();
        // Sigmoid derivative.
        let mut dz2 = dgates.clone();
        ndarray::Zip::from(&mut dz2).and(gates).for_each(|d, &g| {
            *d *= g * (1.0 - g);
        });
        let dw2 = dz2.t().dot(hidden);
        let db2 = dz2.sum_axis(Axis(0));
        let mut dz1 = dz2.dot(&w2);
        ndarray::Zip::from(&mut dz1).and(hidden).for_each(|d, &h| {
            if h <= 0.0 {
                *d = 0.0;
            }
        });
        let dw1 = dz1.t().dot(squeeze);
        let db1 = dz1.sum_axis(Axis(0));
        let dsqueeze = dz1.dot(&w1);
        ps.grad_add(self.fc2_w, dw2.into_dyn().view());
        ps.grad_add(self.fc2_b, db2.into_dyn().view());
        ps.grad_add(self.fc1_w, dw1.into_dyn().view());
        ps.grad_add(self.fc1_b, db1.into_dyn().view());
        dsqueeze
    }
}

pub(crate) fn sigmoid(v: f64) -> f64 {
    1.0 / (1.0 + (-v).exp())
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;

    #[test]
    fn rejects_bad_reduction_ratio() {
        let mut ps = ParamStore::new();
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        assert!(matches!(
            SeBlock::new(&mut ps, &mut rng, "se", 10, 16),
            Err(BuildError::SeRatio { .. })
        ));
    }

    #[test]
    fn zero_input_stays_zero() {
        let mut ps = ParamStore::new();
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let se = SeBlock::new(&mut ps, &mut rng, "se", 8, 2).unwrap();
        let x = Array4::zeros((3, 8, 4, 4));
        let (y, gates, _) = se.forward_maps(&ps, &x);
        assert!(y.iter().all(|v| *v == 0.0));
        assert!(gates.iter().all(|g| (0.0..1.0).contains(g)));
    }

    #[test]
    fn zero_excitation_params_gate_half() {
        let mut ps = ParamStore::new();
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let se = SeBlock::new(&mut ps, &mut rng, "se", 8, 2).unwrap();
        for id in [se.fc1_w, se.fc1_b, se.fc2_w, se.fc2_b] {
            ps.value_mut(id).fill(0.0);
        }
        let x = Array4::from_shape_fn((2, 8, 3, 3), |(n, c, y, xx)| {
            (n as f64 - 0.5) * (c as f64 + 1.0) * 0.1 + (y * 3 + xx) as f64 * 0.01
        });
        let (y, gates, _) = se.forward_maps(&ps, &x);
        assert!(gates.iter().all(|g| (g - 0.5).abs() < 1e-15));
        for (a, b) in y.iter().zip(x.iter()) {
            assert!((a - 0.5 * b).abs() < 1e-15);
        }
    }

    #[test]
    fn gates_strictly_inside_unit_interval() {
        let mut ps = ParamStore::new();
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let se = SeBlock::new(&mut ps, &mut rng, "se", 16, 4).unwrap();
        let x = Array2::from_shape_fn((9, 16), |(t, c)| ((t * 16 + c) % 11) as f64 * 0.3 - 1.0);
        let (_, gate, _) = se.forward_seq(&ps, &x);
        assert!(gate.iter().all(|g| *g > 0.0 && *g < 1.0));
    }
}
