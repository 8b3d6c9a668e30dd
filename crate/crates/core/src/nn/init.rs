//! Seeded weight initialization.

use ndarray::ArrayD;
use rand::Rng;
use rand_chacha::ChaCha8Rng;

/// Kaiming-uniform fan-in initialization for layers followed by ReLU.
pub fn kaiming_uniform(rng: &mut ChaCha8Rng, shape: &[usize], fan_in: usize) -> ArrayD<f64> {
    let limit = (6.0 / fan_in as f64).sqrt();
    ArrayD::from_shape_fn(shape.to_vec(), |_| rng.gen_range(-limit..limit))
}

/// Xavier-uniform initialization for linear maps without a ReLU.
pub fn xavier_uniform(
    rng: &mut ChaCha8Rng,
    shape: &[usize],
    fan_in: usize,
    fan_out: usize,
) -> ArrayD<f64> {
    let limit = (6.0 / (fan_in + fan_out) as f64).sqrt();
    ArrayD::from_shape_fn(shape.to_vec(), |_| rng.gen_range(-limit..limit))
}

pub fn zeros(shape: &[usize]) -> ArrayD<f64> {
    ArrayD::zeros(shape.to_vec())
}

pub fn ones(shape: &[usize]) -> ArrayD<f64> {
    ArrayD::from_elem(shape.to_vec(), 1.0)
}
