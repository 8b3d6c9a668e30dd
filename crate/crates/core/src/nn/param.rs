use std::collections::HashMap;

use ndarray::{ArrayD, ArrayViewD};

use super::BuildError;

/// Handle to one named array in a [`ParamStore`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ParamId(pub(crate) usize);

/// Flat store of named arrays: trainable parameters plus non-trainable
/// state (batch-norm running statistics). Gradients live alongside values
/// so a single `&mut ParamStore` is the whole training state.
#[derive(Debug, Clone, Default)]
pub struct ParamStore {
    names: Vec<String>,
    values: Vec<ArrayD<f64>>,
    grads: Vec<ArrayD<f64>>,
    trainable: Vec<bool>,
    index: HashMap<String, usize>,
}

impl ParamStore {
    pub fn new() -> Self {
        Self::default()
    }

    /// Register a trainable parameter. Names must be unique.
    pub fn add(&mut self, name: &str, value: ArrayD<f64>) -> Result<ParamId, BuildError> {
        self.insert(name, value, true)
    }

    /// Register non-trainable state (saved in checkpoints, ignored by the
    /// optimizer).
    pub fn add_state(&mut self, name: &str, value: ArrayD<f64>) -> Result<ParamId, BuildError> {
        self.insert(name, value, false)
    }

    fn insert(
        &mut self,
        name: &str,
        value: ArrayD<f64>,
        trainable: bool,
    ) -> Result<ParamId, BuildError> {
        if self.index.contains_key(name) {
            return Err(BuildError::DuplicateParam(name.to_string()));
        }
        let id = self.values.len();
        self.names.push(name.to_string());
        self.grads.push(ArrayD::zeros(value.shape()));
        self.values.push(value);
        self.trainable.push(trainable);
        self.index.insert(name.to_string(), id);
        Ok(ParamId(id))
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn name(&self, id: ParamId) -> &str {
        &self.names[id.0]
    }

    pub fn names(&self) -> impl Iterator<Item = &str> {
        self.names.iter().map(String::as_str)
    }

    pub fn id_of(&self, name: &str) -> Option<ParamId> {
        self.index.get(name).copied().map(ParamId)
    }

    pub fn is_trainable(&self, id: ParamId) -> bool {
        self.trainable[id.0]
    }

    pub fn value(&self, id: ParamId) -> &ArrayD<f64> {
        &self.values[id.0]
    }

    pub fn value_mut(&mut self, id: ParamId) -> &mut ArrayD<f64> {
        &mut self.values[id.0]
    }

    pub fn grad(&self, id: ParamId) -> &ArrayD<f64> {
        &self.grads[id.0]
    }

    /// Add a contribution to a parameter's gradient.
    pub fn grad_add(&mut self, id: ParamId, delta: ArrayViewD<'_, f64>) {
        self.grads[id.0] += &delta;
    }

    pub fn zero_grads(&mut self) {
        for g in &mut self.grads {
            g.fill(0.0);
        }
    }

    /// Iterate `(id, value, grad)` over trainable parameters, mutably for
    /// the values. Used by the optimizer step.
    pub fn trainable_entries(
        &mut self,
    ) -> impl Iterator<Item = (usize, &mut ArrayD<f64>, &ArrayD<f64>)> {
        let trainable = &self.trainable;
        self.values
            .iter_mut()
            .zip(self.grads.iter())
            .enumerate()
            .filter(move |(i, _)| trainable[*i])
            .map(|(i, (v, g))| (i, v, g))
    }

    /// Total number of scalar values across trainable parameters.
    pub fn num_scalars(&self) -> usize {
        self.values
            .iter()
            .zip(self.trainable.iter())
            .filter(|(_, t)| **t)
            .map(|(v, _)| v.len())
            .sum()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::ArrayD;

    #[test]
    fn names_are_unique() {
        let mut ps = ParamStore::new();
        ps.add("a.w", ArrayD::zeros(vec![2, 2])).unwrap();
        assert!(matches!(
            ps.add("a.w", ArrayD::zeros(vec![2])),
            Err(BuildError::DuplicateParam(_))
        ));
    }

    #[test]
    fn grads_track_shape_and_accumulate() {
        let mut ps = ParamStore::new();
        let id = ps.add("w", ArrayD::from_elem(vec![3], 1.0)).unwrap();
        ps.grad_add(id, ArrayD::from_elem(vec![3], 0.5).view());
        ps.grad_add(id, ArrayD::from_elem(vec![3], 0.25).view());
        assert_eq!(ps.grad(id).as_slice().unwrap(), &[0.75, 0.75, 0.75]);
        ps.zero_grads();
        assert!(ps.grad(id).iter().all(|g| *g == 0.0));
    }
}
