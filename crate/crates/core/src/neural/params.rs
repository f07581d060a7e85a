use std::collections::HashMap;

use rand::Rng;

use super::{init_uniform, Tensor};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct ParamId(pub usize);

/// Named trainable tensors, in registration order.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct ParamStore {
    names: Vec<String>,
    values: Vec<Tensor>,
    index: HashMap<String, ParamId>,
}

impl ParamStore {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn add(&mut self, name: impl Into<String>, value: Tensor) -> Result<ParamId> {
        let name = name.into();
        if self.index.contains_key(&name) {
            return Err(Error::Shape(format!("parameter {name:?} registered twice")));
        }
        let id = ParamId(self.values.len());
        self.index.insert(name.clone(), id);
        self.names.push(name);
        self.values.push(value);
        Ok(id)
    }

    pub fn add_uniform<R: Rng + ?Sized>(
        &mut self,
        name: impl Into<String>,
        rows: usize,
        cols: usize,
        rng: &mut R,
    ) -> Result<ParamId> {
        let data = (0..rows * cols).map(|_| init_uniform(rng)).collect();
        self.add(name, Tensor::from_vec(rows, cols, data)?)
    }

    pub fn add_zeros(&mut self, name: impl Into<String>, rows: usize, cols: usize) -> Result<ParamId> {
        self.add(name, Tensor::zeros(rows, cols))
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn get(&self, id: ParamId) -> &Tensor {
        &self.values[id.0]
    }

    pub fn get_mut(&mut self, id: ParamId) -> &mut Tensor {
        &mut self.values[id.0]
    }

    pub fn id(&self, name: &str) -> Option<ParamId> {
        self.index.get(name).copied()
    }

    pub fn name(&self, id: ParamId) -> &str {
        &self.names[id.0]
    }

    pub fn iter(&self) -> impl Iterator<Item = (ParamId, &str, &Tensor)> {
        self.names.iter().zip(&self.values).enumerate().map(|(i, (n, v))| (ParamId(i), n.as_str(), v))
    }

    /// Total number of scalars.
    pub fn size(&self) -> usize {
        self.values.iter().map(Tensor::len).sum()
    }
}

/// Parameter gradients from one or more backward passes.
#[derive(Debug, Clone, Default)]
pub struct Gradients {
    grads: HashMap<ParamId, Tensor>,
}

impl Gradients {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn get(&self, id: ParamId) -> Option<&Tensor> {
        self.grads.get(&id)
    }

    pub fn accumulate(&mut self, id: ParamId, g: &Tensor) {
        match self.grads.get_mut(&id) {
            Some(acc) => acc.add_assign(g),
            None => {
                self.grads.insert(id, g.clone());
            }
        }
    }

    pub(crate) fn insert_or_add(&mut self, id: ParamId, g: Tensor) {
        match self.grads.get_mut(&id) {
            Some(acc) => acc.add_assign(&g),
            None => {
                self.grads.insert(id, g);
            }
        }
    }

    pub fn merge(&mut self, other: Gradients) {
        let mut entries: Vec<_> = other.grads.into_iter().collect();
        entries.sort_by_key(|(id, _)| *id);
        for (id, g) in entries {
            self.insert_or_add(id, g);
        }
    }

    pub fn scale(&mut self, s: f64) {
        for g in self.grads.values_mut() {
            g.scale_in_place(s);
        }
    }

    pub fn ids(&self) -> Vec<ParamId> {
        let mut ids: Vec<_> = self.grads.keys().copied().collect();
        ids.sort();
        ids
    }

    pub fn is_empty(&self) -> bool {
        self.grads.is_empty()
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AdamConfig {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        AdamConfig { lr: 1e-3, beta1: 0.9, beta2: 0.999, eps: 1e-8 }
    }
}

/// Adam with bias correction and one global step counter. Parameters without
/// a gradient in a step keep their value and moments.
#[derive(Debug, Clone)]
pub struct Adam {
    pub config: AdamConfig,
    step: u64,
    m: HashMap<ParamId, Vec<f64>>,
    v: HashMap<ParamId, Vec<f64>>,
}

impl Adam {
    pub fn new(config: AdamConfig) -> Self {
        Adam { config, step: 0, m: HashMap::new(), v: HashMap::new() }
    }

    pub fn steps(&self) -> u64 {
        self.step
    }

    pub fn step(&mut self, store: &mut ParamStore, grads: &Gradients) {
        self.step += 1;
        let AdamConfig { lr, beta1, beta2, eps } = self.config;
        let bc1 = 1.0 - beta1.powi(self.step as i32);
        let bc2 = 1.0 - beta2.powi(self.step as i32);
        for id in grads.ids() {
            let g = grads.get(id).expect("id came from grads");
            let theta = store.get_mut(id);
            let m = self.m.entry(id).or_insert_with(|| vec![0.0; g.len()]);
            let v = self.v.entry(id).or_insert_with(|| vec![0.0; g.len()]);
            for i in 0..g.len() {
                let gi = g.data[i];
                m[i] = beta1 * m[i] + (1.0 - beta1) * gi;
                v[i] = beta2 * v[i] + (1.0 - beta2) * gi * gi;
                let mh = m[i] / bc1;
                let vh = v[i] / bc2;
                theta.data[i] -= lr * mh / (vh.sqrt() + eps);
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn first_adam_step_moves_by_lr_times_sign() {
        let mut store = ParamStore::new();
        let p = store.add("p", Tensor::row_vector(vec![1.0, -1.0, 0.5])).unwrap();
        let q = store.add("q", Tensor::row_vector(vec![3.0])).unwrap();
        let mut grads = Gradients::new();
        grads.accumulate(p, &Tensor::row_vector(vec![0.2, -4.0, 0.0]));
        let mut adam = Adam::new(AdamConfig::default());
        adam.step(&mut store, &grads);
        let v = &store.get(p).data;
        // m̂ = g and v̂ = g² after one step, so the move is lr·g/(|g|+ε).
        assert!((v[0] - (1.0 - 1e-3 * 0.2 / (0.2 + 1e-8))).abs() < 1e-15);
        assert!((v[1] - (-1.0 + 1e-3 * 4.0 / (4.0 + 1e-8))).abs() < 1e-15);
        assert_eq!(v[2], 0.5);
        assert_eq!(store.get(q).data, vec![3.0]);
        assert_eq!(adam.steps(), 1);
    }

    #[test]
    fn zero_gradient_leaves_parameters_unchanged() {
        let mut store = ParamStore::new();
        let p = store.add("p", Tensor::row_vector(vec![0.25, -3.0])).unwrap();
        let mut grads = Gradients::new();
        grads.accumulate(p, &Tensor::zeros(1, 2));
        let mut adam = Adam::new(AdamConfig::default());
        for _ in 0..3 {
            adam.step(&mut store, &grads);
        }
        assert_eq!(store.get(p).data, vec![0.25, -3.0]);
    }

    #[test]
    fn duplicate_names_rejected() {
        let mut store = ParamStore::new();
        store.add_zeros("a", 1, 1).unwrap();
        assert!(store.add_zeros("a", 1, 1).is_err());
    }
}
