use std::collections::HashMap;

use super::array::Array;
use super::graph::Graph;
use crate::error::{EmrError, Result};

/// Index of a parameter inside its [`ParameterStore`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct ParamId(usize);

impl ParamId {
    pub fn index(self) -> usize {
        self.0
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AdamConfig {
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        Self {
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        }
    }
}

#[derive(Debug, Clone)]
struct Entry {
    name: String,
    value: Array,
    grad: Array,
    first_moment: Array,
    second_moment: Array,
    step: u64,
}

/// Flat, named collection of learnable arrays with gradient slots and Adam state.
///
/// Registration order is stable, which keeps checkpoints and gradient
/// merges deterministic.
#[derive(Debug, Clone, Default)]
pub struct ParameterStore {
    entries: Vec<Entry>,
    by_name: HashMap<String, ParamId>,
    adam: AdamConfig,
}

/// Gradients detached from a store, aligned with its [`ParamId`]s.
#[derive(Debug, Clone)]
pub struct Gradients(Vec<Array>);

impl Gradients {
    pub fn get(&self, id: ParamId) -> &Array {
        &self.0[id.0]
    }
}

impl ParameterStore {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn with_adam(adam: AdamConfig) -> Self {
        Self {
            adam,
            ..Self::default()
        }
    }

    pub fn register(&mut self, name: impl Into<String>, value: Array) -> Result<ParamId> {
        let name = name.into();
        if self.by_name.contains_key(&name) {
            return Err(EmrError::DuplicateParameter(name));
        }
        let id = ParamId(self.entries.len());
        let zeros = Array::zeros(value.shape());
        self.entries.push(Entry {
            name: name.clone(),
            grad: zeros.clone(),
            first_moment: zeros.clone(),
            second_moment: zeros,
            value,
            step: 0,
        });
        self.by_name.insert(name, id);
        Ok(id)
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn id(&self, name: &str) -> Result<ParamId> {
        self.by_name
            .get(name)
            .copied()
            .ok_or_else(|| EmrError::UnknownParameter(name.to_string()))
    }

    pub fn ids(&self) -> impl Iterator<Item = ParamId> {
        (0..self.entries.len()).map(ParamId)
    }

    pub fn name(&self, id: ParamId) -> &str {
        &self.entries[id.0].name
    }

    pub fn value(&self, id: ParamId) -> &Array {
        &self.entries[id.0].value
    }

    pub fn value_mut(&mut self, id: ParamId) -> &mut Array {
        &mut self.entries[id.0].value
    }

    pub fn grad(&self, id: ParamId) -> &Array {
        &self.entries[id.0].grad
    }

    pub fn step_count(&self, id: ParamId) -> u64 {
        self.entries[id.0].step
    }

    /// Adds the parameter gradients computed by `graph.backward`.
    pub fn accumulate(&mut self, graph: &Graph) {
        for (id, g) in graph.param_grads() {
            self.entries[id.0].grad.add_scaled(g, 1.0);
        }
    }

    pub fn zero_grad(&mut self) {
        for e in &mut self.entries {
            e.grad.fill(0.0);
        }
    }

    /// Moves the accumulated gradients out, leaving zeros behind.
    pub fn take_gradients(&mut self) -> Gradients {
        Gradients(
            self.entries
                .iter_mut()
                .map(|e| {
                    let zeros = Array::zeros(e.grad.shape());
                    std::mem::replace(&mut e.grad, zeros)
                })
                .collect(),
        )
    }

    /// Clears Adam moments and step counters, keeping values.
    pub fn reset_optimizer(&mut self) {
        for e in &mut self.entries {
            e.first_moment.fill(0.0);
            e.second_moment.fill(0.0);
            e.step = 0;
        }
    }

    /// A copy for a rollout worker: same values, zero gradients.
    pub fn snapshot(&self) -> Self {
        let mut copy = self.clone();
        copy.zero_grad();
        copy
    }

    /// Averages worker gradients into this store's gradient slots.
    pub fn merge_gradients(&mut self, workers: &[Gradients]) {
        if workers.is_empty() {
            return;
        }
        let scale = 1.0 / workers.len() as f64;
        for w in workers {
            for (e, g) in self.entries.iter_mut().zip(&w.0) {
                e.grad.add_scaled(g, scale);
            }
        }
    }

    pub fn grad_norm(&self) -> f64 {
        self.entries
            .iter()
            .map(|e| e.grad.squared_norm())
            .sum::<f64>()
            .sqrt()
    }

    /// Rescales all gradients so their global L2 norm is at most `max_norm`.
    /// Returns the norm before clipping.
    pub fn clip_grad_norm(&mut self, max_norm: f64) -> f64 {
        let norm = self.grad_norm();
        if norm > max_norm && norm.is_finite() {
            let s = max_norm / norm;
            for e in &mut self.entries {
                e.grad.data_mut().iter_mut().for_each(|g| *g *= s);
            }
        }
        norm
    }

    /// One bias-corrected Adam update, then gradients are zeroed.
    ///
    /// A non-finite gradient anywhere aborts the whole step before any
    /// parameter is touched.
    pub fn adam_step(&mut self, learning_rate: f64) -> Result<()> {
        if let Some(bad) = self.entries.iter().find(|e| !e.grad.all_finite()) {
            return Err(EmrError::NonFiniteGradient(bad.name.clone()));
        }
        let AdamConfig { beta1, beta2, eps } = self.adam;
        for e in &mut self.entries {
            e.step += 1;
            let t = e.step as i32;
            let c1 = 1.0 - beta1.powi(t);
            let c2 = 1.0 - beta2.powi(t);
            let grad = e.grad.data();
            let m = e.first_moment.data_mut();
            for (mi, g) in m.iter_mut().zip(grad) {
                *mi = beta1 * *mi + (1.0 - beta1) * g;
            }
            let v = e.second_moment.data_mut();
            for (vi, g) in v.iter_mut().zip(grad) {
                *vi = beta2 * *vi + (1.0 - beta2) * g * g;
            }
            let (m, v) = (e.first_moment.data(), e.second_moment.data());
            for ((p, mi), vi) in e.value.data_mut().iter_mut().zip(m).zip(v) {
                let m_hat = mi / c1;
                let v_hat = vi / c2;
                *p -= learning_rate * m_hat / (v_hat.sqrt() + eps);
            }
        }
        self.zero_grad();
        Ok(())
    }
}
