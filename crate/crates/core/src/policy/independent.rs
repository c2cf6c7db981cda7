use rand::Rng;

use crate::autodiff::{Array, Graph, ParamId, ParameterStore, Var};
use crate::error::Result;
use crate::nn::INIT_STD;

/// Scores each slot only against the incoming entry, discounted by how
/// much attention the slot has been getting lately.
///
/// ```text
/// a_i     = softmax_i(m_i . e)
/// v_i     = 0.1 v_i' + 0.9 a_i          (v' is the previous usage)
/// gamma_i = sigmoid(W_gamma . m_i + b_gamma)
/// g_i     = a_i - gamma_i v_i'
/// pi      = softmax(g)
/// ```
#[derive(Debug, Clone)]
pub struct IndependentPolicy {
    pub gate_weight: ParamId,
    pub gate_bias: ParamId,
}

pub const USAGE_DECAY: f64 = 0.1;

#[derive(Debug, Clone)]
pub struct IndependentForward {
    /// `g`, the pre-softmax scores (`1 x N`).
    pub logits: Var,
    pub attention: Var,
    pub gate: Var,
    /// Usage after this step, as values and as a `1 x N` node.
    pub usage: Vec<f64>,
    pub usage_node: Var,
}

impl IndependentPolicy {
    pub fn new<R: Rng + ?Sized>(
        store: &mut ParameterStore,
        name: &str,
        embed_dim: usize,
        rng: &mut R,
    ) -> Result<Self> {
        Ok(Self {
            gate_weight: store.register(
                format!("{name}.gate.weight"),
                Array::randn(&[embed_dim, 1], INIT_STD, rng),
            )?,
            gate_bias: store.register(format!("{name}.gate.bias"), Array::zeros(&[1, 1]))?,
        })
    }

    /// `memory` is `N x k`, `entry` is `1 x k`, `usage` is the previous `v`
    /// as a `1 x N` node.
    pub fn forward(
        &self,
        g: &mut Graph,
        store: &ParameterStore,
        memory: Var,
        entry: Var,
        usage: Var,
    ) -> Result<IndependentForward> {
        let et = g.transpose(entry)?;
        let scores = g.matmul(memory, et)?;
        let scores = g.transpose(scores)?;
        let attention = g.softmax(scores)?;

        let w = g.param(store, self.gate_weight);
        let b = g.param(store, self.gate_bias);
        let gate = g.matmul(memory, w)?;
        let gate = g.add_bias(gate, b)?;
        let gate = g.transpose(gate)?;
        let gate = g.sigmoid(gate)?;

        let discount = g.mul(gate, usage)?;
        let logits = g.sub(attention, discount)?;

        let kept = g.scale(usage, USAGE_DECAY)?;
        let fresh = g.scale(attention, 1.0 - USAGE_DECAY)?;
        let usage_node = g.add(kept, fresh)?;
        Ok(IndependentForward {
            logits,
            attention,
            gate,
            usage: g.value(usage_node).data().to_vec(),
            usage_node,
        })
    }
}
