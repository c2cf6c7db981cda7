use rand::Rng;

use crate::autodiff::{Graph, ParameterStore, Var};
use crate::error::Result;
use crate::nn::{GruCell, Mlp};

/// Critic over the whole memory: a Deep-Sets summary of the policy's
/// per-entry hidden states, threaded through a GRU across decisions.
///
/// ```text
/// s = rho(sum_i h_i)        rho: linear, relu, linear
/// c = GRU(s, c_prev)
/// V = MLP(c)
/// ```
#[derive(Debug, Clone)]
pub struct ValueNet {
    pub rho: Mlp,
    pub cell: GruCell,
    pub head: Mlp,
}

impl ValueNet {
    pub fn new<R: Rng + ?Sized>(
        store: &mut ParameterStore,
        name: &str,
        input_dim: usize,
        embed_dim: usize,
        rng: &mut R,
    ) -> Result<Self> {
        let k = embed_dim;
        Ok(Self {
            rho: Mlp::new(store, &format!("{name}.rho"), &[input_dim, k, k], rng)?,
            cell: GruCell::new(store, &format!("{name}.gru"), k, k, rng)?,
            head: Mlp::new(store, &format!("{name}.head"), &[k, k, k, 1], rng)?,
        })
    }

    pub fn initial_state(&self, g: &mut Graph) -> Result<Var> {
        self.cell.zero_state(g)
    }

    /// Returns `(V, next recurrent state)`.
    pub fn forward(
        &self,
        g: &mut Graph,
        store: &ParameterStore,
        hidden: Var,
        state: Var,
    ) -> Result<(Var, Var)> {
        let pooled = g.sum_rows(hidden)?;
        let s = self.rho.forward(g, store, pooled)?;
        let next = self.cell.step(g, store, s, state)?;
        let v = self.head.forward(g, store, next)?;
        Ok((v, next))
    }
}
