use rand::Rng;

use crate::autodiff::{Graph, ParameterStore, Var};
use crate::error::Result;
use crate::nn::{GruCell, Mlp};

/// Reads `[m_1 .. m_N, e]` with a bidirectional GRU and scores every
/// position with a shared three-layer MLP.
#[derive(Debug, Clone)]
pub struct BiGruPolicy {
    pub forward_cell: GruCell,
    pub backward_cell: GruCell,
    pub head: Mlp,
}

impl BiGruPolicy {
    pub fn new<R: Rng + ?Sized>(
        store: &mut ParameterStore,
        name: &str,
        embed_dim: usize,
        hidden_dim: usize,
        rng: &mut R,
    ) -> Result<Self> {
        Ok(Self {
            forward_cell: GruCell::new(store, &format!("{name}.gru_fw"), embed_dim, hidden_dim, rng)?,
            backward_cell: GruCell::new(store, &format!("{name}.gru_bw"), embed_dim, hidden_dim, rng)?,
            head: Mlp::new(
                store,
                &format!("{name}.head"),
                &[2 * hidden_dim, embed_dim, embed_dim, 1],
                rng,
            )?,
        })
    }

    /// Returns the `1 x (N+1)` logits and the `(N+1) x 2h` hidden states.
    pub fn forward(&self, g: &mut Graph, store: &ParameterStore, tokens: Var) -> Result<(Var, Var)> {
        let h0 = self.forward_cell.zero_state(g)?;
        let fw = self.forward_cell.run(g, store, tokens, h0, false)?;
        let bw = self.backward_cell.run(g, store, tokens, h0, true)?;
        let fw = g.concat_rows(&fw)?;
        let bw = g.concat_rows(&bw)?;
        let hidden = g.concat_cols(&[fw, bw])?;
        let scores = self.head.forward(g, store, hidden)?;
        let logits = g.transpose(scores)?;
        Ok((logits, hidden))
    }
}
