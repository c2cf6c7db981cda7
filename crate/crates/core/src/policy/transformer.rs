use rand::Rng;

use crate::autodiff::{Array, Graph, ParameterStore, Var};
use crate::error::{EmrError, Result};
use crate::nn::{glorot_std, Linear, Mlp};

/// Multi-head self-attention over `[m_1 .. m_N, e]` followed by the shared
/// three-layer scoring MLP.
///
/// ```text
/// x   = [m_1 .. m_N, e] + P       (P: slot-position sinusoids)
/// A_h = softmax(Q_h K_h^T / sqrt(k / H))
/// o_h = A_h V_h
/// h   = [o_1 .. o_H] W_o
/// ```
#[derive(Debug, Clone)]
pub struct TransformerPolicy {
    pub query: Linear,
    pub key: Linear,
    pub value: Linear,
    pub output: Linear,
    pub head: Mlp,
    pub heads: usize,
    pub embed_dim: usize,
    pub position_encoding: bool,
}

#[derive(Debug, Clone)]
pub struct TransformerForward {
    pub logits: Var,
    pub hidden: Var,
    /// One `(N+1) x (N+1)` attention matrix per head.
    pub attention: Vec<Var>,
}

/// Sinusoidal encodings for slot positions `1..=rows`.
pub fn sinusoid_table(rows: usize, dim: usize) -> Array {
    let mut data = Vec::with_capacity(rows * dim);
    for pos in 1..=rows {
        for i in 0..dim {
            let rate = 10000f64.powf((2 * (i / 2)) as f64 / dim as f64);
            let angle = pos as f64 / rate;
            data.push(if i % 2 == 0 { angle.sin() } else { angle.cos() });
        }
    }
    Array::matrix(rows, dim, data)
}

impl TransformerPolicy {
    pub fn new<R: Rng + ?Sized>(
        store: &mut ParameterStore,
        name: &str,
        embed_dim: usize,
        heads: usize,
        position_encoding: bool,
        rng: &mut R,
    ) -> Result<Self> {
        if heads == 0 || embed_dim % heads != 0 {
            return Err(EmrError::HeadsDoNotDivide {
                dim: embed_dim,
                heads,
            });
        }
        let k = embed_dim;
        // at the shared 0.1 scale the scores start near zero and every token
        // receives the same averaged value, which the head cannot rank
        let std = glorot_std(k, k);
        Ok(Self {
            query: Linear::with_std(store, &format!("{name}.query"), k, k, false, std, rng)?,
            key: Linear::with_std(store, &format!("{name}.key"), k, k, false, std, rng)?,
            value: Linear::with_std(store, &format!("{name}.value"), k, k, false, std, rng)?,
            output: Linear::with_std(store, &format!("{name}.output"), k, k, false, std, rng)?,
            head: Mlp::new(store, &format!("{name}.head"), &[k, k, k, 1], rng)?,
            heads,
            embed_dim,
            position_encoding,
        })
    }

    pub fn forward(
        &self,
        g: &mut Graph,
        store: &ParameterStore,
        tokens: Var,
    ) -> Result<TransformerForward> {
        let n = g.value(tokens).rows();
        let x = if self.position_encoding {
            let pe = g.constant(sinusoid_table(n, self.embed_dim))?;
            g.add(tokens, pe)?
        } else {
            tokens
        };
        let q = self.query.forward(g, store, x)?;
        let k = self.key.forward(g, store, x)?;
        let v = self.value.forward(g, store, x)?;
        let width = self.embed_dim / self.heads;
        let scale = 1.0 / (width as f64).sqrt();

        let mut outputs = Vec::with_capacity(self.heads);
        let mut attention = Vec::with_capacity(self.heads);
        for h in 0..self.heads {
            let qh = g.slice_cols(q, h * width, width)?;
            let kh = g.slice_cols(k, h * width, width)?;
            let vh = g.slice_cols(v, h * width, width)?;
            let kt = g.transpose(kh)?;
            let scores = g.matmul(qh, kt)?;
            let scores = g.scale(scores, scale)?;
            let a = g.softmax(scores)?;
            outputs.push(g.matmul(a, vh)?);
            attention.push(a);
        }
        let concat = g.concat_cols(&outputs)?;
        let hidden = self.output.forward(g, store, concat)?;
        let scores = self.head.forward(g, store, hidden)?;
        let logits = g.transpose(scores)?;
        Ok(TransformerForward {
            logits,
            hidden,
            attention,
        })
    }
}
