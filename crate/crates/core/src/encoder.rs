//! Data encoder: maps each incoming fact to a `k`-dimensional memory vector.

use std::fmt;
use std::str::FromStr;

use rand::Rng;

use crate::autodiff::{Array, Graph, ParamId, ParameterStore, Var};
use crate::error::{EmrError, Result};
use crate::nn::{GruCell, INIT_STD};
use crate::solver::MemN2N;
use crate::tasks::{ItemKind, StreamItem, PAD};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum EncoderKind {
    /// Sum over hops of the solver's output-memory embedding of the sentence.
    Memn2nValueSum,
    /// Separate word embedding read by a GRU; the final state is the vector.
    Gru,
}

impl FromStr for EncoderKind {
    type Err = EmrError;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "memn2n_value_sum" => Ok(Self::Memn2nValueSum),
            "gru" => Ok(Self::Gru),
            other => Err(EmrError::Config(format!("unknown encoder `{other}`"))),
        }
    }
}

impl fmt::Display for EncoderKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Self::Memn2nValueSum => "memn2n_value_sum",
            Self::Gru => "gru",
        })
    }
}

/// Graph node backing an entry, valid only inside the graph it came from.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct NodeRef {
    pub graph: u64,
    pub var: Var,
}

/// A fact after encoding, as stored in a memory slot.
#[derive(Debug, Clone, PartialEq)]
pub struct EncodedEntry {
    pub vector: Vec<f64>,
    pub source_timestep: usize,
    pub source_tokens: Vec<usize>,
    pub node: Option<NodeRef>,
}

impl EncodedEntry {
    /// An entry with no graph node behind it.
    pub fn detached(vector: Vec<f64>, source_timestep: usize, source_tokens: Vec<usize>) -> Self {
        Self {
            vector,
            source_timestep,
            source_tokens,
            node: None,
        }
    }

    /// The entry as a `1 x k` node of `g`: its own node when it was encoded
    /// in `g`, otherwise a constant copy.
    pub fn var(&self, g: &mut Graph) -> Result<Var> {
        match self.node {
            Some(n) if n.graph == g.id() => Ok(n.var),
            _ => g.constant(Array::row(self.vector.clone())),
        }
    }
}

#[derive(Debug, Clone)]
struct GruEncoder {
    embedding: ParamId,
    cell: GruCell,
}

#[derive(Debug, Clone)]
pub struct Encoder {
    kind: EncoderKind,
    embed_dim: usize,
    vocab_size: usize,
    gru: Option<GruEncoder>,
}

impl Encoder {
    pub fn new<R: Rng + ?Sized>(
        store: &mut ParameterStore,
        kind: EncoderKind,
        vocab_size: usize,
        embed_dim: usize,
        rng: &mut R,
    ) -> Result<Self> {
        let gru = match kind {
            EncoderKind::Memn2nValueSum => None,
            EncoderKind::Gru => {
                let mut table = Array::randn(&[vocab_size, embed_dim], INIT_STD, rng);
                table.data_mut()[PAD * embed_dim..(PAD + 1) * embed_dim].fill(0.0);
                Some(GruEncoder {
                    embedding: store.register("encoder.embed", table)?,
                    cell: GruCell::new(store, "encoder.gru", embed_dim, embed_dim, rng)?,
                })
            }
        };
        Ok(Self {
            kind,
            embed_dim,
            vocab_size,
            gru,
        })
    }

    pub fn kind(&self) -> EncoderKind {
        self.kind
    }

    pub fn embed_dim(&self) -> usize {
        self.embed_dim
    }

    /// Encodes a fact into a `1 x k` node of `g`.
    pub fn encode_var(
        &self,
        g: &mut Graph,
        store: &ParameterStore,
        solver: &MemN2N,
        item: &StreamItem,
    ) -> Result<Var> {
        if item.kind != ItemKind::Fact {
            return Err(EmrError::WrongItemKind {
                expected: "fact",
                got: item.kind.as_str(),
            });
        }
        if let Some(&token) = item.tokens.iter().find(|&&t| t >= self.vocab_size) {
            return Err(EmrError::TokenOutOfVocabulary {
                token,
                vocab: self.vocab_size,
            });
        }
        match &self.gru {
            None => {
                let table = solver.value_sum_table(g, store)?;
                solver.embed_with(g, table, &[&item.tokens])
            }
            Some(enc) => {
                let words: Vec<usize> = item.tokens.iter().copied().filter(|&t| t != PAD).collect();
                let h0 = enc.cell.zero_state(g)?;
                if words.is_empty() {
                    return Ok(h0);
                }
                let table = g.param(store, enc.embedding);
                let xs = g.gather_rows(table, &words)?;
                let states = enc.cell.run(g, store, xs, h0, false)?;
                Ok(*states.last().expect("non-empty"))
            }
        }
    }

    /// Encodes a fact; the entry keeps a handle to its node in `g`.
    pub fn encode(
        &self,
        g: &mut Graph,
        store: &ParameterStore,
        solver: &MemN2N,
        item: &StreamItem,
    ) -> Result<EncodedEntry> {
        let var = self.encode_var(g, store, solver, item)?;
        Ok(EncodedEntry {
            vector: g.value(var).data().to_vec(),
            source_timestep: item.timestep,
            source_tokens: item.tokens.clone(),
            node: Some(NodeRef { graph: g.id(), var }),
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::solver::SolverConfig;
    use crate::tasks::{Vocabulary, MAX_SENTENCE_LEN};
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn setup(kind: EncoderKind) -> (ParameterStore, MemN2N, Encoder, Vocabulary) {
        let vocab = Vocabulary::babi();
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let mut store = ParameterStore::new();
        let solver = MemN2N::new(&mut store, SolverConfig::new(vocab.len(), 20), &mut rng).unwrap();
        let enc = Encoder::new(&mut store, kind, vocab.len(), 20, &mut rng).unwrap();
        (store, solver, enc, vocab)
    }

    fn fact(vocab: &Vocabulary, text: &str, t: usize) -> StreamItem {
        StreamItem {
            kind: ItemKind::Fact,
            timestep: t,
            tokens: vocab.encode(text, MAX_SENTENCE_LEN),
            answer: None,
            supports: vec![],
            is_noise: false,
        }
    }

    #[test]
    fn padding_encodes_to_zero() {
        for kind in [EncoderKind::Memn2nValueSum, EncoderKind::Gru] {
            let (store, solver, enc, vocab) = setup(kind);
            let mut g = Graph::new();
            let e = enc.encode(&mut g, &store, &solver, &fact(&vocab, "", 1)).unwrap();
            assert_eq!(e.vector.len(), 20);
            assert!(e.vector.iter().all(|&v| v == 0.0));
        }
    }

    #[test]
    fn word_order_matters_and_encoding_is_deterministic() {
        for kind in [EncoderKind::Memn2nValueSum, EncoderKind::Gru] {
            let (store, solver, enc, vocab) = setup(kind);
            let mut g = Graph::new();
            let a = enc.encode(&mut g, &store, &solver, &fact(&vocab, "john moved to the kitchen", 1)).unwrap();
            let b = enc.encode(&mut g, &store, &solver, &fact(&vocab, "kitchen moved to the john", 2)).unwrap();
            let c = enc.encode(&mut g, &store, &solver, &fact(&vocab, "john moved to the kitchen", 3)).unwrap();
            assert_ne!(a.vector, b.vector);
            assert_eq!(a.vector, c.vector);
        }
    }

    #[test]
    fn questions_and_bad_tokens_are_rejected() {
        let (store, solver, enc, vocab) = setup(EncoderKind::Memn2nValueSum);
        let mut g = Graph::new();
        let mut q = fact(&vocab, "where is the milk", 9);
        q.kind = ItemKind::Question;
        assert!(enc.encode(&mut g, &store, &solver, &q).is_err());
        let mut bad = fact(&vocab, "john moved", 1);
        bad.tokens[0] = 999;
        assert!(matches!(
            enc.encode(&mut g, &store, &solver, &bad),
            Err(EmrError::TokenOutOfVocabulary { .. })
        ));
    }

    #[test]
    fn entry_var_falls_back_to_constant_outside_its_graph() {
        let (store, solver, enc, vocab) = setup(EncoderKind::Memn2nValueSum);
        let mut g = Graph::new();
        let e = enc.encode(&mut g, &store, &solver, &fact(&vocab, "mary got the milk", 1)).unwrap();
        assert_eq!(e.var(&mut g).unwrap(), e.node.unwrap().var);
        let mut other = Graph::new();
        let v = e.var(&mut other).unwrap();
        assert_eq!(other.value(v).data(), e.vector.as_slice());
    }
}
