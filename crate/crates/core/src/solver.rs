//! End-to-end memory network that answers a question from whatever
//! sentences survive in memory.
//!
//! Three hops with adjacent weight tying: hop `h` reads its input memory
//! with table `A_h` and its output memory with `A_{h+1}`; the question is
//! embedded with `A_1` and the answer projection is `A_{hops+1}`
//! transposed. Sentences are position-encoded bags of words.

use rand::Rng;

use crate::autodiff::{Array, Graph, ParamId, ParameterStore, Var};
use crate::error::{EmrError, Result};
use crate::memory::MemoryState;
use crate::nn::INIT_STD;
use crate::tasks::{ItemKind, StreamItem, PAD};

#[derive(Debug, Clone, PartialEq)]
pub struct SolverConfig {
    pub vocab_size: usize,
    pub embed_dim: usize,
    pub hops: usize,
    /// Adds a learned embedding of each entry's age (question time minus
    /// source time) to the memories.
    pub temporal: bool,
    /// Ages at or beyond this share the last temporal row.
    pub max_age: usize,
    /// Drops the attention softmax (the "linear start" warm-up phase).
    pub linear_attention: bool,
}

impl SolverConfig {
    pub fn new(vocab_size: usize, embed_dim: usize) -> Self {
        Self {
            vocab_size,
            embed_dim,
            hops: 3,
            temporal: true,
            max_age: 64,
            linear_attention: false,
        }
    }
}

#[derive(Debug, Clone)]
pub struct Answer {
    pub logits: Vec<f64>,
    pub predicted: usize,
    /// Attention over memory entries, one row per hop.
    pub attention: Vec<Vec<f64>>,
}

/// Graph-side result of a forward pass.
#[derive(Debug, Clone)]
pub struct SolverForward {
    pub logits: Var,
    pub attention: Vec<Var>,
}

/// One sentence held in memory, as the solver sees it.
#[derive(Debug, Clone, Copy)]
pub struct MemorySentence<'a> {
    pub tokens: &'a [usize],
    pub timestep: usize,
}

#[derive(Debug, Clone)]
pub struct MemN2N {
    config: SolverConfig,
    tables: Vec<ParamId>,
    temporal: Vec<ParamId>,
}

/// Position-encoding weights for one padded sentence: row `j` holds
/// `(1 - j/J) - (s/d)(1 - 2j/J)` for word `j` of `J` real words and
/// dimension `s` of `d` (both 1-based); padding rows are zero.
pub fn position_weights(tokens: &[usize], dim: usize) -> Array {
    let words = tokens.iter().filter(|&&t| t != PAD).count();
    let mut data = vec![0.0; tokens.len() * dim];
    if words > 0 {
        let jj = words as f64;
        let d = dim as f64;
        let mut j = 0usize;
        for (row, &t) in tokens.iter().enumerate() {
            if t == PAD {
                continue;
            }
            j += 1;
            let jf = j as f64;
            for s in 1..=dim {
                let sf = s as f64;
                data[row * dim + s - 1] = (1.0 - jf / jj) - (sf / d) * (1.0 - 2.0 * jf / jj);
            }
        }
    }
    Array::matrix(tokens.len(), dim, data)
}

impl MemN2N {
    pub fn new<R: Rng + ?Sized>(
        store: &mut ParameterStore,
        config: SolverConfig,
        rng: &mut R,
    ) -> Result<Self> {
        let (v, k) = (config.vocab_size, config.embed_dim);
        let mut tables = Vec::with_capacity(config.hops + 1);
        let mut temporal = Vec::new();
        for h in 0..=config.hops {
            let mut table = Array::randn(&[v, k], INIT_STD, rng);
            // the padding row stays zero: padded positions never contribute
            table.data_mut()[PAD * k..(PAD + 1) * k].fill(0.0);
            tables.push(store.register(format!("solver.embed.{h}"), table)?);
            if config.temporal {
                temporal.push(store.register(
                    format!("solver.temporal.{h}"),
                    Array::randn(&[config.max_age, k], INIT_STD, rng),
                )?);
            }
        }
        Ok(Self {
            config,
            tables,
            temporal,
        })
    }

    pub fn config(&self) -> &SolverConfig {
        &self.config
    }

    /// Same parameters, with or without the attention softmax.
    pub fn with_linear_attention(&self, linear: bool) -> Self {
        let mut copy = self.clone();
        copy.config.linear_attention = linear;
        copy
    }

    pub fn tables(&self) -> &[ParamId] {
        &self.tables
    }

    fn check_tokens(&self, tokens: &[usize]) -> Result<()> {
        match tokens.iter().find(|&&t| t >= self.config.vocab_size) {
            Some(&token) => Err(EmrError::TokenOutOfVocabulary {
                token,
                vocab: self.config.vocab_size,
            }),
            None => Ok(()),
        }
    }

    /// Position-encoded bag-of-words rows (`n x k`) from an embedding node.
    pub fn embed_with(&self, g: &mut Graph, table: Var, sentences: &[&[usize]]) -> Result<Var> {
        let width = sentences[0].len();
        let k = self.config.embed_dim;
        let mut ids = Vec::with_capacity(sentences.len() * width);
        let mut weights = Vec::with_capacity(sentences.len() * width * k);
        for s in sentences {
            self.check_tokens(s)?;
            if s.len() != width {
                return Err(EmrError::ShapeMismatch {
                    op: "embed",
                    lhs: vec![width],
                    rhs: vec![s.len()],
                });
            }
            ids.extend_from_slice(s);
            weights.extend_from_slice(position_weights(s, k).data());
        }
        let rows = g.gather_rows(table, &ids)?;
        let weighted = g.mul_const(rows, Array::matrix(ids.len(), k, weights))?;
        g.sum_groups(weighted, width)
    }

    /// Sum of the output-memory tables of every hop, as one node.
    pub fn value_sum_table(&self, g: &mut Graph, store: &ParameterStore) -> Result<Var> {
        let mut acc = g.param(store, self.tables[1]);
        for &t in &self.tables[2..] {
            let next = g.param(store, t);
            acc = g.add(acc, next)?;
        }
        Ok(acc)
    }

    fn temporal_rows(
        &self,
        g: &mut Graph,
        store: &ParameterStore,
        hop_table: usize,
        ages: &[usize],
    ) -> Result<Var> {
        let t = g.param(store, self.temporal[hop_table]);
        g.gather_rows(t, ages)
    }

    /// Full forward pass over the given memory sentences.
    pub fn forward(
        &self,
        g: &mut Graph,
        store: &ParameterStore,
        memory: &[MemorySentence<'_>],
        question: &[usize],
        question_timestep: usize,
    ) -> Result<SolverForward> {
        if memory.is_empty() {
            return Err(EmrError::EmptyMemory);
        }
        let sentences: Vec<&[usize]> = memory.iter().map(|m| m.tokens).collect();
        let ages: Vec<usize> = memory
            .iter()
            .map(|m| {
                question_timestep
                    .saturating_sub(m.timestep)
                    .min(self.config.max_age - 1)
            })
            .collect();

        let mut embedded = Vec::with_capacity(self.tables.len());
        for (h, &table) in self.tables.iter().enumerate() {
            let tv = g.param(store, table);
            let mut rows = self.embed_with(g, tv, &sentences)?;
            if self.config.temporal {
                let t = self.temporal_rows(g, store, h, &ages)?;
                rows = g.add(rows, t)?;
            }
            embedded.push(rows);
        }

        let a1 = g.param(store, self.tables[0]);
        let mut u = self.embed_with(g, a1, &[question])?;
        let mut attention = Vec::with_capacity(self.config.hops);
        for hop in 0..self.config.hops {
            let keys = g.transpose(embedded[hop])?;
            let scores = g.matmul(u, keys)?;
            let p = if self.config.linear_attention {
                scores
            } else {
                g.softmax(scores)?
            };
            let o = g.matmul(p, embedded[hop + 1])?;
            u = g.add(u, o)?;
            attention.push(p);
        }
        let out = g.param(store, self.tables[self.config.hops]);
        let proj = g.transpose(out)?;
        let logits = g.matmul(u, proj)?;
        Ok(SolverForward { logits, attention })
    }

    /// Answers a question from the current memory contents.
    pub fn solve(
        &self,
        store: &ParameterStore,
        memory: &MemoryState,
        question: &StreamItem,
    ) -> Result<Answer> {
        let mut g = Graph::new();
        self.solve_in(&mut g, store, memory, question)
            .map(|(answer, _)| answer)
    }

    /// Same as [`MemN2N::solve`] but inside a caller-owned graph, so a loss
    /// can be attached to the returned logits node.
    pub fn solve_in(
        &self,
        g: &mut Graph,
        store: &ParameterStore,
        memory: &MemoryState,
        question: &StreamItem,
    ) -> Result<(Answer, SolverForward)> {
        if question.kind != ItemKind::Question {
            return Err(EmrError::WrongItemKind {
                expected: "question",
                got: question.kind.as_str(),
            });
        }
        let sentences: Vec<MemorySentence<'_>> = memory
            .slots()
            .iter()
            .map(|s| MemorySentence {
                tokens: &s.entry.source_tokens,
                timestep: s.entry.source_timestep,
            })
            .collect();
        let fwd = self.forward(g, store, &sentences, &question.tokens, question.timestep)?;
        Ok((answer_from(g, &fwd), fwd))
    }
}

pub fn answer_from(g: &Graph, fwd: &SolverForward) -> Answer {
    let logits = g.value(fwd.logits).data().to_vec();
    Answer {
        predicted: argmax(&logits),
        logits,
        attention: fwd
            .attention
            .iter()
            .map(|&a| g.value(a).data().to_vec())
            .collect(),
    }
}

/// First index of the maximum.
pub fn argmax(xs: &[f64]) -> usize {
    let mut best = 0;
    for (i, &v) in xs.iter().enumerate() {
        if v > xs[best] {
            best = i;
        }
    }
    best
}

/// Cross-entropy `-log softmax(logits)[gold]` as a scalar node.
pub fn solver_loss(g: &mut Graph, logits: Var, gold: usize) -> Result<Var> {
    let lp = g.log_softmax(logits)?;
    let picked = g.pick(lp, 0, gold)?;
    g.scale(picked, -1.0)
}

/// Accuracy reward: 1 for a correct answer, 0 otherwise.
pub fn reward(answer: &Answer, gold: usize) -> f64 {
    if answer.predicted == gold {
        1.0
    } else {
        0.0
    }
}
