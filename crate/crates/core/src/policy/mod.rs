//! Eviction policies over a full memory.
//!
//! Rule baselines (FIFO, LIFO, Uniform) need no parameters. The learned
//! schedulers score the state `[m_1 .. m_N, e]` and return a distribution
//! over which index to drop: EMR-Independent over the `N` stored slots,
//! EMR-biGRU and EMR-Transformer over `N + 1` (the last index is the
//! incoming entry itself).

mod bigru;
mod independent;
mod transformer;
mod value;

use std::fmt;
use std::str::FromStr;

use rand::Rng;

pub use bigru::BiGruPolicy;
pub use independent::{IndependentForward, IndependentPolicy};
pub use transformer::{sinusoid_table, TransformerForward, TransformerPolicy};
pub use value::ValueNet;

use crate::autodiff::{Graph, ParameterStore, Var};
use crate::encoder::EncodedEntry;
use crate::error::{EmrError, Result};
use crate::memory::{Eviction, MemoryState};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum PolicyKind {
    Fifo,
    Lifo,
    Uniform,
    EmrIndependent,
    EmrBiGru,
    EmrTransformer,
}

impl PolicyKind {
    pub const ALL: [PolicyKind; 6] = [
        PolicyKind::Fifo,
        PolicyKind::Lifo,
        PolicyKind::Uniform,
        PolicyKind::EmrIndependent,
        PolicyKind::EmrBiGru,
        PolicyKind::EmrTransformer,
    ];

    pub fn is_learned(self) -> bool {
        matches!(
            self,
            PolicyKind::EmrIndependent | PolicyKind::EmrBiGru | PolicyKind::EmrTransformer
        )
    }

    /// Size of the action space for a memory of `capacity` slots.
    pub fn arity(self, capacity: usize) -> usize {
        match self {
            PolicyKind::EmrIndependent => capacity,
            _ => capacity + 1,
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            PolicyKind::Fifo => "fifo",
            PolicyKind::Lifo => "lifo",
            PolicyKind::Uniform => "uniform",
            PolicyKind::EmrIndependent => "emr_independent",
            PolicyKind::EmrBiGru => "emr_bigru",
            PolicyKind::EmrTransformer => "emr_transformer",
        }
    }
}

impl FromStr for PolicyKind {
    type Err = EmrError;
    fn from_str(s: &str) -> Result<Self> {
        PolicyKind::ALL
            .into_iter()
            .find(|k| k.as_str() == s)
            .ok_or_else(|| EmrError::Config(format!("unknown policy `{s}`")))
    }
}

impl fmt::Display for PolicyKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PolicyConfig {
    pub kind: PolicyKind,
    pub embed_dim: usize,
    /// Per-direction GRU width of EMR-biGRU.
    pub hidden_dim: usize,
    pub heads: usize,
    /// Sinusoidal slot-position encoding for EMR-Transformer.
    pub position_encoding: bool,
}

impl PolicyConfig {
    pub fn new(kind: PolicyKind, embed_dim: usize) -> Self {
        Self {
            kind,
            embed_dim,
            hidden_dim: embed_dim,
            heads: 4,
            position_encoding: true,
        }
    }
}

/// Distribution over eviction indices for one state.
#[derive(Debug, Clone)]
pub struct PolicyOutput {
    pub probs: Vec<f64>,
    /// Unnormalised scores (`1 x A`) for learned policies.
    pub logits: Option<Var>,
    /// Per-entry hidden states (`(N+1) x d`) for the value network.
    pub hidden: Option<Var>,
    /// Usage EMA after this step (EMR-Independent only).
    pub usage: Option<Vec<f64>>,
    pub usage_node: Option<Var>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SelectMode {
    /// Multinomial draw, used while training.
    Sample,
    /// Highest probability, lowest index on ties.
    Argmax,
}

#[derive(Debug, Clone)]
enum Net {
    Rule,
    Independent(IndependentPolicy),
    BiGru(BiGruPolicy),
    Transformer(TransformerPolicy),
}

/// A policy plus, for actor-critic training, its value network.
#[derive(Debug, Clone)]
pub struct Scheduler {
    config: PolicyConfig,
    net: Net,
    value: Option<ValueNet>,
}

impl Scheduler {
    pub fn new<R: Rng + ?Sized>(
        store: &mut ParameterStore,
        config: PolicyConfig,
        with_value: bool,
        rng: &mut R,
    ) -> Result<Self> {
        let k = config.embed_dim;
        let (net, hidden_dim) = match config.kind {
            PolicyKind::Fifo | PolicyKind::Lifo | PolicyKind::Uniform => (Net::Rule, 0),
            PolicyKind::EmrIndependent => (
                Net::Independent(IndependentPolicy::new(store, "policy", k, rng)?),
                k,
            ),
            PolicyKind::EmrBiGru => (
                Net::BiGru(BiGruPolicy::new(store, "policy", k, config.hidden_dim, rng)?),
                2 * config.hidden_dim,
            ),
            PolicyKind::EmrTransformer => (
                Net::Transformer(TransformerPolicy::new(
                    store,
                    "policy",
                    k,
                    config.heads,
                    config.position_encoding,
                    rng,
                )?),
                k,
            ),
        };
        let value = if with_value && config.kind.is_learned() {
            Some(ValueNet::new(store, "value", hidden_dim, k, rng)?)
        } else {
            None
        };
        Ok(Self { config, net, value })
    }

    pub fn kind(&self) -> PolicyKind {
        self.config.kind
    }

    pub fn config(&self) -> &PolicyConfig {
        &self.config
    }

    pub fn value_net(&self) -> Option<&ValueNet> {
        self.value.as_ref()
    }

    pub fn independent(&self) -> Option<&IndependentPolicy> {
        match &self.net {
            Net::Independent(p) => Some(p),
            _ => None,
        }
    }

    pub fn bigru(&self) -> Option<&BiGruPolicy> {
        match &self.net {
            Net::BiGru(p) => Some(p),
            _ => None,
        }
    }

    pub fn transformer(&self) -> Option<&TransformerPolicy> {
        match &self.net {
            Net::Transformer(p) => Some(p),
            _ => None,
        }
    }

    /// Scores a full memory against an incoming entry.
    pub fn evaluate(
        &self,
        g: &mut Graph,
        store: &ParameterStore,
        mem: &MemoryState,
        entry: &EncodedEntry,
    ) -> Result<PolicyOutput> {
        let n = mem.len();
        let arity = self.kind().arity(n);
        match &self.net {
            Net::Rule => {
                let mut probs = vec![0.0; arity];
                match self.kind() {
                    PolicyKind::Fifo => probs[0] = 1.0,
                    PolicyKind::Lifo => probs[n] = 1.0,
                    _ => probs[..n].fill(1.0 / n as f64),
                }
                Ok(PolicyOutput {
                    probs,
                    logits: None,
                    hidden: None,
                    usage: None,
                    usage_node: None,
                })
            }
            Net::Independent(p) => {
                let memory = mem.matrix(g)?;
                let e = entry.var(g)?;
                let prev = mem.usage_var(g)?;
                let out = p.forward(g, store, memory, e, prev)?;
                let hidden = g.concat_rows(&[memory, e])?;
                let mut po = learned_output(g, out.logits, hidden);
                po.usage = Some(out.usage);
                po.usage_node = Some(out.usage_node);
                Ok(po)
            }
            Net::BiGru(p) => {
                let tokens = state_tokens(g, mem, entry)?;
                let (logits, hidden) = p.forward(g, store, tokens)?;
                Ok(learned_output(g, logits, hidden))
            }
            Net::Transformer(p) => {
                let tokens = state_tokens(g, mem, entry)?;
                let out = p.forward(g, store, tokens)?;
                Ok(learned_output(g, out.logits, out.hidden))
            }
        }
    }
}

/// `[m_1 .. m_N, e]` as an `(N+1) x k` node.
pub fn state_tokens(g: &mut Graph, mem: &MemoryState, entry: &EncodedEntry) -> Result<Var> {
    let memory = mem.matrix(g)?;
    let e = entry.var(g)?;
    g.concat_rows(&[memory, e])
}

fn learned_output(g: &Graph, logits: Var, hidden: Var) -> PolicyOutput {
    PolicyOutput {
        probs: crate::autodiff::softmax_slice(g.value(logits).data()),
        logits: Some(logits),
        hidden: Some(hidden),
        usage: None,
        usage_node: None,
    }
}

/// Picks an action index from a distribution.
pub fn select_action<R: Rng + ?Sized>(probs: &[f64], mode: SelectMode, rng: &mut R) -> usize {
    match mode {
        SelectMode::Argmax => crate::solver::argmax(probs),
        SelectMode::Sample => {
            let u: f64 = rng.gen();
            let mut acc = 0.0;
            let mut last = 0;
            for (i, &p) in probs.iter().enumerate() {
                if p <= 0.0 {
                    continue;
                }
                acc += p;
                last = i;
                if u < acc {
                    return i;
                }
            }
            last
        }
    }
}

/// One eviction decision.
#[derive(Debug, Clone)]
pub struct ActionRecord {
    pub index: usize,
    pub eviction: Eviction,
    pub probs: Vec<f64>,
    /// Source timestep of whatever left the memory (slot or incoming entry).
    pub dropped_timestep: usize,
    pub log_prob: Option<Var>,
    pub entropy: Option<Var>,
    pub hidden: Option<Var>,
}

/// Admits `entry` into `mem`. Below capacity it is simply appended and no
/// decision is recorded; at capacity the policy picks what to drop.
pub fn append_or_evict<R: Rng + ?Sized>(
    g: &mut Graph,
    store: &ParameterStore,
    scheduler: &Scheduler,
    mem: &mut MemoryState,
    entry: EncodedEntry,
    mode: SelectMode,
    rng: &mut R,
) -> Result<Option<ActionRecord>> {
    if !mem.is_full() {
        mem.push(entry);
        return Ok(None);
    }
    let out = scheduler.evaluate(g, store, mem, &entry)?;
    // uniform eviction is random at test time too
    let mode = if scheduler.kind() == PolicyKind::Uniform {
        SelectMode::Sample
    } else {
        mode
    };
    let index = select_action(&out.probs, mode, rng);
    let (log_prob, entropy) = match out.logits {
        Some(logits) => {
            let lp = g.log_softmax(logits)?;
            let p = g.softmax(logits)?;
            let plogp = g.mul(p, lp)?;
            let s = g.sum(plogp)?;
            (Some(g.pick(lp, 0, index)?), Some(g.scale(s, -1.0)?))
        }
        None => (None, None),
    };
    match (&out.usage, out.usage_node) {
        (Some(usage), Some(node)) => {
            let nodes = (0..usage.len())
                .map(|i| g.slice_cols(node, i, 1))
                .collect::<Result<Vec<_>>>()?;
            mem.set_usage_nodes(usage, g.id(), &nodes);
        }
        (Some(usage), None) => mem.set_usage(usage),
        _ => {}
    }
    let eviction = Eviction::from_action(index, mem.capacity());
    let dropped_timestep = match eviction {
        Eviction::Slot(i) => mem.slots()[i].entry.source_timestep,
        Eviction::Incoming => entry.source_timestep,
    };
    mem.evict_and_append(eviction, entry);
    Ok(Some(ActionRecord {
        index,
        eviction,
        probs: out.probs,
        dropped_timestep,
        log_prob,
        entropy,
        hidden: out.hidden,
    }))
}
