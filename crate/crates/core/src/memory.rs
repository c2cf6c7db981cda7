//! Fixed-capacity external memory.

use crate::autodiff::{Array, Graph, Var};
use crate::encoder::{EncodedEntry, NodeRef};
use crate::error::Result;

#[derive(Debug, Clone, PartialEq)]
pub struct Slot {
    pub entry: EncodedEntry,
    /// Exponential moving average of the attention this slot received
    /// from incoming entries. Only the independent policy updates it.
    pub usage: f64,
    /// Node that produced `usage`, so later decisions can differentiate
    /// through it.
    pub usage_node: Option<NodeRef>,
}

impl Slot {
    fn fresh(entry: EncodedEntry) -> Self {
        Self {
            entry,
            usage: 0.0,
            usage_node: None,
        }
    }
}

/// What happens to make room for an incoming entry.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Eviction {
    /// Remove the slot at this index, then append the incoming entry.
    Slot(usize),
    /// Keep the memory as is and drop the incoming entry.
    Incoming,
}

impl Eviction {
    /// Maps a policy action index: `0..N` are slots, `N` is the incoming entry.
    pub fn from_action(index: usize, capacity: usize) -> Self {
        if index >= capacity {
            Eviction::Incoming
        } else {
            Eviction::Slot(index)
        }
    }
}

/// Ordered slots, oldest first, never more than `capacity`.
#[derive(Debug, Clone, PartialEq)]
pub struct MemoryState {
    capacity: usize,
    slots: Vec<Slot>,
}

impl MemoryState {
    pub fn new(capacity: usize) -> Self {
        assert!(capacity > 0, "memory needs at least one slot");
        Self {
            capacity,
            slots: Vec::with_capacity(capacity),
        }
    }

    pub fn capacity(&self) -> usize {
        self.capacity
    }

    pub fn len(&self) -> usize {
        self.slots.len()
    }

    pub fn is_empty(&self) -> bool {
        self.slots.is_empty()
    }

    pub fn is_full(&self) -> bool {
        self.slots.len() >= self.capacity
    }

    pub fn slots(&self) -> &[Slot] {
        &self.slots
    }

    pub fn usage(&self) -> Vec<f64> {
        self.slots.iter().map(|s| s.usage).collect()
    }

    pub fn source_timesteps(&self) -> Vec<usize> {
        self.slots.iter().map(|s| s.entry.source_timestep).collect()
    }

    pub fn contains_source(&self, timestep: usize) -> bool {
        self.slots.iter().any(|s| s.entry.source_timestep == timestep)
    }

    /// Appends below capacity. New slots start with zero usage.
    ///
    /// Panics when the memory is already full.
    pub fn push(&mut self, entry: EncodedEntry) {
        assert!(!self.is_full(), "push on a full memory");
        self.slots.push(Slot::fresh(entry));
    }

    /// Replaces the usage values of all slots.
    pub fn set_usage(&mut self, usage: &[f64]) {
        assert_eq!(usage.len(), self.slots.len());
        for (s, &u) in self.slots.iter_mut().zip(usage) {
            s.usage = u;
            s.usage_node = None;
        }
    }

    /// Like [`set_usage`](Self::set_usage), remembering the `1 x 1` node of
    /// `graph` behind each value.
    pub fn set_usage_nodes(&mut self, usage: &[f64], graph: u64, nodes: &[Var]) {
        assert_eq!(nodes.len(), self.slots.len());
        self.set_usage(usage);
        for (s, &var) in self.slots.iter_mut().zip(nodes) {
            s.usage_node = Some(NodeRef { graph, var });
        }
    }

    /// Usage as a `1 x n` node, reusing tracked nodes that belong to `g`.
    pub fn usage_var(&self, g: &mut Graph) -> Result<Var> {
        let parts = self
            .slots
            .iter()
            .map(|s| match s.usage_node {
                Some(n) if n.graph == g.id() => Ok(n.var),
                _ => g.constant(Array::scalar(s.usage)),
            })
            .collect::<Result<Vec<_>>>()?;
        g.concat_cols(&parts)
    }

    /// Applies an eviction on a full memory: the chosen slot is removed, the
    /// rest keep their order and the incoming entry goes to the tail.
    pub fn evict_and_append(&mut self, eviction: Eviction, entry: EncodedEntry) {
        match eviction {
            Eviction::Slot(i) => {
                self.slots.remove(i);
                self.slots.push(Slot::fresh(entry));
            }
            Eviction::Incoming => {}
        }
    }

    /// Slot vectors as an `n x k` node, reusing the entries' own nodes
    /// when they belong to `g`.
    pub fn matrix(&self, g: &mut Graph) -> Result<Var> {
        let rows = self
            .slots
            .iter()
            .map(|s| s.entry.var(g))
            .collect::<Result<Vec<_>>>()?;
        g.concat_rows(&rows)
    }
}
