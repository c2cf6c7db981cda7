use std::path::Path;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::autodiff::{load_parameters, save_parameters, ParameterStore};
use crate::encoder::Encoder;
use crate::error::Result;
use crate::policy::{PolicyConfig, Scheduler};
use crate::solver::{MemN2N, SolverConfig};
use crate::tasks::Vocabulary;

use super::config::{Algorithm, TrainConfig};

pub const CONFIG_FILE: &str = "config.txt";

/// Solver, encoder and scheduler built from one config.
#[derive(Debug, Clone)]
pub struct Agent {
    pub solver: MemN2N,
    pub encoder: Encoder,
    pub scheduler: Scheduler,
}

impl Agent {
    /// Registers every parameter in a fixed order, seeded from `config.seed`.
    pub fn new(store: &mut ParameterStore, config: &TrainConfig) -> Result<Self> {
        config.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
        let vocab = Vocabulary::babi().len();
        let mut sc = SolverConfig::new(vocab, config.embed_dim);
        sc.hops = config.hops;
        sc.temporal = config.temporal;
        let solver = MemN2N::new(store, sc, &mut rng)?;
        let encoder = Encoder::new(store, config.encoder, vocab, config.embed_dim, &mut rng)?;
        let pc = PolicyConfig {
            kind: config.policy,
            embed_dim: config.embed_dim,
            hidden_dim: config.hidden_dim,
            heads: config.heads,
            position_encoding: config.position_encoding,
        };
        let with_value = config.algorithm == Algorithm::A2c;
        let scheduler = Scheduler::new(store, pc, with_value, &mut rng)?;
        Ok(Self {
            solver,
            encoder,
            scheduler,
        })
    }
}

/// Writes parameters plus the config that rebuilds them.
pub fn save_checkpoint(dir: &Path, config: &TrainConfig, store: &ParameterStore) -> Result<()> {
    save_parameters(store, dir)?;
    config.save(&dir.join(CONFIG_FILE))
}

pub fn load_checkpoint(dir: &Path) -> Result<(TrainConfig, ParameterStore, Agent)> {
    let config = TrainConfig::load(&dir.join(CONFIG_FILE))?;
    let mut store = ParameterStore::new();
    let agent = Agent::new(&mut store, &config)?;
    load_parameters(&mut store, dir)?;
    Ok((config, store, agent))
}
