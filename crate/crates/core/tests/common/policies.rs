use emr::autodiff::{Graph, ParameterStore};
use emr::encoder::EncodedEntry;
use emr::memory::MemoryState;
use emr::policy::{select_action, PolicyConfig, PolicyKind, Scheduler, SelectMode};
use emr::tasks::{Episode, ItemKind};
use emr::train::{rollout, Agent, RewardScheme, RolloutMode, TrainConfig};
use rand::Rng;

use super::{randomize, rng};

pub fn agent_for(kind: PolicyKind, seed: u64) -> (ParameterStore, Agent) {
    let mut cfg = TrainConfig::default();
    cfg.policy = kind;
    cfg.seed = seed;
    let mut store = ParameterStore::new();
    let agent = Agent::new(&mut store, &cfg).unwrap();
    (store, agent)
}

/// Source timesteps the rule should hold at every question, replayed on
/// plain integers. Uniform draws from the same generator as the rollout.
pub fn replay(kind: PolicyKind, episode: &Episode, capacity: usize, seed: u64) -> Vec<Vec<usize>> {
    let mut rng = rng(seed);
    let mut mem: Vec<usize> = Vec::new();
    let mut out = Vec::new();
    for item in &episode.items {
        if item.kind == ItemKind::Question {
            out.push(mem.clone());
            continue;
        }
        if mem.len() < capacity {
            mem.push(item.timestep);
            continue;
        }
        match kind {
            PolicyKind::Fifo => {
                mem.remove(0);
                mem.push(item.timestep);
            }
            PolicyKind::Lifo => {}
            PolicyKind::Uniform => {
                let u: f64 = rng.gen();
                let i = ((u * capacity as f64) as usize).min(capacity - 1);
                mem.remove(i);
                mem.push(item.timestep);
            }
            other => panic!("{other} is not a rule policy"),
        }
    }
    out
}

#[derive(Debug, Default)]
pub struct ReplayResult {
    pub questions: usize,
    pub mismatches: usize,
}

pub fn rule_replay(episodes: &[Episode], capacities: &[usize]) -> ReplayResult {
    let mut res = ReplayResult::default();
    for kind in [PolicyKind::Fifo, PolicyKind::Lifo, PolicyKind::Uniform] {
        let (store, agent) = agent_for(kind, 0);
        for (i, ep) in episodes.iter().enumerate() {
            for &n in capacities {
                let seed = 1000 + i as u64;
                let r = rollout(&agent, &store, ep, n, RolloutMode::Test, RewardScheme::Terminal, &mut rng(seed)).unwrap();
                let expected = replay(kind, ep, n, seed);
                for (o, exp) in r.trajectory.outcomes.iter().zip(&expected) {
                    res.questions += 1;
                    let oracle_solvable = o.supports.iter().all(|s| exp.contains(s));
                    if &o.retained != exp || o.solvable != oracle_solvable {
                        res.mismatches += 1;
                    }
                }
            }
        }
    }
    res
}

/// Eviction counts of the uniform rule at a full memory of `capacity`,
/// with the largest deviation from `1/N` in standard deviations.
pub fn uniform_frequencies(draws: usize, capacity: usize, seed: u64) -> (Vec<usize>, f64) {
    let (store, agent) = agent_for(PolicyKind::Uniform, 0);
    let mem = random_memory(capacity, 4, &mut rng(seed));
    let entry = EncodedEntry::detached(vec![0.0; 4], 99, vec![]);
    let mut g = Graph::new();
    let probs = agent.scheduler.evaluate(&mut g, &store, &mem, &entry).unwrap().probs;
    let mut rng = rng(seed + 1);
    let mut counts = vec![0usize; probs.len()];
    for _ in 0..draws {
        counts[select_action(&probs, SelectMode::Sample, &mut rng)] += 1;
    }
    let p = 1.0 / capacity as f64;
    let sigma = (draws as f64 * p * (1.0 - p)).sqrt();
    let worst = counts[..capacity]
        .iter()
        .map(|&c| (c as f64 - draws as f64 * p).abs() / sigma)
        .fold(0.0, f64::max);
    (counts, worst)
}

pub fn random_memory(n: usize, k: usize, rng: &mut impl Rng) -> MemoryState {
    let mut mem = MemoryState::new(n);
    for t in 0..n {
        let v: Vec<f64> = (0..k).map(|_| rng.gen_range(-1.0..1.0)).collect();
        mem.push(EncodedEntry::detached(v, t + 1, vec![]));
    }
    mem.set_usage(&(0..n).map(|_| rng.gen::<f64>()).collect::<Vec<_>>());
    mem
}

#[derive(Debug)]
pub struct DistributionResult {
    pub kind: PolicyKind,
    pub states: usize,
    pub worst_sum_error: f64,
    pub arity_errors: usize,
    pub negative: usize,
}

impl DistributionResult {
    pub fn ok(&self) -> bool {
        self.worst_sum_error <= 1e-6 && self.arity_errors == 0 && self.negative == 0
    }
}

/// Random parameters and random full memories for one policy family.
pub fn distribution_validity(kind: PolicyKind, states: usize, seed: u64) -> DistributionResult {
    let mut rng = rng(seed);
    let k = 8;
    let mut store = ParameterStore::new();
    let mut pc = PolicyConfig::new(kind, k);
    pc.heads = 2;
    let sched = Scheduler::new(&mut store, pc, false, &mut rng).unwrap();
    randomize(&mut store, 1.0, &mut rng);
    let mut res = DistributionResult {
        kind,
        states,
        worst_sum_error: 0.0,
        arity_errors: 0,
        negative: 0,
    };
    for _ in 0..states {
        let n = rng.gen_range(1..=12);
        let mem = random_memory(n, k, &mut rng);
        let scale = rng.gen_range(0.1..5.0);
        let e: Vec<f64> = (0..k).map(|_| scale * rng.gen_range(-1.0..1.0)).collect();
        let entry = EncodedEntry::detached(e, n + 1, vec![]);
        let mut g = Graph::new();
        let probs = sched.evaluate(&mut g, &store, &mem, &entry).unwrap().probs;
        let expected = if kind == PolicyKind::EmrIndependent { n } else { n + 1 };
        if probs.len() != expected || kind.arity(n) != expected {
            res.arity_errors += 1;
        }
        res.worst_sum_error = res.worst_sum_error.max((probs.iter().sum::<f64>() - 1.0).abs());
        res.negative += probs.iter().filter(|&&p| p < 0.0 || !p.is_finite()).count();
    }
    res
}

/// Ties in argmax mode must resolve to the lowest index, both for raw
/// probability vectors and for policies evaluated on symmetric states.
pub fn tie_breaking_holds() -> bool {
    let mut rng = rng(77);
    let raw = [
        (vec![0.25, 0.25, 0.25, 0.25], 0),
        (vec![0.1, 0.45, 0.45], 1),
        (vec![0.0, 0.0, 0.5, 0.0, 0.5], 2),
    ];
    if !raw.iter().all(|(p, want)| select_action(p, SelectMode::Argmax, &mut rng) == *want) {
        return false;
    }
    for kind in [PolicyKind::EmrIndependent, PolicyKind::EmrBiGru, PolicyKind::EmrTransformer] {
        let k = 4;
        let mut store = ParameterStore::new();
        let mut pc = PolicyConfig::new(kind, k);
        pc.heads = 1;
        pc.position_encoding = false;
        let sched = Scheduler::new(&mut store, pc, false, &mut rng).unwrap();
        if kind == PolicyKind::EmrBiGru {
            // a zero network scores every position the same
            randomize(&mut store, 0.0, &mut rng);
        }
        let v = vec![0.3, -0.2, 0.5, 0.1];
        let mut mem = MemoryState::new(3);
        for t in 1..=3 {
            mem.push(EncodedEntry::detached(v.clone(), t, vec![]));
        }
        let entry = EncodedEntry::detached(v.clone(), 4, vec![]);
        let mut g = Graph::new();
        let probs = sched.evaluate(&mut g, &store, &mem, &entry).unwrap().probs;
        let spread = probs.iter().cloned().fold(f64::MIN, f64::max) - probs.iter().cloned().fold(f64::MAX, f64::min);
        if spread > 1e-12 || select_action(&probs, SelectMode::Argmax, &mut rng) != 0 {
            return false;
        }
    }
    true
}
