use rand::Rng;

use crate::autodiff::{Graph, ParameterStore, Var};
use crate::error::Result;
use crate::memory::MemoryState;
use crate::policy::{append_or_evict, SelectMode};
use crate::solver::{reward, solver_loss};
use crate::tasks::{Episode, ItemKind, StreamItem};

use super::agent::Agent;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RolloutMode {
    /// Sampled actions, rewards collected, solver loss attached.
    Train,
    /// Argmax actions, no rewards.
    Test,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RewardScheme {
    /// Each decision is paid the accuracy on the next question.
    Terminal,
    /// Change in next-question accuracy caused by the decision itself.
    Difference,
}

/// Graph handles for one decision.
#[derive(Debug, Clone, Copy)]
pub struct StepNodes {
    pub log_prob: Var,
    pub entropy: Var,
    pub value: Option<Var>,
}

#[derive(Debug, Clone)]
pub struct StepRecord {
    /// Timestep of the fact whose arrival forced the decision.
    pub timestep: usize,
    pub action: usize,
    pub log_prob: f64,
    pub entropy: f64,
    pub reward: f64,
    pub value: Option<f64>,
    pub done: bool,
    /// Next-question correctness before and after the action
    /// (difference scheme only).
    pub accuracy: Option<(f64, f64)>,
    pub nodes: Option<StepNodes>,
}

/// What happened at one question.
#[derive(Debug, Clone)]
pub struct QuestionOutcome {
    pub timestep: usize,
    pub answer: usize,
    pub predicted: usize,
    pub correct: bool,
    pub solvable: bool,
    pub supports: Vec<usize>,
    /// Source timesteps of the slots at question time.
    pub retained: Vec<usize>,
    /// Noise facts that had arrived, and of those, how many were dropped.
    pub noise_seen: usize,
    pub noise_evicted: usize,
}

#[derive(Debug, Clone, Default)]
pub struct Trajectory {
    pub steps: Vec<StepRecord>,
    pub outcomes: Vec<QuestionOutcome>,
}

impl Trajectory {
    pub fn accuracy(&self) -> f64 {
        fraction(self.outcomes.iter().map(|o| o.correct))
    }

    pub fn solvable(&self) -> f64 {
        fraction(self.outcomes.iter().map(|o| o.solvable))
    }
}

fn fraction(flags: impl Iterator<Item = bool>) -> f64 {
    let (mut hit, mut n) = (0usize, 0usize);
    for f in flags {
        hit += f as usize;
        n += 1;
    }
    if n == 0 {
        0.0
    } else {
        hit as f64 / n as f64
    }
}

/// A finished episode together with the graph that produced it.
#[derive(Debug)]
pub struct Rollout {
    pub graph: Graph,
    pub trajectory: Trajectory,
    /// Cross-entropy nodes, one per question (train mode only).
    pub solver_losses: Vec<Var>,
}

/// True iff every supporting fact of `question` is still in memory.
pub fn solvable(mem: &MemoryState, question: &StreamItem) -> bool {
    question.supports.iter().all(|&t| mem.contains_source(t))
}

fn next_question(episode: &Episode, after: usize) -> Option<&StreamItem> {
    episode.items[after..]
        .iter()
        .find(|it| it.kind == ItemKind::Question)
}

fn correctness(
    agent: &Agent,
    store: &ParameterStore,
    mem: &MemoryState,
    question: &StreamItem,
) -> Result<f64> {
    let answer = agent.solver.solve(store, mem, question)?;
    Ok(reward(&answer, question.answer.expect("questions carry answers")))
}

/// Streams `episode` through a memory of `capacity` slots.
pub fn rollout<R: Rng + ?Sized>(
    agent: &Agent,
    store: &ParameterStore,
    episode: &Episode,
    capacity: usize,
    mode: RolloutMode,
    scheme: RewardScheme,
    rng: &mut R,
) -> Result<Rollout> {
    let mut g = Graph::new();
    let mut mem = MemoryState::new(capacity);
    let mut traj = Trajectory::default();
    let mut solver_losses = Vec::new();
    let select = match mode {
        RolloutMode::Train => SelectMode::Sample,
        RolloutMode::Test => SelectMode::Argmax,
    };
    let value_net = match mode {
        RolloutMode::Train => agent.scheduler.value_net(),
        RolloutMode::Test => None,
    };
    let mut value_state = match value_net {
        Some(v) => Some(v.initial_state(&mut g)?),
        None => None,
    };
    let mut noise_seen = 0usize;
    let mut noise_evicted = 0usize;
    // cached next-question correctness of the current memory
    let mut current_acc: Option<(usize, f64)> = None;

    for item in &episode.items {
        match item.kind {
            ItemKind::Fact => {
                noise_seen += item.is_noise as usize;
                let entry = agent.encoder.encode(&mut g, store, &agent.solver, item)?;
                let full = mem.is_full();
                let upcoming = if full && mode == RolloutMode::Train && scheme == RewardScheme::Difference {
                    next_question(episode, item.timestep)
                } else {
                    None
                };
                let before = match upcoming {
                    Some(q) => Some(match current_acc {
                        Some((t, a)) if t == q.timestep => a,
                        _ => correctness(agent, store, &mem, q)?,
                    }),
                    None => None,
                };
                let record = append_or_evict(&mut g, store, &agent.scheduler, &mut mem, entry, select, rng)?;
                let Some(rec) = record else { continue };
                if episode.at(rec.dropped_timestep).is_noise {
                    noise_evicted += 1;
                }
                let accuracy = match (upcoming, before) {
                    (Some(q), Some(b)) => {
                        let after = correctness(agent, store, &mem, q)?;
                        current_acc = Some((q.timestep, after));
                        Some((b, after))
                    }
                    _ => None,
                };
                let value = match (value_net, value_state, rec.hidden) {
                    (Some(net), Some(state), Some(hidden)) => {
                        let (v, next) = net.forward(&mut g, store, hidden, state)?;
                        value_state = Some(next);
                        Some(v)
                    }
                    _ => None,
                };
                let nodes = match (rec.log_prob, rec.entropy) {
                    (Some(log_prob), Some(entropy)) => Some(StepNodes {
                        log_prob,
                        entropy,
                        value,
                    }),
                    _ => None,
                };
                let p = rec.probs[rec.index];
                let entropy = -rec
                    .probs
                    .iter()
                    .filter(|&&q| q > 0.0)
                    .map(|&q| q * q.ln())
                    .sum::<f64>();
                traj.steps.push(StepRecord {
                    timestep: item.timestep,
                    action: rec.index,
                    log_prob: match nodes {
                        Some(n) => g.scalar_value(n.log_prob),
                        None => p.ln(),
                    },
                    entropy: entropy.max(0.0),
                    reward: 0.0,
                    value: value.map(|v| g.scalar_value(v)),
                    done: false,
                    accuracy,
                    nodes,
                });
            }
            ItemKind::Question => {
                let gold = item.answer.expect("questions carry answers");
                let (answer, fwd) = agent.solver.solve_in(&mut g, store, &mem, item)?;
                if mode == RolloutMode::Train {
                    solver_losses.push(solver_loss(&mut g, fwd.logits, gold)?);
                }
                traj.outcomes.push(QuestionOutcome {
                    timestep: item.timestep,
                    answer: gold,
                    predicted: answer.predicted,
                    correct: answer.predicted == gold,
                    solvable: solvable(&mem, item),
                    supports: item.supports.clone(),
                    retained: mem.source_timesteps(),
                    noise_seen,
                    noise_evicted,
                });
            }
        }
    }
    if let Some(last) = traj.steps.last_mut() {
        last.done = true;
    }
    if mode == RolloutMode::Train {
        let rewards = match scheme {
            RewardScheme::Terminal => {
                let decisions: Vec<usize> = traj.steps.iter().map(|s| s.timestep).collect();
                let outcomes: Vec<(usize, bool)> =
                    traj.outcomes.iter().map(|o| (o.timestep, o.correct)).collect();
                terminal_rewards(&decisions, &outcomes)
            }
            RewardScheme::Difference => traj
                .steps
                .iter()
                .map(|s| match s.accuracy {
                    Some((b, a)) => difference_rewards(&[b, a])[0],
                    None => 0.0,
                })
                .collect(),
        };
        for (s, r) in traj.steps.iter_mut().zip(rewards) {
            s.reward = r;
        }
    }
    Ok(Rollout {
        graph: g,
        trajectory: traj,
        solver_losses,
    })
}

/// Pays each decision the 0/1 outcome of the first question asked after
/// it; decisions after the final question get 0.
pub fn terminal_rewards(decision_timesteps: &[usize], outcomes: &[(usize, bool)]) -> Vec<f64> {
    decision_timesteps
        .iter()
        .map(|&t| {
            outcomes
                .iter()
                .find(|&&(q, _)| q > t)
                .map_or(0.0, |&(_, ok)| if ok { 1.0 } else { 0.0 })
        })
        .collect()
}

/// `acc[t] - acc[t-1]` for every step after the first.
pub fn difference_rewards(accuracies: &[f64]) -> Vec<f64> {
    accuracies.windows(2).map(|w| w[1] - w[0]).collect()
}

/// `G_t = sum_j gamma^j R_{t+j}`.
pub fn discounted_returns(rewards: &[f64], gamma: f64) -> Vec<f64> {
    let mut out = vec![0.0; rewards.len()];
    let mut acc = 0.0;
    for (i, &r) in rewards.iter().enumerate().rev() {
        acc = r + gamma * acc;
        out[i] = acc;
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn returns_examples() {
        let g = discounted_returns(&[1.0, 0.0, 1.0], 0.1);
        assert!((g[0] - 1.01).abs() < 1e-15);
        assert!((g[1] - 0.1).abs() < 1e-15);
        assert_eq!(g[2], 1.0);
        assert_eq!(discounted_returns(&[0.3, 0.7], 0.0), vec![0.3, 0.7]);
    }

    #[test]
    fn difference_example() {
        assert_eq!(difference_rewards(&[1.0, 1.0, 0.0, 1.0]), vec![0.0, -1.0, 1.0]);
    }

    #[test]
    fn terminal_assignment() {
        let r = terminal_rewards(&[6, 7, 10, 19, 46], &[(9, true), (18, false), (27, true)]);
        assert_eq!(r, vec![1.0, 1.0, 0.0, 1.0, 0.0]);
    }
}
