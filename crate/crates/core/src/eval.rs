//! Test-time protocol: argmax rollouts, accuracy and solvable rate,
//! per-noise breakdowns, and human-readable memory traces.

use std::fmt::Write as _;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::autodiff::ParameterStore;
use crate::error::Result;
use crate::tasks::{Episode, Vocabulary, NOISE_LEVELS};
use crate::train::{rollout, Agent, QuestionOutcome, RewardScheme, RolloutMode};

pub use crate::train::solvable;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NoiseBreakdown {
    pub noise_level: f64,
    pub episodes: usize,
    pub questions: usize,
    pub accuracy: f64,
    pub solvable: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub policy: String,
    pub memory_slots: usize,
    pub episodes: usize,
    pub questions: usize,
    pub accuracy: f64,
    pub solvable: f64,
    pub per_noise: Vec<NoiseBreakdown>,
    pub seed: u64,
    pub config_digest: String,
}

impl EvalReport {
    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub const CSV_HEADER: &'static str = "policy,memory_slots,episodes,questions,accuracy,solvable";

    pub fn csv_row(&self) -> String {
        format!(
            "{},{},{},{},{:.6},{:.6}",
            self.policy, self.memory_slots, self.episodes, self.questions, self.accuracy, self.solvable
        )
    }
}

#[derive(Default, Clone, Copy)]
struct Tally {
    episodes: usize,
    questions: usize,
    correct: usize,
    solvable: usize,
}

impl Tally {
    fn add(&mut self, outcomes: &[QuestionOutcome]) {
        self.episodes += 1;
        for o in outcomes {
            self.questions += 1;
            self.correct += o.correct as usize;
            self.solvable += o.solvable as usize;
        }
    }

    fn rate(n: usize, d: usize) -> f64 {
        if d == 0 {
            0.0
        } else {
            n as f64 / d as f64
        }
    }
}

/// Per-episode RNG for policies that sample even at test time.
pub fn episode_rng(seed: u64, index: usize) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(index as u64);
    rng
}

/// Argmax rollouts of every episode at `memory_slots`, aggregated.
pub fn evaluate(
    agent: &Agent,
    store: &ParameterStore,
    episodes: &[Episode],
    memory_slots: usize,
    seed: u64,
    config_digest: &str,
) -> Result<EvalReport> {
    let mut total = Tally::default();
    let mut by_level = [Tally::default(); NOISE_LEVELS.len()];
    for (i, ep) in episodes.iter().enumerate() {
        let mut rng = episode_rng(seed, i);
        let r = rollout(
            agent,
            store,
            ep,
            memory_slots,
            RolloutMode::Test,
            RewardScheme::Terminal,
            &mut rng,
        )?;
        total.add(&r.trajectory.outcomes);
        let level = NOISE_LEVELS
            .iter()
            .position(|&l| l == ep.noise_level())
            .unwrap_or(0);
        by_level[level].add(&r.trajectory.outcomes);
    }
    Ok(EvalReport {
        policy: agent.scheduler.kind().to_string(),
        memory_slots,
        episodes: total.episodes,
        questions: total.questions,
        accuracy: Tally::rate(total.correct, total.questions),
        solvable: Tally::rate(total.solvable, total.questions),
        per_noise: NOISE_LEVELS
            .iter()
            .zip(by_level)
            .filter(|(_, t)| t.episodes > 0)
            .map(|(&noise_level, t)| NoiseBreakdown {
                noise_level,
                episodes: t.episodes,
                questions: t.questions,
                accuracy: Tally::rate(t.correct, t.questions),
                solvable: Tally::rate(t.solvable, t.questions),
            })
            .collect(),
        seed,
        config_digest: config_digest.to_string(),
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RetainedFact {
    pub timestep: usize,
    pub text: String,
    pub noise: bool,
    pub support: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QuestionTrace {
    pub timestep: usize,
    pub question: String,
    pub answer: String,
    pub predicted: String,
    pub supports: Vec<usize>,
    pub solvable: bool,
    pub noise_seen: usize,
    pub noise_evicted: usize,
    pub memory: Vec<RetainedFact>,
}

impl QuestionTrace {
    /// Both supports kept while some noise fact was thrown away.
    pub fn kept_supports_dropped_noise(&self) -> bool {
        self.solvable && self.noise_evicted > 0
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InspectDump {
    pub policy: String,
    pub memory_slots: usize,
    pub noise_facts: usize,
    pub questions: Vec<QuestionTrace>,
}

/// Replays one episode in argmax mode and records memory at each question.
pub fn inspect(
    agent: &Agent,
    store: &ParameterStore,
    episode: &Episode,
    memory_slots: usize,
    seed: u64,
) -> Result<InspectDump> {
    let vocab = Vocabulary::babi();
    let mut rng = episode_rng(seed, 0);
    let r = rollout(
        agent,
        store,
        episode,
        memory_slots,
        RolloutMode::Test,
        RewardScheme::Terminal,
        &mut rng,
    )?;
    let questions = r
        .trajectory
        .outcomes
        .iter()
        .map(|o| {
            let q = episode.at(o.timestep);
            QuestionTrace {
                timestep: o.timestep,
                question: vocab.decode(&q.tokens),
                answer: vocab.token(o.answer).to_string(),
                predicted: vocab.token(o.predicted).to_string(),
                supports: o.supports.clone(),
                solvable: o.solvable,
                noise_seen: o.noise_seen,
                noise_evicted: o.noise_evicted,
                memory: o
                    .retained
                    .iter()
                    .map(|&t| {
                        let f = episode.at(t);
                        RetainedFact {
                            timestep: t,
                            text: vocab.decode(&f.tokens),
                            noise: f.is_noise,
                            support: o.supports.contains(&t),
                        }
                    })
                    .collect(),
            }
        })
        .collect();
    Ok(InspectDump {
        policy: agent.scheduler.kind().to_string(),
        memory_slots,
        noise_facts: episode.noise_facts(),
        questions,
    })
}

impl InspectDump {
    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn render(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(
            s,
            "policy {} | {} slots | {} noise facts",
            self.policy, self.memory_slots, self.noise_facts
        );
        for q in &self.questions {
            let _ = writeln!(
                s,
                "\n[t={:2}] {}?  gold={} predicted={} solvable={} noise dropped {}/{}",
                q.timestep, q.question, q.answer, q.predicted, q.solvable, q.noise_evicted, q.noise_seen
            );
            for m in &q.memory {
                let tag = if m.support {
                    "*"
                } else if m.noise {
                    "~"
                } else {
                    " "
                };
                let _ = writeln!(s, "  {tag} {:2}  {}", m.timestep, m.text);
            }
        }
        s
    }
}
