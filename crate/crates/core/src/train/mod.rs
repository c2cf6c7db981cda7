//! Joint training of scheduler and solver.

mod agent;
mod config;
mod pretrain;
mod rollout;
mod update;

use std::fs;
use std::io::Write as _;
use std::path::{Path, PathBuf};

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub use agent::{load_checkpoint, save_checkpoint, Agent, CONFIG_FILE};
pub use config::{Algorithm, Split, TrainConfig};
pub use pretrain::{
    oracle_accuracy, oracle_memory, pretrain_solver, PretrainConfig, PretrainReport, MAX_DISTRACTORS,
};
pub use rollout::{
    difference_rewards, discounted_returns, rollout, solvable, terminal_rewards, QuestionOutcome,
    RewardScheme, Rollout, RolloutMode, StepNodes, StepRecord, Trajectory,
};
pub use update::{
    a2c_update, accumulate_rollout, advantages, apply_gradients, build_loss, reinforce_update,
    LossScalars,
};

use crate::autodiff::{Gradients, ParameterStore};
use crate::error::Result;
use crate::eval::evaluate;
use crate::tasks::{generate_original, generate_split, Episode, EPISODE_LEN};

pub const CURVES_FILE: &str = "curves.csv";
pub const BEST_DIR: &str = "best";
pub const FINAL_DIR: &str = "final";
pub const CURVES_HEADER: &str = "step,train_accuracy,eval_accuracy,eval_solvable,policy_loss,value_loss,entropy";

/// Offsets that keep the training and held-out streams apart.
const TRAIN_DATA_STREAM: u64 = 0x7261_696e;
const EVAL_DATA_STREAM: u64 = 0x6576_616c;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CurveRow {
    pub step: usize,
    pub train_accuracy: f64,
    pub eval_accuracy: f64,
    pub eval_solvable: f64,
    pub policy_loss: f64,
    pub value_loss: f64,
    pub entropy: f64,
}

impl CurveRow {
    pub fn csv(&self) -> String {
        format!(
            "{},{:.6},{:.6},{:.6},{:.6},{:.6},{:.6}",
            self.step,
            self.train_accuracy,
            self.eval_accuracy,
            self.eval_solvable,
            self.policy_loss,
            self.value_loss,
            self.entropy
        )
    }
}

#[derive(Debug, Clone)]
pub struct TrainOutcome {
    pub curves: Vec<CurveRow>,
    pub best_step: usize,
    pub best_eval_accuracy: f64,
    pub best_eval_solvable: f64,
    pub pretrain: Option<PretrainReport>,
    pub output_dir: PathBuf,
}

/// Episodes of the configured split for training.
pub fn training_episodes(config: &TrainConfig) -> Vec<Episode> {
    split_episodes(config.split, config.seed ^ TRAIN_DATA_STREAM, config.train_episodes)
}

/// Held-out episodes used for model selection.
pub fn heldout_episodes(config: &TrainConfig) -> Vec<Episode> {
    split_episodes(config.split, config.seed ^ EVAL_DATA_STREAM, config.eval_episodes)
}

pub fn split_episodes(split: Split, seed: u64, count: usize) -> Vec<Episode> {
    match split {
        Split::Noisy => generate_split(seed, count),
        Split::Original => generate_original(seed, count),
    }
}

fn rollout_rng(seed: u64, episode_index: usize) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(episode_index as u64 + 1);
    rng
}

fn scheme(config: &TrainConfig) -> RewardScheme {
    match config.algorithm {
        Algorithm::A2c => RewardScheme::Terminal,
        Algorithm::ReinforceDiff => RewardScheme::Difference,
    }
}

struct WorkerResult {
    grads: Gradients,
    scalars: LossScalars,
    decisions: usize,
    correct: usize,
    questions: usize,
}

fn run_worker(
    agent: &Agent,
    store: &ParameterStore,
    episode: &Episode,
    config: &TrainConfig,
    episode_index: usize,
) -> Result<WorkerResult> {
    let mut local = store.snapshot();
    let mut rng = rollout_rng(config.seed, episode_index);
    let mut r = rollout(
        agent,
        &local,
        episode,
        config.memory_slots,
        RolloutMode::Train,
        scheme(config),
        &mut rng,
    )?;
    let scalars = accumulate_rollout(&mut local, &mut r, config)?;
    let outcomes = &r.trajectory.outcomes;
    Ok(WorkerResult {
        grads: local.take_gradients(),
        scalars,
        decisions: r.trajectory.steps.len(),
        correct: outcomes.iter().filter(|o| o.correct).count(),
        questions: outcomes.len(),
    })
}

#[derive(Default)]
struct Window {
    correct: usize,
    questions: usize,
    decisions: usize,
    policy: f64,
    value: f64,
    entropy: f64,
}

/// Trains per `config`, writing checkpoints and curves under
/// `config.output_dir`.
pub fn train(config: &TrainConfig) -> Result<TrainOutcome> {
    let train_set = training_episodes(config);
    let heldout = heldout_episodes(config);
    train_on(config, &train_set, &heldout)
}

/// Same as [`train`] with caller-supplied data.
pub fn train_on(config: &TrainConfig, train_set: &[Episode], heldout: &[Episode]) -> Result<TrainOutcome> {
    config.validate()?;
    let out = config.output_dir.clone();
    fs::create_dir_all(&out)?;
    let mut store = ParameterStore::new();
    let agent = Agent::new(&mut store, config)?;

    let pretrain = if config.pretrain_steps > 0 {
        let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
        rng.set_stream(0);
        let report = pretrain_solver(
            &agent.solver,
            &mut store,
            train_set,
            heldout,
            &PretrainConfig {
                steps: config.pretrain_steps,
                linear_start_steps: config.linear_start_steps.min(config.pretrain_steps),
                learning_rate: config.pretrain_lr,
                grad_clip: config.grad_clip,
            },
            &mut rng,
        )?;
        store.reset_optimizer();
        Some(report)
    } else {
        None
    };

    let digest = config.digest();
    let eval = |store: &ParameterStore| evaluate(&agent, store, heldout, config.memory_slots, config.seed, &digest);

    let first = eval(&store)?;
    let mut curves = vec![CurveRow {
        step: 0,
        train_accuracy: 0.0,
        eval_accuracy: first.accuracy,
        eval_solvable: first.solvable,
        policy_loss: 0.0,
        value_loss: 0.0,
        entropy: 0.0,
    }];
    let mut best = (first.accuracy, first.solvable, 0usize);
    save_checkpoint(&out.join(BEST_DIR), config, &store)?;

    let mut steps = 0usize;
    let mut episode_index = 0usize;
    let mut next_eval = config.eval_interval;
    let mut window = Window::default();
    while steps < config.total_steps && !train_set.is_empty() {
        let jobs: Vec<(usize, &Episode)> = (0..config.workers)
            .map(|w| {
                let i = episode_index + w;
                (i, &train_set[i % train_set.len()])
            })
            .collect();
        episode_index += config.workers;
        let results: Vec<Result<WorkerResult>> = if config.workers == 1 {
            jobs.iter()
                .map(|&(i, ep)| run_worker(&agent, &store, ep, config, i))
                .collect()
        } else {
            std::thread::scope(|s| {
                let handles: Vec<_> = jobs
                    .iter()
                    .map(|&(i, ep)| {
                        let (agent, store) = (&agent, &store);
                        s.spawn(move || run_worker(agent, store, ep, config, i))
                    })
                    .collect();
                handles
                    .into_iter()
                    .map(|h| h.join().expect("worker panicked"))
                    .collect()
            })
        };
        let mut grads = Vec::with_capacity(results.len());
        for r in results {
            let r = r?;
            window.correct += r.correct;
            window.questions += r.questions;
            window.decisions += r.decisions;
            window.policy += r.scalars.policy;
            window.value += r.scalars.value;
            window.entropy += r.scalars.entropy;
            grads.push(r.grads);
        }
        apply_gradients(&mut store, &grads, config, config.learning_rate)?;
        steps += EPISODE_LEN * config.workers;

        if steps >= next_eval || steps >= config.total_steps {
            while next_eval <= steps {
                next_eval += config.eval_interval;
            }
            let report = eval(&store)?;
            let per_decision = |x: f64| x / window.decisions.max(1) as f64;
            curves.push(CurveRow {
                step: steps,
                train_accuracy: window.correct as f64 / window.questions.max(1) as f64,
                eval_accuracy: report.accuracy,
                eval_solvable: report.solvable,
                policy_loss: per_decision(window.policy),
                value_loss: per_decision(window.value),
                entropy: per_decision(window.entropy),
            });
            window = Window::default();
            if (report.accuracy, report.solvable) > (best.0, best.1) {
                best = (report.accuracy, report.solvable, steps);
                save_checkpoint(&out.join(BEST_DIR), config, &store)?;
            }
        }
    }
    save_checkpoint(&out.join(FINAL_DIR), config, &store)?;
    write_curves(&out.join(CURVES_FILE), &curves)?;
    Ok(TrainOutcome {
        curves,
        best_step: best.2,
        best_eval_accuracy: best.0,
        best_eval_solvable: best.1,
        pretrain,
        output_dir: out,
    })
}

pub fn write_curves(path: &Path, rows: &[CurveRow]) -> Result<()> {
    let mut f = fs::File::create(path)?;
    writeln!(f, "{CURVES_HEADER}")?;
    for r in rows {
        writeln!(f, "{}", r.csv())?;
    }
    Ok(())
}
