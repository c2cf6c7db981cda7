use crate::autodiff::{Gradients, Graph, ParameterStore, Var};
use crate::error::{EmrError, Result};

use super::config::{Algorithm, TrainConfig};
use super::rollout::{discounted_returns, Rollout, Trajectory};

/// Per-episode loss terms, as plain numbers.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct LossScalars {
    pub policy: f64,
    pub value: f64,
    pub entropy: f64,
    pub solver: f64,
    pub total: f64,
}

impl LossScalars {
    pub fn add(&mut self, other: &LossScalars) {
        self.policy += other.policy;
        self.value += other.value;
        self.entropy += other.entropy;
        self.solver += other.solver;
        self.total += other.total;
    }
}

fn sum_nodes(g: &mut Graph, nodes: &[Var]) -> Result<Option<Var>> {
    let mut it = nodes.iter();
    let Some(&first) = it.next() else {
        return Ok(None);
    };
    let mut acc = first;
    for &n in it {
        acc = g.add(acc, n)?;
    }
    Ok(Some(acc))
}

/// Advantages `G_t - V_t` as constants.
pub fn advantages(traj: &Trajectory, gamma: f64) -> Vec<f64> {
    let rewards: Vec<f64> = traj.steps.iter().map(|s| s.reward).collect();
    discounted_returns(&rewards, gamma)
        .into_iter()
        .zip(&traj.steps)
        .map(|(g, s)| g - s.value.unwrap_or(0.0))
        .collect()
}

/// Builds the combined scalar loss inside the rollout's graph.
///
/// `weights` overrides the per-step policy-gradient weights; by default they
/// are the detached advantages (a2c) or the raw rewards (reinforce_diff).
pub fn build_loss(
    rollout: &mut Rollout,
    config: &TrainConfig,
    weights: Option<&[f64]>,
) -> Result<(Option<Var>, LossScalars)> {
    let traj = &rollout.trajectory;
    let g = &mut rollout.graph;
    let rewards: Vec<f64> = traj.steps.iter().map(|s| s.reward).collect();
    let returns = discounted_returns(&rewards, config.discount);
    let default_weights = match config.algorithm {
        Algorithm::A2c => advantages(traj, config.discount),
        Algorithm::ReinforceDiff => rewards.clone(),
    };
    let weights = weights.unwrap_or(&default_weights);
    if let Some(i) = weights.iter().position(|w| !w.is_finite()) {
        return Err(EmrError::NonFiniteLoss(format!(
            "policy-gradient weight {} at decision {i} (reward {})",
            weights[i], rewards[i]
        )));
    }

    let mut policy_terms = Vec::new();
    let mut value_terms = Vec::new();
    let mut entropy_terms = Vec::new();
    let mut scalars = LossScalars::default();
    for ((step, &w), &ret) in traj.steps.iter().zip(weights).zip(&returns) {
        let Some(nodes) = step.nodes else { continue };
        if w != 0.0 {
            policy_terms.push(g.scale(nodes.log_prob, -w)?);
        }
        scalars.policy -= w * step.log_prob;
        entropy_terms.push(nodes.entropy);
        scalars.entropy += step.entropy;
        if config.algorithm == Algorithm::A2c {
            if let Some(v) = nodes.value {
                let diff = g.add_scalar(v, -ret)?;
                value_terms.push(g.mul(diff, diff)?);
                scalars.value += (ret - g.scalar_value(v)).powi(2);
            }
        }
    }
    scalars.solver = rollout.solver_losses.iter().map(|&v| g.scalar_value(v)).sum();

    let mut parts = Vec::new();
    if let Some(p) = sum_nodes(g, &policy_terms)? {
        parts.push(p);
    }
    if let Some(v) = sum_nodes(g, &value_terms)? {
        parts.push(g.scale(v, config.value_coef)?);
    }
    if let Some(h) = sum_nodes(g, &entropy_terms)? {
        parts.push(g.scale(h, -config.entropy_coef)?);
    }
    let losses = rollout.solver_losses.clone();
    if let Some(s) = sum_nodes(g, &losses)? {
        parts.push(g.scale(s, config.solver_coef)?);
    }
    scalars.total = scalars.policy + config.value_coef * scalars.value
        - config.entropy_coef * scalars.entropy
        + config.solver_coef * scalars.solver;
    if !scalars.total.is_finite() {
        return Err(EmrError::NonFiniteLoss(format!(
            "policy {} value {} entropy {} solver {}",
            scalars.policy, scalars.value, scalars.entropy, scalars.solver
        )));
    }
    Ok((sum_nodes(g, &parts)?, scalars))
}

/// Backpropagates one rollout's loss into `store`'s gradient slots.
pub fn accumulate_rollout(
    store: &mut ParameterStore,
    rollout: &mut Rollout,
    config: &TrainConfig,
) -> Result<LossScalars> {
    let (loss, scalars) = build_loss(rollout, config, None)?;
    if let Some(loss) = loss {
        rollout.graph.backward(loss)?;
        store.accumulate(&rollout.graph);
    }
    Ok(scalars)
}

/// Averages worker gradients, clips, and takes one Adam step.
pub fn apply_gradients(
    store: &mut ParameterStore,
    workers: &[Gradients],
    config: &TrainConfig,
    learning_rate: f64,
) -> Result<f64> {
    store.zero_grad();
    store.merge_gradients(workers);
    let norm = store.clip_grad_norm(config.grad_clip);
    store.adam_step(learning_rate)?;
    Ok(norm)
}

fn single_update(
    store: &mut ParameterStore,
    rollouts: &mut [Rollout],
    config: &TrainConfig,
    expected: Algorithm,
) -> Result<LossScalars> {
    if config.algorithm != expected {
        return Err(EmrError::Config(format!(
            "update expects algorithm {}, config has {}",
            expected.as_str(),
            config.algorithm.as_str()
        )));
    }
    let mut grads = Vec::with_capacity(rollouts.len());
    let mut total = LossScalars::default();
    for r in rollouts.iter_mut() {
        let mut worker = store.snapshot();
        total.add(&accumulate_rollout(&mut worker, r, config)?);
        grads.push(worker.take_gradients());
    }
    apply_gradients(store, &grads, config, config.learning_rate)?;
    Ok(total)
}

/// One actor-critic step over a batch of rollouts (one per worker).
pub fn a2c_update(
    store: &mut ParameterStore,
    rollouts: &mut [Rollout],
    config: &TrainConfig,
) -> Result<LossScalars> {
    single_update(store, rollouts, config, Algorithm::A2c)
}

/// One difference-reward REINFORCE step over a batch of rollouts.
pub fn reinforce_update(
    store: &mut ParameterStore,
    rollouts: &mut [Rollout],
    config: &TrainConfig,
) -> Result<LossScalars> {
    single_update(store, rollouts, config, Algorithm::ReinforceDiff)
}
