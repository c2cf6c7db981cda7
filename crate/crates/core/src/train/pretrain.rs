use rand::seq::index::sample;
use rand::Rng;

use crate::autodiff::{Graph, ParameterStore};
use crate::error::Result;
use crate::solver::{answer_from, solver_loss, MemN2N, MemorySentence};
use crate::tasks::{Episode, ItemKind, StreamItem};

/// Most distractors mixed into an oracle memory.
pub const MAX_DISTRACTORS: usize = 13;

/// Supporting facts of `question` plus up to `max_distractors` random
/// earlier facts, in stream order.
pub fn oracle_memory<'a, R: Rng + ?Sized>(
    episode: &'a Episode,
    question: &StreamItem,
    max_distractors: usize,
    rng: &mut R,
) -> Vec<MemorySentence<'a>> {
    let others: Vec<&StreamItem> = episode.items[..question.timestep - 1]
        .iter()
        .filter(|it| it.kind == ItemKind::Fact && !question.supports.contains(&it.timestep))
        .collect();
    let take = rng.gen_range(0..=max_distractors.min(others.len()));
    let mut chosen: Vec<usize> = question.supports.clone();
    chosen.extend(sample(rng, others.len(), take).into_iter().map(|i| others[i].timestep));
    chosen.sort_unstable();
    chosen
        .into_iter()
        .map(|t| MemorySentence {
            tokens: &episode.at(t).tokens,
            timestep: t,
        })
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PretrainConfig {
    /// Total solver updates, warm-up included.
    pub steps: usize,
    /// Leading updates run without the attention softmax.
    pub linear_start_steps: usize,
    pub learning_rate: f64,
    pub grad_clip: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PretrainReport {
    pub steps: usize,
    pub final_loss: f64,
    /// Held-out accuracy with oracle memory.
    pub heldout_accuracy: f64,
}

/// Accuracy of `solver` on every question of `episodes` with oracle memory.
pub fn oracle_accuracy<R: Rng + ?Sized>(
    solver: &MemN2N,
    store: &ParameterStore,
    episodes: &[Episode],
    rng: &mut R,
) -> Result<f64> {
    let (mut hit, mut n) = (0usize, 0usize);
    for ep in episodes {
        for q in ep.questions() {
            let mem = oracle_memory(ep, q, MAX_DISTRACTORS, rng);
            let mut g = Graph::new();
            let fwd = solver.forward(&mut g, store, &mem, &q.tokens, q.timestep)?;
            hit += (answer_from(&g, &fwd).predicted == q.answer.expect("answer")) as usize;
            n += 1;
        }
    }
    Ok(if n == 0 { 0.0 } else { hit as f64 / n as f64 })
}

/// Trains the solver alone, one question per Adam step, cycling through
/// the questions of `train`.
///
/// Without the linear warm-up the solver tends to stall around 85% on
/// memories with many distractors; it fails to learn which of several
/// moves by the same person is the latest.
pub fn pretrain_solver<R: Rng + ?Sized>(
    solver: &MemN2N,
    store: &mut ParameterStore,
    train: &[Episode],
    heldout: &[Episode],
    config: &PretrainConfig,
    rng: &mut R,
) -> Result<PretrainReport> {
    let linear = solver.with_linear_attention(true);
    let questions: Vec<(&Episode, &StreamItem)> = train
        .iter()
        .flat_map(|ep| ep.questions().map(move |q| (ep, q)))
        .collect();
    let mut final_loss = 0.0;
    if !questions.is_empty() {
        for step in 0..config.steps {
            let (ep, q) = questions[step % questions.len()];
            let mem = oracle_memory(ep, q, MAX_DISTRACTORS, rng);
            let mut g = Graph::new();
            let model = if step < config.linear_start_steps {
                &linear
            } else {
                solver
            };
            let fwd = model.forward(&mut g, store, &mem, &q.tokens, q.timestep)?;
            let loss = solver_loss(&mut g, fwd.logits, q.answer.expect("answer"))?;
            final_loss = g.scalar_value(loss);
            g.backward(loss)?;
            store.zero_grad();
            store.accumulate(&g);
            store.clip_grad_norm(config.grad_clip);
            store.adam_step(config.learning_rate)?;
        }
    }
    Ok(PretrainReport {
        steps: config.steps,
        final_loss,
        heldout_accuracy: oracle_accuracy(solver, store, heldout, rng)?,
    })
}
