use rand::seq::SliceRandom;
use rand::Rng;

use crate::autodiff::{AdamState, Tape, Tensor, Var};
use crate::error::{invalid, shape_err, Result};
use crate::nets::{BoundPolicy, GaussianPolicy};

/// Flattened on-policy samples for one policy-improvement step.
#[derive(Clone, Debug, PartialEq)]
pub struct RolloutBatch {
    pub states: Tensor,
    pub actions: Tensor,
    /// Log-densities under the collecting policy, fixed at construction.
    pub old_log_probs: Vec<f64>,
    pub returns: Vec<f64>,
    pub advantages: Vec<f64>,
}

impl RolloutBatch {
    /// Old log-probabilities are recomputed here with the same taped
    /// expression the update uses, so the ratio is exactly 1 before the
    /// first step.
    pub fn new(
        policy: &GaussianPolicy,
        states: &[Vec<f64>],
        actions: &[Vec<f64>],
        returns: Vec<f64>,
        advantages: Vec<f64>,
    ) -> Result<Self> {
        let n = states.len();
        if n == 0 || actions.len() != n || returns.len() != n || advantages.len() != n {
            return shape_err(
                "rollout_batch",
                format!(
                    "{n} states, {} actions, {} returns, {} advantages",
                    actions.len(),
                    returns.len(),
                    advantages.len()
                ),
            );
        }
        if advantages.iter().any(|a| !a.is_finite()) {
            return invalid("advantages must be finite");
        }
        let states = Tensor::stack_rows(states)?;
        let actions = Tensor::stack_rows(actions)?;
        let old_log_probs = batch_log_probs(policy, &states, &actions)?;
        Ok(Self {
            states,
            actions,
            old_log_probs,
            returns,
            advantages,
        })
    }

    pub fn len(&self) -> usize {
        self.returns.len()
    }

    pub fn is_empty(&self) -> bool {
        self.returns.is_empty()
    }

    /// Advantages shifted and scaled to mean 0, std 1 over the whole batch.
    pub fn normalized_advantages(&self) -> Vec<f64> {
        let n = self.advantages.len() as f64;
        let mean = self.advantages.iter().sum::<f64>() / n;
        let var = self.advantages.iter().map(|a| (a - mean).powi(2)).sum::<f64>() / n;
        let std = var.sqrt().max(1e-8);
        self.advantages.iter().map(|a| (a - mean) / std).collect()
    }
}

pub fn batch_log_probs(policy: &GaussianPolicy, states: &Tensor, actions: &Tensor) -> Result<Vec<f64>> {
    let mut tape = Tape::new();
    let bound = policy.bind_const(&mut tape);
    let s = tape.constant(states.clone());
    let a = tape.constant(actions.clone());
    let lp = bound.log_prob(&mut tape, s, a)?;
    Ok(tape.value(lp).data().to_vec())
}

/// `min(ρA, clip(ρ, 1-ε, 1+ε)A)` for one sample.
pub fn clipped_objective(ratio: f64, advantage: f64, clip: f64) -> f64 {
    (ratio * advantage).min(ratio.clamp(1.0 - clip, 1.0 + clip) * advantage)
}

fn rows(t: &Tensor, idx: &[usize]) -> Result<Tensor> {
    let r: Vec<Vec<f64>> = idx.iter().map(|&i| t.row_slice(i).to_vec()).collect();
    Tensor::stack_rows(&r)
}

/// Builds the clipped surrogate (to be maximized) over the rows `idx`.
/// Returns `(surrogate, ratio)` handles.
fn surrogate_tape(
    tape: &mut Tape,
    bound: &BoundPolicy,
    batch: &RolloutBatch,
    advantages: &[f64],
    idx: &[usize],
    clip: f64,
) -> Result<(Var, Var)> {
    let n = idx.len();
    let s = tape.constant(rows(&batch.states, idx)?);
    let a = tape.constant(rows(&batch.actions, idx)?);
    let old = tape.constant(Tensor::matrix(n, 1, idx.iter().map(|&i| batch.old_log_probs[i]).collect())?);
    let adv = tape.constant(Tensor::matrix(n, 1, idx.iter().map(|&i| advantages[i]).collect())?);
    let lp = bound.log_prob(tape, s, a)?;
    let diff = tape.sub(lp, old)?;
    let ratio = tape.exp(diff);
    let surr = tape.mul(ratio, adv)?;
    let clipped = tape.clamp(ratio, 1.0 - clip, 1.0 + clip);
    let surr_clipped = tape.mul(clipped, adv)?;
    let obj = tape.minimum(surr, surr_clipped)?;
    Ok((tape.mean(obj), ratio))
}

/// Clipped surrogate of `policy` on rows `idx`, using the given
/// (already normalized) advantages.
pub fn ppo_surrogate(
    policy: &GaussianPolicy,
    batch: &RolloutBatch,
    advantages: &[f64],
    idx: &[usize],
    clip: f64,
) -> Result<f64> {
    let mut tape = Tape::new();
    let bound = policy.bind_const(&mut tape);
    let (s, _) = surrogate_tape(&mut tape, &bound, batch, advantages, idx, clip)?;
    Ok(tape.value(s).item())
}

#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct PpoStats {
    /// Mean negated surrogate over the applied minibatches.
    pub loss: f64,
    pub updates: usize,
    pub skipped: usize,
}

/// Maximizes the clipped surrogate with Adam over `epochs` shuffled passes.
pub fn ppo_policy_update(
    policy: &mut GaussianPolicy,
    opt: &mut AdamState,
    batch: &RolloutBatch,
    clip: f64,
    epochs: usize,
    minibatch: usize,
    rng: &mut impl Rng,
) -> Result<PpoStats> {
    if !(clip > 0.0 && clip < 1.0) || minibatch == 0 {
        return invalid(format!("bad PPO settings: clip {clip}, minibatch {minibatch}"));
    }
    let adv = batch.normalized_advantages();
    let mut order: Vec<usize> = (0..batch.len()).collect();
    let mut stats = PpoStats::default();
    let mut total = 0.0;
    for _ in 0..epochs {
        order.shuffle(rng);
        for idx in order.chunks(minibatch) {
            let mut tape = Tape::new();
            let bound = policy.bind(&mut tape);
            let (surr, ratio) = surrogate_tape(&mut tape, &bound, batch, &adv, idx, clip)?;
            if !tape.value(ratio).is_finite() || !tape.value(surr).item().is_finite() {
                log::warn!("skipping PPO minibatch with non-finite ratio");
                stats.skipped += 1;
                continue;
            }
            let loss = tape.scale(surr, -1.0);
            let grads = tape.backward(loss)?;
            match opt.step(policy, &grads.collect(&tape, &bound.vars())) {
                Ok(()) => {
                    total += tape.value(loss).item();
                    stats.updates += 1;
                }
                Err(e) => {
                    log::warn!("skipping PPO minibatch: {e}");
                    stats.skipped += 1;
                }
            }
        }
    }
    if stats.updates > 0 {
        stats.loss = total / stats.updates as f64;
    }
    Ok(stats)
}
