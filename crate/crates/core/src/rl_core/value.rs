use rand::seq::SliceRandom;
use rand::Rng;

use crate::autodiff::{AdamState, Tape, Tensor, Var};
use crate::error::{shape_err, Result};
use crate::nets::{MlpParams, PeVFAParams};
use crate::policy_repr::{representation_step, BatchSpec, PolicyRecord, Representation, StepLosses};

fn check_targets(states: &Tensor, targets: &[f64]) -> Result<()> {
    if states.rows() != targets.len() || targets.is_empty() {
        return shape_err(
            "value_update",
            format!("{} states vs {} targets", states.rows(), targets.len()),
        );
    }
    Ok(())
}

fn gather(states: &Tensor, targets: &[f64], idx: &[usize]) -> Result<(Tensor, Tensor)> {
    let rows: Vec<Vec<f64>> = idx.iter().map(|&i| states.row_slice(i).to_vec()).collect();
    let y = idx.iter().map(|&i| targets[i]).collect();
    Ok((Tensor::stack_rows(&rows)?, Tensor::matrix(idx.len(), 1, y)?))
}

fn mse_tape(tape: &mut Tape, v: Var, y: Tensor) -> Result<Var> {
    let y = tape.constant(y);
    let d = tape.sub(v, y)?;
    let sq = tape.square(d);
    Ok(tape.mean(sq))
}

/// Mean squared error of a conventional value network.
pub fn vfa_mse(vfa: &MlpParams, states: &Tensor, targets: &[f64]) -> Result<f64> {
    check_targets(states, targets)?;
    let v = vfa.forward(states)?;
    Ok(v.data().iter().zip(targets).map(|(a, b)| (a - b).powi(2)).sum::<f64>() / targets.len() as f64)
}

/// Mean squared error of `V(s, χ)` with one embedding for every state.
pub fn pevfa_mse(pevfa: &PeVFAParams, embedding: &[f64], states: &Tensor, targets: &[f64]) -> Result<f64> {
    check_targets(states, targets)?;
    let v = pevfa.forward_shared(states, embedding)?;
    Ok(v.iter().zip(targets).map(|(a, b)| (a - b).powi(2)).sum::<f64>() / targets.len() as f64)
}

/// Shuffled minibatch regression shared by the VFA and the current-policy
/// PeVFA update. `step` builds the loss on a fresh tape and applies it.
fn regress(
    n: usize,
    epochs: usize,
    minibatch: usize,
    rng: &mut impl Rng,
    mut step: impl FnMut(&[usize]) -> Result<()>,
) -> Result<()> {
    let mut order: Vec<usize> = (0..n).collect();
    for _ in 0..epochs {
        order.shuffle(rng);
        for idx in order.chunks(minibatch.max(1)) {
            step(idx)?;
        }
    }
    Ok(())
}

/// MSE regression of `vfa` onto `targets` by Adam.
pub fn vfa_update(
    vfa: &mut MlpParams,
    opt: &mut AdamState,
    states: &Tensor,
    targets: &[f64],
    epochs: usize,
    minibatch: usize,
    rng: &mut impl Rng,
) -> Result<()> {
    check_targets(states, targets)?;
    regress(targets.len(), epochs, minibatch, rng, |idx| {
        let (x, y) = gather(states, targets, idx)?;
        let mut tape = Tape::new();
        let b = vfa.bind(&mut tape);
        let xv = tape.constant(x);
        let v = b.forward(&mut tape, xv)?;
        let loss = mse_tape(&mut tape, v, y)?;
        let g = tape.backward(loss)?;
        opt.step(vfa, &g.collect(&tape, &b.vars()))
    })
}

/// Regression of `V(s, χ_π)` onto the current policy's returns, starting
/// from the present parameters. Returns the losses before and after.
#[allow(clippy::too_many_arguments)]
pub fn pevfa_current_update(
    pevfa: &mut PeVFAParams,
    opt: &mut AdamState,
    embedding: &[f64],
    states: &Tensor,
    targets: &[f64],
    epochs: usize,
    minibatch: usize,
    rng: &mut impl Rng,
) -> Result<(f64, f64)> {
    let pre = pevfa_mse(pevfa, embedding, states, targets)?;
    let emb = Tensor::row(embedding.to_vec());
    regress(targets.len(), epochs, minibatch, rng, |idx| {
        let (x, y) = gather(states, targets, idx)?;
        let mut tape = Tape::new();
        let b = pevfa.bind(&mut tape);
        let xv = tape.constant(x);
        let ev = tape.constant(emb.clone());
        let v = b.forward_shared(&mut tape, xv, ev)?;
        let loss = mse_tape(&mut tape, v, y)?;
        let g = tape.backward(loss)?;
        opt.step(pevfa, &g.collect(&tape, &b.vars()))
    })?;
    let post = pevfa_mse(pevfa, embedding, states, targets)?;
    Ok((pre, post))
}

#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct HistoricalStats {
    pub steps: usize,
    pub first: StepLosses,
    pub mean_value: f64,
    pub mean_total: f64,
}

/// `steps` joint gradient steps of the PeVFA (and a learnable
/// representation) on batches drawn across all stored policies.
pub fn pevfa_historical_update(
    pevfa: &mut PeVFAParams,
    opt: &mut AdamState,
    repr: &mut Representation,
    records: &[PolicyRecord],
    spec: &BatchSpec,
    steps: usize,
    rng: &mut impl Rng,
) -> Result<HistoricalStats> {
    let mut stats = HistoricalStats::default();
    if records.is_empty() || steps == 0 {
        return Ok(stats);
    }
    if repr.config.loss == crate::policy_repr::ReprLoss::Cl && records.len() < 2 {
        log::debug!("contrastive step needs two stored policies; skipping");
        return Ok(stats);
    }
    for k in 0..steps {
        let l = representation_step(repr, pevfa, Some(opt), records, spec, rng)?;
        if k == 0 {
            stats.first = l;
        }
        stats.mean_value += l.value;
        stats.mean_total += l.value + l.representation();
    }
    stats.steps = steps;
    stats.mean_value /= steps as f64;
    stats.mean_total /= steps as f64;
    Ok(stats)
}
