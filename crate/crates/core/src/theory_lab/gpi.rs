use rand::Rng;
use rand_distr::StandardNormal;

use super::measures::{approx_loss, lipschitz_estimate, table_distance};
use super::records::{LossRecord, OracleKind};
use crate::autodiff::{AdamConfig, AdamState, Tape, Tensor};
use crate::envs::{softmax_policy, PolicyTable, TabularMdp};
use crate::error::{invalid, Result};
use crate::nets::PeVFAParams;
use crate::seeding::SeedStream;

/// Generalized policy iteration on a random tabular MDP with a PeVFA
/// over one-hot states and flattened action-probability tables.
#[derive(Clone, Debug, PartialEq)]
pub struct TabularGpiConfig {
    pub states: usize,
    pub actions: usize,
    pub gamma: f64,
    pub iterations: usize,
    /// Logit step along the approximate action values.
    pub step_size: f64,
    pub stream: usize,
    pub trunk: Vec<usize>,
    pub lr: f64,
    /// Full-batch gradient steps per iteration over all stored policies.
    pub train_steps: usize,
    pub perturbations: usize,
    pub perturb_scale: f64,
}

impl Default for TabularGpiConfig {
    fn default() -> Self {
        Self {
            states: 5,
            actions: 3,
            gamma: 0.9,
            iterations: 50,
            step_size: 0.5,
            stream: 32,
            trunk: vec![64],
            lr: 1e-3,
            train_steps: 50,
            perturbations: 8,
            perturb_scale: 1e-2,
        }
    }
}

#[derive(Clone, Debug)]
pub struct TabularGpiRun {
    pub mdp: TabularMdp,
    pub records: Vec<LossRecord>,
    /// Sampled Lipschitz estimate of `f_{θ_t}` around `π_t`, per iteration.
    pub lipschitz: Vec<f64>,
}

fn one_hot(n: usize) -> Tensor {
    Tensor::from_fn(n, n, |i, j| if i == j { 1.0 } else { 0.0 })
}

fn flat(pi: &PolicyTable) -> Vec<f64> {
    pi.iter().flatten().copied().collect()
}

fn predict(net: &PeVFAParams, pi: &PolicyTable) -> Result<Vec<f64>> {
    net.forward_shared(&one_hot(pi.len()), &flat(pi))
}

fn loss(net: &PeVFAParams, mdp: &TabularMdp, pi: &PolicyTable) -> Result<f64> {
    approx_loss(&predict(net, pi)?, &mdp.true_values(pi)?)
}

pub fn run_tabular_gpi(cfg: &TabularGpiConfig, seed: u64) -> Result<TabularGpiRun> {
    if cfg.iterations == 0 || cfg.states == 0 || cfg.actions == 0 {
        return invalid("tabular GPI needs states, actions and iterations");
    }
    let seeds = SeedStream::new(seed);
    let (n, k) = (cfg.states, cfg.actions);
    let mdp = TabularMdp::random(n, k, cfg.gamma, &mut seeds.rng("mdp"))?;
    let mut net = PeVFAParams::init(n, n * k, cfg.stream, &cfg.trunk, &mut seeds.rng("value-init"))?;
    let mut opt = AdamState::new(AdamConfig::with_lr(cfg.lr), &net);
    let mut lip_rng = seeds.rng("lipschitz");
    let mut init = seeds.rng("policy-init");
    let mut logits: Vec<Vec<f64>> = (0..n)
        .map(|_| (0..k).map(|_| init.random_range(-1.0..1.0)).collect())
        .collect();
    let mut pi = softmax_policy(&logits);

    // Training rows accumulated over every policy met so far.
    let mut states: Vec<Vec<f64>> = Vec::new();
    let mut embeds: Vec<Vec<f64>> = Vec::new();
    let mut targets: Vec<f64> = Vec::new();
    let eye = one_hot(n);

    let mut records = Vec::with_capacity(cfg.iterations);
    let mut lipschitz = Vec::with_capacity(cfg.iterations);
    for t in 0..cfg.iterations {
        let v = mdp.true_values(&pi)?;
        let f_pre = approx_loss(&predict(&net, &pi)?, &v)?;
        for (s, target) in v.iter().enumerate() {
            states.push(eye.row_slice(s).to_vec());
            embeds.push(flat(&pi));
            targets.push(*target);
        }
        let x = Tensor::stack_rows(&states)?;
        let e = Tensor::stack_rows(&embeds)?;
        let y = Tensor::matrix(targets.len(), 1, targets.clone())?;
        for _ in 0..cfg.train_steps {
            let mut tape = Tape::new();
            let b = net.bind(&mut tape);
            let xv = tape.constant(x.clone());
            let ev = tape.constant(e.clone());
            let yv = tape.constant(y.clone());
            let out = b.forward(&mut tape, xv, ev)?;
            let d = tape.sub(out, yv)?;
            let sq = tape.square(d);
            let l = tape.mean(sq);
            let g = tape.backward(l)?;
            opt.step(&mut net, &g.collect(&tape, &b.vars()))?;
        }
        let v_hat = predict(&net, &pi)?;
        let f_post = approx_loss(&v_hat, &v)?;

        let q = mdp.q_values(&v_hat);
        for (row, qs) in logits.iter_mut().zip(&q) {
            for (l, qa) in row.iter_mut().zip(qs) {
                *l += cfg.step_size * qa;
            }
        }
        let next = softmax_policy(&logits);
        let v_next = mdp.true_values(&next)?;
        let f_next_pre = approx_loss(&predict(&net, &next)?, &v_next)?;

        let cur = logits_of(&pi);
        let scale = cfg.perturb_scale;
        let l_hat = lipschitz_estimate(
            &cur,
            cfg.perturbations.max(2),
            &mut lip_rng,
            |p, r| {
                p.iter()
                    .map(|row| {
                        row.iter()
                            .map(|x| {
                                let z: f64 = r.sample(StandardNormal);
                                x + scale * z
                            })
                            .collect()
                    })
                    .collect::<Vec<Vec<f64>>>()
            },
            |a, b| table_distance(&softmax_policy(a), &softmax_policy(b)),
            |p| loss(&net, &mdp, &softmax_policy(p)),
        )?;
        lipschitz.push(l_hat);

        records.push(LossRecord {
            iteration: t,
            f_pre,
            f_post,
            f_next_pre,
            d: table_distance(&pi, &next)?,
            value_gap: Some(approx_loss(&v, &v_next)?),
            cross: Some(approx_loss(&v_hat, &v_next)?),
            oracle: OracleKind::ExactTabular,
        });
        pi = next;
    }
    Ok(TabularGpiRun {
        mdp,
        records,
        lipschitz,
    })
}

/// Log-probabilities, which reproduce the table under softmax.
fn logits_of(pi: &PolicyTable) -> Vec<Vec<f64>> {
    pi.iter().map(|row| row.iter().map(|p| p.ln()).collect()).collect()
}
