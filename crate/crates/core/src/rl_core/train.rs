use std::time::Instant;

use super::buffer::PolicyBuffer;
use super::ppo::{ppo_policy_update, RolloutBatch};
use super::returns::{gae, mc_returns};
use super::value::{pevfa_current_update, pevfa_historical_update, vfa_mse, vfa_update};
use super::{IterationLog, TrainConfig};
use crate::autodiff::{AdamConfig, AdamState, Tensor};
use crate::envs::{rollout, EnvConfig};
use crate::error::{invalid, Result};
use crate::nets::{init_vfa, GaussianPolicy, MlpParams, PeVFAParams};
use crate::policy_repr::{PolicyRecord, ReprConfig, Representation};
use crate::seeding::{Rng, SeedStream};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Algo {
    Ppo,
    PpoPevfa,
}

impl Algo {
    pub fn name(self) -> &'static str {
        match self {
            Algo::Ppo => "ppo",
            Algo::PpoPevfa => "ppo-pevfa",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "ppo" => Some(Algo::Ppo),
            "ppo-pevfa" => Some(Algo::PpoPevfa),
            _ => None,
        }
    }
}

/// Conventional critic `V_φ(s)`.
#[derive(Clone, Debug)]
pub struct VfaCritic {
    pub net: MlpParams,
    pub opt: AdamState,
    rng: Rng,
}

impl VfaCritic {
    pub fn new(net: MlpParams, lr: f64, rng: Rng) -> Self {
        let opt = AdamState::new(AdamConfig::with_lr(lr), &net);
        Self { net, opt, rng }
    }

    /// Loss on the new data, regression, loss again.
    pub fn fit(&mut self, states: &Tensor, returns: &[f64], cfg: &TrainConfig) -> Result<(f64, f64)> {
        let pre = vfa_mse(&self.net, states, returns)?;
        vfa_update(
            &mut self.net,
            &mut self.opt,
            states,
            returns,
            cfg.critic_epochs,
            cfg.minibatch,
            &mut self.rng,
        )?;
        Ok((pre, vfa_mse(&self.net, states, returns)?))
    }
}

#[derive(Clone, Debug)]
pub struct PeVfaOutcome {
    pub pre: f64,
    pub post: f64,
    pub repr_loss: f64,
    pub embedding: Vec<f64>,
}

/// Policy-extended critic `𝕍_θ(s, χ_π)` with its representation and the
/// buffer of past policies.
#[derive(Clone, Debug)]
pub struct PeVfaCritic {
    pub net: PeVFAParams,
    pub opt: AdamState,
    pub repr: Representation,
    pub buffer: PolicyBuffer,
    rng: Rng,
    hist_rng: Rng,
}

impl PeVfaCritic {
    pub fn new(
        cfg: &TrainConfig,
        repr_cfg: ReprConfig,
        state_dim: usize,
        act_dim: usize,
        policy_sizes: &[usize],
        seeds: &SeedStream,
    ) -> Result<Self> {
        let repr = Representation::new(
            repr_cfg,
            state_dim,
            act_dim,
            policy_sizes,
            seeds.master(),
            &mut seeds.rng("repr-init"),
        )?;
        let mut net = PeVFAParams::init(
            state_dim,
            repr.embed_dim(),
            cfg.pevfa_stream,
            &cfg.pevfa_trunk,
            &mut seeds.rng("value-init"),
        )?;
        if cfg.zero_embed_stream {
            net.zero_embedding_stream();
        }
        let opt = AdamState::new(AdamConfig::with_lr(cfg.value_lr), &net);
        Ok(Self {
            net,
            opt,
            repr,
            buffer: PolicyBuffer::new(cfg.buffer_capacity)?,
            rng: seeds.rng("critic"),
            hist_rng: seeds.rng("historical"),
        })
    }

    /// Measures the generalized loss on the new policy, stores it, trains on
    /// the buffer (every `historical_every` iterations) and then on the new
    /// policy's data alone.
    pub fn fit(&mut self, record: PolicyRecord, states: &Tensor, cfg: &TrainConfig) -> Result<PeVfaOutcome> {
        let returns = record.returns.clone();
        let iteration = record.iteration;
        let before = self.repr.embed(&record)?;
        let pre = super::value::pevfa_mse(&self.net, &before, states, &returns)?;
        self.buffer.push(record)?;
        let mut repr_loss = f64::NAN;
        if iteration % cfg.historical_every == 0 {
            let stats = pevfa_historical_update(
                &mut self.net,
                &mut self.opt,
                &mut self.repr,
                self.buffer.records(),
                &cfg.batch_spec(),
                cfg.historical_steps,
                &mut self.hist_rng,
            )?;
            if stats.steps > 0 {
                repr_loss = stats.mean_total;
            }
        }
        let current = self.buffer.last().expect("record just pushed");
        let embedding = self.repr.embed(current)?;
        let (_, post) = pevfa_current_update(
            &mut self.net,
            &mut self.opt,
            &embedding,
            states,
            &returns,
            cfg.critic_epochs,
            cfg.minibatch,
            &mut self.rng,
        )?;
        Ok(PeVfaOutcome {
            pre,
            post,
            repr_loss,
            embedding,
        })
    }
}

/// One GPI training run. With both critics present the PeVFA is a shadow:
/// it is trained and logged but advantages come from the VFA.
#[derive(Clone, Debug)]
pub struct Trainer {
    pub config: TrainConfig,
    pub env: EnvConfig,
    pub policy: GaussianPolicy,
    pub policy_opt: AdamState,
    pub vfa: Option<VfaCritic>,
    pub pevfa: Option<PeVfaCritic>,
    sample_rng: Rng,
    actor_rng: Rng,
    iteration: usize,
    env_steps: usize,
}

impl Trainer {
    pub fn new(config: TrainConfig, env: EnvConfig, algo: Algo, seed: u64) -> Result<Self> {
        Self::build(config, env, algo, false, seed)
    }

    /// PPO with a conventional critic plus a shadow PeVFA that never feeds
    /// the policy update.
    pub fn with_shadow(config: TrainConfig, env: EnvConfig, seed: u64) -> Result<Self> {
        Self::build(config, env, Algo::Ppo, true, seed)
    }

    fn build(config: TrainConfig, env: EnvConfig, algo: Algo, shadow: bool, seed: u64) -> Result<Self> {
        config.validate()?;
        env.validate()?;
        let seeds = SeedStream::new(seed);
        let (sd, ad) = (env.kind.obs_dim(), env.kind.act_dim());
        let policy = GaussianPolicy::init(sd, &config.policy_hidden, ad, &mut seeds.rng("policy-init"))?;
        let policy_opt = AdamState::new(AdamConfig::with_lr(config.policy_lr), &policy);
        let vfa = if algo == Algo::Ppo {
            let net = init_vfa(sd, &config.vfa_hidden, &mut seeds.rng("value-init"))?;
            Some(VfaCritic::new(net, config.value_lr, seeds.rng("critic")))
        } else {
            None
        };
        let pevfa = if algo == Algo::PpoPevfa || shadow {
            let Some(rc) = config.repr.clone() else {
                return invalid("a PeVFA run needs a representation config");
            };
            let sizes = policy.mean.sizes();
            let shadow_seeds = if shadow { SeedStream::new(crate::seeding::derive_seed(seed, "shadow", 0)) } else { seeds };
            Some(PeVfaCritic::new(&config, rc, sd, ad, &sizes, &shadow_seeds)?)
        } else {
            if config.repr.is_some() {
                return invalid("representation options need the ppo-pevfa algorithm");
            }
            None
        };
        Ok(Self {
            config,
            env,
            policy,
            policy_opt,
            vfa,
            pevfa,
            sample_rng: seeds.rng("sampling"),
            actor_rng: seeds.rng("actor"),
            iteration: 0,
            env_steps: 0,
        })
    }

    pub fn iteration(&self) -> usize {
        self.iteration
    }

    pub fn env_steps(&self) -> usize {
        self.env_steps
    }

    /// Rollout, value approximation, advantage estimation, policy improvement.
    pub fn iterate(&mut self) -> Result<IterationLog> {
        let start = Instant::now();
        let cfg = &self.config;
        let h = self.env.horizon;
        let episodes = cfg.steps_per_iter.div_ceil(h);
        let trajs = rollout(&self.env, &self.policy, episodes, h, &mut self.sample_rng)?;
        let mut states = Vec::with_capacity(episodes * h);
        let mut actions = Vec::with_capacity(episodes * h);
        let mut returns = Vec::with_capacity(episodes * h);
        for t in &trajs {
            states.extend(t.states.iter().cloned());
            actions.extend(t.actions.iter().cloned());
            returns.extend(mc_returns(&t.rewards, cfg.gamma)?);
        }
        let avg_return = trajs.iter().map(|t| t.undiscounted_return()).sum::<f64>() / trajs.len() as f64;
        let x = Tensor::stack_rows(&states)?;

        let mut log = IterationLog {
            iteration: self.iteration,
            env_steps: self.env_steps + states.len(),
            avg_return,
            policy_loss: f64::NAN,
            vfa_loss_pre: f64::NAN,
            vfa_loss_post: f64::NAN,
            pevfa_loss_pre: f64::NAN,
            pevfa_loss_post: f64::NAN,
            repr_loss: f64::NAN,
            wallclock_s: 0.0,
        };
        let mut values = None;
        if let Some(v) = &mut self.vfa {
            let (pre, post) = v.fit(&x, &returns, cfg)?;
            log.vfa_loss_pre = pre;
            log.vfa_loss_post = post;
            values = Some(v.net.forward(&x)?.into_data());
        }
        if let Some(p) = &mut self.pevfa {
            let id = self.iteration as u64;
            let record = PolicyRecord::new(
                id,
                self.iteration,
                self.policy.clone(),
                states.clone(),
                actions.clone(),
                returns.clone(),
                avg_return,
            )?;
            let out = p.fit(record, &x, cfg)?;
            log.pevfa_loss_pre = out.pre;
            log.pevfa_loss_post = out.post;
            log.repr_loss = out.repr_loss;
            if values.is_none() {
                values = Some(p.net.forward_shared(&x, &out.embedding)?);
            }
        }
        let values = values.expect("a critic is always present");

        let mut advantages = Vec::with_capacity(values.len());
        let mut offset = 0;
        for t in &trajs {
            let n = t.len();
            let mut v = values[offset..offset + n].to_vec();
            v.push(0.0);
            advantages.extend(gae(&t.rewards, &v, cfg.gamma, cfg.lambda)?);
            offset += n;
        }
        let batch = RolloutBatch::new(&self.policy, &states, &actions, returns, advantages)?;
        let stats = ppo_policy_update(
            &mut self.policy,
            &mut self.policy_opt,
            &batch,
            cfg.clip,
            cfg.actor_epochs,
            cfg.minibatch,
            &mut self.actor_rng,
        )?;
        log.policy_loss = stats.loss;
        if cfg.timing {
            log.wallclock_s = start.elapsed().as_secs_f64();
        }
        self.iteration += 1;
        self.env_steps = log.env_steps;
        Ok(log)
    }

    /// Runs the remaining iterations, handing each row to `on_row` as soon as
    /// it exists so a failing run still leaves its earlier rows behind.
    pub fn run(&mut self, mut on_row: impl FnMut(&IterationLog) -> Result<()>) -> Result<Vec<IterationLog>> {
        let mut rows = Vec::with_capacity(self.config.iterations);
        while self.iteration < self.config.iterations {
            let row = self.iterate()?;
            on_row(&row)?;
            rows.push(row);
        }
        Ok(rows)
    }
}

pub fn run_ppo(config: TrainConfig, env: EnvConfig, seed: u64) -> Result<Vec<IterationLog>> {
    Trainer::new(config, env, Algo::Ppo, seed)?.run(|_| Ok(()))
}

pub fn run_ppo_pevfa(config: TrainConfig, env: EnvConfig, seed: u64) -> Result<Vec<IterationLog>> {
    Trainer::new(config, env, Algo::PpoPevfa, seed)?.run(|_| Ok(()))
}
