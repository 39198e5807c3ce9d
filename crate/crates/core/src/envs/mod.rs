//! Desk-scale environments, rollouts and the synthetic policy population.

mod point_mass;
mod tabular;
mod walker;

use std::io::Write;

use rand::Rng;

pub use point_mass::{PointMass, GOAL};
pub use tabular::{softmax_policy, solve_linear, PolicyTable, TabularMdp};
pub use walker::{utility, walker_features, PointWalker};

use crate::autodiff::Tensor;
use crate::error::{invalid, shape_err, Error, Result};
use crate::nets::{self, Activation, GaussianPolicy, Layer, MlpParams};

pub trait Environment {
    fn obs_dim(&self) -> usize;
    fn act_dim(&self) -> usize;
    fn reset(&mut self, rng: &mut dyn rand::RngCore) -> Vec<f64>;
    /// Advances one step, returning `(next features, reward)`.
    fn step(&mut self, action: &[f64]) -> Result<(Vec<f64>, f64)>;
}

/// Rejects non-finite actions and clamps the rest into `[-1, 1]`.
pub(crate) fn check_action(env: &str, action: &[f64], dim: usize) -> Result<Vec<f64>> {
    if action.len() != dim {
        return shape_err("env_step", format!("{env} expects {dim} action dims, got {}", action.len()));
    }
    if action.iter().any(|a| !a.is_finite()) {
        return Err(Error::NonFinite(format!("{env} action {action:?}")));
    }
    Ok(action.iter().map(|a| a.clamp(-1.0, 1.0)).collect())
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum EnvKind {
    PointWalker,
    PointMass,
}

impl EnvKind {
    pub fn name(self) -> &'static str {
        match self {
            EnvKind::PointWalker => "point_walker",
            EnvKind::PointMass => "point_mass",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "point_walker" => Some(EnvKind::PointWalker),
            "point_mass" => Some(EnvKind::PointMass),
            _ => None,
        }
    }

    pub fn default_horizon(self) -> usize {
        match self {
            EnvKind::PointWalker => 10,
            EnvKind::PointMass => 50,
        }
    }

    pub fn obs_dim(self) -> usize {
        6
    }

    pub fn act_dim(self) -> usize {
        2
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct EnvConfig {
    pub kind: EnvKind,
    pub horizon: usize,
    pub episodes: usize,
    pub seed: u64,
    /// Point-mass start box half-width.
    pub start_spread: f64,
    /// Walker start box half-width around the origin; 0 starts every
    /// episode at the origin.
    pub walker_spread: f64,
}

impl EnvConfig {
    pub fn new(kind: EnvKind) -> Self {
        Self {
            kind,
            horizon: kind.default_horizon(),
            episodes: 1,
            seed: 0,
            start_spread: 1.0,
            walker_spread: 0.0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.horizon == 0 || self.episodes == 0 {
            return invalid("horizon and episodes must be at least 1");
        }
        if !(self.start_spread >= 0.0 && self.walker_spread >= 0.0) {
            return invalid("start spreads must be non-negative");
        }
        Ok(())
    }

    pub fn make(&self) -> Box<dyn Environment> {
        match self.kind {
            EnvKind::PointWalker => Box::new(PointWalker::with_spread(self.walker_spread)),
            EnvKind::PointMass => Box::new(PointMass::new(self.start_spread)),
        }
    }
}

/// One chosen action and its log-density under the behaviour policy
/// (0 for deterministic actors).
#[derive(Clone, Debug, PartialEq)]
pub struct ActionSample {
    pub action: Vec<f64>,
    pub log_prob: f64,
}

pub trait Actor {
    fn obs_dim(&self) -> usize;
    fn act_dim(&self) -> usize;
    fn act(&self, obs: &[f64], rng: &mut dyn rand::RngCore) -> Result<ActionSample>;
}

/// Deterministic network policy; the raw output is the action.
impl Actor for MlpParams {
    fn obs_dim(&self) -> usize {
        self.input_dim()
    }

    fn act_dim(&self) -> usize {
        self.output_dim()
    }

    fn act(&self, obs: &[f64], _rng: &mut dyn rand::RngCore) -> Result<ActionSample> {
        Ok(ActionSample {
            action: self.forward_row(obs)?,
            log_prob: 0.0,
        })
    }
}

impl Actor for GaussianPolicy {
    fn obs_dim(&self) -> usize {
        GaussianPolicy::obs_dim(self)
    }

    fn act_dim(&self) -> usize {
        GaussianPolicy::act_dim(self)
    }

    fn act(&self, obs: &[f64], mut rng: &mut dyn rand::RngCore) -> Result<ActionSample> {
        let (mean, log_std) = self.forward(obs)?;
        let action = nets::sample(&mean, &log_std, &mut rng);
        let log_prob = nets::log_prob(&mean, &log_std, &action);
        Ok(ActionSample { action, log_prob })
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Trajectory {
    pub states: Vec<Vec<f64>>,
    pub actions: Vec<Vec<f64>>,
    pub rewards: Vec<f64>,
    pub log_probs: Vec<f64>,
    pub dones: Vec<bool>,
    pub final_state: Vec<f64>,
}

impl Trajectory {
    pub fn len(&self) -> usize {
        self.rewards.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rewards.is_empty()
    }

    pub fn undiscounted_return(&self) -> f64 {
        self.rewards.iter().sum()
    }
}

/// Runs `episodes` episodes of `horizon` steps each. Episodes end only at
/// the horizon, and that last step is flagged done.
pub fn rollout(
    env: &EnvConfig,
    actor: &dyn Actor,
    episodes: usize,
    horizon: usize,
    rng: &mut dyn rand::RngCore,
) -> Result<Vec<Trajectory>> {
    if episodes == 0 || horizon == 0 {
        return invalid("rollout needs at least one episode of at least one step");
    }
    if actor.obs_dim() != env.kind.obs_dim() || actor.act_dim() != env.kind.act_dim() {
        return shape_err(
            "rollout",
            format!(
                "policy maps {} -> {}, {} needs {} -> {}",
                actor.obs_dim(),
                actor.act_dim(),
                env.kind.name(),
                env.kind.obs_dim(),
                env.kind.act_dim()
            ),
        );
    }
    let mut e = env.make();
    let mut out = Vec::with_capacity(episodes);
    for _ in 0..episodes {
        let mut obs = e.reset(rng);
        let mut traj = Trajectory {
            states: Vec::with_capacity(horizon),
            actions: Vec::with_capacity(horizon),
            rewards: Vec::with_capacity(horizon),
            log_probs: Vec::with_capacity(horizon),
            dones: Vec::with_capacity(horizon),
            final_state: Vec::new(),
        };
        for t in 0..horizon {
            let ActionSample { action, log_prob } = actor.act(&obs, rng)?;
            let (next, reward) = e.step(&action)?;
            traj.states.push(obs);
            traj.actions.push(action);
            traj.rewards.push(reward);
            traj.log_probs.push(log_prob);
            traj.dones.push(t + 1 == horizon);
            obs = next;
        }
        traj.final_state = obs;
        out.push(traj);
    }
    Ok(out)
}

/// Synthetic walker policies: deterministic `6 → 2 → 2 → 2` tanh networks,
/// weights `U(-1, 1)`, biases `U(-0.2, 0.2)`.
pub fn synth_policy_population(n: usize, rng: &mut impl Rng) -> Result<Vec<MlpParams>> {
    if n == 0 {
        return invalid("population size must be at least 1");
    }
    let sizes = [PointWalker::OBS_DIM, 2, 2, PointWalker::ACT_DIM];
    (0..n)
        .map(|_| {
            let layers = sizes
                .windows(2)
                .map(|w| {
                    let weight = Tensor::from_fn(w[1], w[0], |_, _| rng.random_range(-1.0..1.0));
                    let bias = Tensor::vector((0..w[1]).map(|_| rng.random_range(-0.2..0.2)).collect());
                    Layer::new(weight, bias, Activation::Tanh)
                })
                .collect::<Result<Vec<_>>>()?;
            MlpParams::new(layers)
        })
        .collect()
}

/// CSV with columns `episode,step,state_0..state_k,action_0..action_m,reward`.
pub fn write_trajectories_csv(w: &mut impl Write, trajs: &[Trajectory]) -> Result<()> {
    let Some(first) = trajs.iter().find(|t| !t.is_empty()) else {
        return invalid("no transitions to write");
    };
    let (sd, ad) = (first.states[0].len(), first.actions[0].len());
    write!(w, "episode,step")?;
    for i in 0..sd {
        write!(w, ",state_{i}")?;
    }
    for i in 0..ad {
        write!(w, ",action_{i}")?;
    }
    writeln!(w, ",reward")?;
    for (ep, t) in trajs.iter().enumerate() {
        for step in 0..t.len() {
            write!(w, "{ep},{step}")?;
            for v in &t.states[step] {
                write!(w, ",{v}")?;
            }
            for v in &t.actions[step] {
                write!(w, ",{v}")?;
            }
            writeln!(w, ",{}", t.rewards[step])?;
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests;
