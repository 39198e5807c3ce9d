//! PPO and PPO with a policy-extended value function, under generalized
//! policy iteration with Monte Carlo value targets.

mod buffer;
mod ppo;
mod returns;
mod train;
mod value;

use std::io::Write;

pub use buffer::PolicyBuffer;
pub use ppo::{
    batch_log_probs, clipped_objective, ppo_policy_update, ppo_surrogate, PpoStats, RolloutBatch,
};
pub use returns::{gae, mc_returns};
pub use train::{run_ppo, run_ppo_pevfa, Algo, PeVfaCritic, Trainer, VfaCritic};
pub use value::{
    pevfa_current_update, pevfa_historical_update, pevfa_mse, vfa_mse, vfa_update, HistoricalStats,
};

use crate::error::{invalid, Result};
use crate::policy_repr::{BatchSpec, ReprConfig};

#[derive(Clone, Debug, PartialEq)]
pub struct TrainConfig {
    pub iterations: usize,
    /// Environment steps collected per iteration (rounded up to whole episodes).
    pub steps_per_iter: usize,
    pub policy_hidden: Vec<usize>,
    pub vfa_hidden: Vec<usize>,
    pub pevfa_stream: usize,
    pub pevfa_trunk: Vec<usize>,
    pub policy_lr: f64,
    pub value_lr: f64,
    pub clip: f64,
    pub gamma: f64,
    pub lambda: f64,
    pub minibatch: usize,
    pub actor_epochs: usize,
    pub critic_epochs: usize,
    /// States per historical PeVFA batch.
    pub historical_batch: usize,
    /// Historical gradient steps per iteration.
    pub historical_steps: usize,
    /// Run historical training every this many iterations.
    pub historical_every: usize,
    /// Buffer capacity in environment steps.
    pub buffer_capacity: usize,
    pub recency: f64,
    pub zero_embed_stream: bool,
    /// Record wall-clock seconds in the log (breaks byte reproducibility).
    pub timing: bool,
    pub repr: Option<ReprConfig>,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            iterations: 200,
            steps_per_iter: 2000,
            policy_hidden: vec![64, 64],
            vfa_hidden: vec![128, 128],
            pevfa_stream: 64,
            pevfa_trunk: vec![128],
            policy_lr: 1e-4,
            value_lr: 1e-3,
            clip: 0.2,
            gamma: 0.99,
            lambda: 0.95,
            minibatch: 128,
            actor_epochs: 10,
            critic_epochs: 10,
            historical_batch: 64,
            historical_steps: 200,
            historical_every: 1,
            buffer_capacity: 50_000,
            recency: 0.0,
            zero_embed_stream: false,
            timing: false,
            repr: None,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.clip > 0.0 && self.clip < 1.0) {
            return invalid(format!("clip {} outside (0, 1)", self.clip));
        }
        if !(0.0..=1.0).contains(&self.gamma) || !(0.0..=1.0).contains(&self.lambda) {
            return invalid("gamma and lambda must lie in [0, 1]");
        }
        if self.steps_per_iter == 0
            || self.minibatch == 0
            || self.historical_batch == 0
            || self.historical_every == 0
            || self.buffer_capacity == 0
            || self.pevfa_stream == 0
        {
            return invalid("sizes, capacities and frequencies must be positive");
        }
        if self.policy_lr <= 0.0 || self.value_lr <= 0.0 {
            return invalid("learning rates must be positive");
        }
        if self.recency < 0.0 {
            return invalid("recency weight must be non-negative");
        }
        if let Some(r) = &self.repr {
            r.validate()?;
        }
        Ok(())
    }

    pub fn batch_spec(&self) -> BatchSpec {
        BatchSpec {
            policies: self.repr.as_ref().map_or(16, |r| r.policy_batch),
            samples: self.historical_batch,
            recency: self.recency,
        }
    }
}

/// One row per GPI iteration. Columns that do not apply to the run are NaN.
#[derive(Clone, Debug, PartialEq)]
pub struct IterationLog {
    pub iteration: usize,
    pub env_steps: usize,
    pub avg_return: f64,
    pub policy_loss: f64,
    pub vfa_loss_pre: f64,
    pub vfa_loss_post: f64,
    pub pevfa_loss_pre: f64,
    pub pevfa_loss_post: f64,
    pub repr_loss: f64,
    pub wallclock_s: f64,
}

pub const ITERATION_LOG_HEADER: &str = "iteration,env_steps,avg_return,policy_loss,vfa_loss_pre,vfa_loss_post,pevfa_loss_pre,pevfa_loss_post,repr_loss,wallclock_s";

pub fn write_log_header(w: &mut impl Write) -> Result<()> {
    writeln!(w, "{ITERATION_LOG_HEADER}")?;
    Ok(())
}

pub fn write_log_row(w: &mut impl Write, r: &IterationLog) -> Result<()> {
    writeln!(
        w,
        "{},{},{},{},{},{},{},{},{},{}",
        r.iteration,
        r.env_steps,
        r.avg_return,
        r.policy_loss,
        r.vfa_loss_pre,
        r.vfa_loss_post,
        r.pevfa_loss_pre,
        r.pevfa_loss_post,
        r.repr_loss,
        r.wallclock_s
    )?;
    Ok(())
}

pub fn write_log_csv(w: &mut impl Write, rows: &[IterationLog]) -> Result<()> {
    write_log_header(w)?;
    for r in rows {
        write_log_row(w, r)?;
    }
    Ok(())
}
