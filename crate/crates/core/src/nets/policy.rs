use rand::Rng;
use rand_distr::StandardNormal;

use super::mlp::{Activation, BoundMlp, MlpParams};
use crate::autodiff::{ParamSet, Tape, Tensor, Var};
use crate::error::{invalid, shape_err, Result};

pub const LOG_STD_MIN: f64 = -20.0;
pub const LOG_STD_MAX: f64 = 2.0;

const HALF_LN_TWO_PI: f64 = 0.918_938_533_204_672_7;

/// Diagonal Gaussian policy: tanh-bounded mean network plus a
/// state-independent log standard deviation.
#[derive(Clone, Debug, PartialEq)]
pub struct GaussianPolicy {
    pub mean: MlpParams,
    pub log_std: Tensor,
}

impl GaussianPolicy {
    pub fn new(mean: MlpParams, log_std: Vec<f64>) -> Result<Self> {
        if mean.output_dim() != log_std.len() {
            return shape_err(
                "gaussian_policy",
                format!("{} mean outputs vs {} log-std entries", mean.output_dim(), log_std.len()),
            );
        }
        if mean.layers().last().map(|l| l.activation) != Some(Activation::Tanh) {
            return invalid("policy mean network must end in tanh");
        }
        Ok(Self {
            mean,
            log_std: Tensor::row(log_std),
        })
    }

    /// ReLU hidden layers, tanh output, log-std 0.
    pub fn init(obs_dim: usize, hidden: &[usize], act_dim: usize, rng: &mut impl Rng) -> Result<Self> {
        let mut sizes = vec![obs_dim];
        sizes.extend_from_slice(hidden);
        sizes.push(act_dim);
        let mean = MlpParams::init(&sizes, Activation::Relu, Activation::Tanh, rng)?;
        Self::new(mean, vec![0.0; act_dim])
    }

    pub fn obs_dim(&self) -> usize {
        self.mean.input_dim()
    }

    pub fn act_dim(&self) -> usize {
        self.log_std.len()
    }

    pub fn clamped_log_std(&self) -> Vec<f64> {
        self.log_std
            .data()
            .iter()
            .map(|v| v.clamp(LOG_STD_MIN, LOG_STD_MAX))
            .collect()
    }

    /// `(mean, log_std)` for one state.
    pub fn forward(&self, state: &[f64]) -> Result<(Vec<f64>, Vec<f64>)> {
        if state.len() != self.obs_dim() {
            return shape_err(
                "policy_forward",
                format!("state width {} != {}", state.len(), self.obs_dim()),
            );
        }
        Ok((self.mean.forward_row(state)?, self.clamped_log_std()))
    }

    /// Batched means, `[batch x act]`.
    pub fn forward_batch(&self, states: &Tensor) -> Result<Tensor> {
        self.mean.forward(states)
    }

    pub fn bind(&self, tape: &mut Tape) -> BoundPolicy {
        BoundPolicy {
            mean: self.mean.bind(tape),
            log_std: tape.param(self.log_std.clone()),
        }
    }

    pub fn bind_const(&self, tape: &mut Tape) -> BoundPolicy {
        BoundPolicy {
            mean: self.mean.bind_const(tape),
            log_std: tape.constant(self.log_std.clone()),
        }
    }
}

impl ParamSet for GaussianPolicy {
    fn tensors(&self) -> Vec<&Tensor> {
        let mut t = self.mean.tensors();
        t.push(&self.log_std);
        t
    }

    fn tensors_mut(&mut self) -> Vec<&mut Tensor> {
        let mut t = self.mean.tensors_mut();
        t.push(&mut self.log_std);
        t
    }
}

#[derive(Clone, Debug)]
pub struct BoundPolicy {
    pub mean: BoundMlp,
    pub log_std: Var,
}

impl BoundPolicy {
    pub fn vars(&self) -> Vec<Var> {
        let mut v = self.mean.vars();
        v.push(self.log_std);
        v
    }

    /// Log-density of `actions` (`[batch x act]`) under the policy at
    /// `states`, as a `[batch x 1]` column.
    pub fn log_prob(&self, tape: &mut Tape, states: Var, actions: Var) -> Result<Var> {
        let mean = self.mean.forward(tape, states)?;
        let log_std = tape.clamp(self.log_std, LOG_STD_MIN, LOG_STD_MAX);
        gaussian_log_prob_tape(tape, mean, log_std, actions)
    }
}

/// Diagonal Gaussian log-density on the tape, summed over action dims.
/// `log_std` may be a `[1 x act]` row broadcast over the batch.
pub fn gaussian_log_prob_tape(tape: &mut Tape, mean: Var, log_std: Var, actions: Var) -> Result<Var> {
    let diff = tape.sub(actions, mean)?;
    let neg = tape.scale(log_std, -1.0);
    let inv_std = tape.exp(neg);
    let z = tape.mul(diff, inv_std)?;
    let z2 = tape.square(z);
    let quad = tape.scale(z2, -0.5);
    let per_dim = tape.sub(quad, log_std)?;
    let per_dim = tape.add_scalar(per_dim, -HALF_LN_TWO_PI);
    Ok(tape.row_sum(per_dim))
}

/// Diagonal Gaussian log-density, summed over dims.
pub fn log_prob(mean: &[f64], log_std: &[f64], action: &[f64]) -> f64 {
    mean.iter()
        .zip(log_std)
        .zip(action)
        .map(|((&mu, &ls), &a)| {
            let z = (a - mu) * (-ls).exp();
            -0.5 * z * z - ls - HALF_LN_TWO_PI
        })
        .sum()
}

/// `a = mean + exp(log_std) ⊙ ε`, `ε ~ N(0, I)`; log-std is clamped first.
pub fn sample(mean: &[f64], log_std: &[f64], rng: &mut impl Rng) -> Vec<f64> {
    mean.iter()
        .zip(log_std)
        .map(|(&mu, &ls)| {
            let eps: f64 = rng.sample(StandardNormal);
            mu + ls.clamp(LOG_STD_MIN, LOG_STD_MAX).exp() * eps
        })
        .collect()
}

/// KL(p || q) between diagonal Gaussians.
pub fn gaussian_kl(mean_p: &[f64], log_std_p: &[f64], mean_q: &[f64], log_std_q: &[f64]) -> f64 {
    mean_p
        .iter()
        .zip(log_std_p)
        .zip(mean_q.iter().zip(log_std_q))
        .map(|((&mp, &lp), (&mq, &lq))| {
            let vp = (2.0 * lp).exp();
            let vq = (2.0 * lq).exp();
            lq - lp + (vp + (mp - mq).powi(2)) / (2.0 * vq) - 0.5
        })
        .sum()
}
