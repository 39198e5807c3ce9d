use rand::Rng;

use crate::autodiff::{ParamSet, Tape, Tensor, Var};
use crate::error::{invalid, shape_err, Result};
use crate::nets::{self, BoundPolicy, GaussianPolicy};

/// Conditional Gaussian policy `π̄(a | s, χ)` fed with `s ⊕ χ`.
#[derive(Clone, Debug, PartialEq)]
pub struct AuxDecoder {
    pub policy: GaussianPolicy,
    state_dim: usize,
}

impl AuxDecoder {
    pub fn init(state_dim: usize, embed_dim: usize, hidden: &[usize], act_dim: usize, rng: &mut impl Rng) -> Result<Self> {
        Self::new(GaussianPolicy::init(state_dim + embed_dim, hidden, act_dim, rng)?, state_dim)
    }

    pub fn new(policy: GaussianPolicy, state_dim: usize) -> Result<Self> {
        if policy.obs_dim() <= state_dim {
            return shape_err("aux_decoder", "decoder input must hold the state and an embedding");
        }
        Ok(Self { policy, state_dim })
    }

    pub fn state_dim(&self) -> usize {
        self.state_dim
    }

    pub fn embed_dim(&self) -> usize {
        self.policy.obs_dim() - self.state_dim
    }

    pub fn bind(&self, tape: &mut Tape) -> BoundAux {
        BoundAux {
            policy: self.policy.bind(tape),
        }
    }
}

impl ParamSet for AuxDecoder {
    fn tensors(&self) -> Vec<&Tensor> {
        self.policy.tensors()
    }

    fn tensors_mut(&mut self) -> Vec<&mut Tensor> {
        self.policy.tensors_mut()
    }
}

#[derive(Clone, Debug)]
pub struct BoundAux {
    pub policy: BoundPolicy,
}

impl BoundAux {
    pub fn vars(&self) -> Vec<Var> {
        self.policy.vars()
    }

    /// Mean negative log-likelihood; `embeddings` holds one row per state.
    pub fn loss(&self, tape: &mut Tape, states: Var, embeddings: Var, actions: Var) -> Result<Var> {
        let x = tape.concat_cols(&[states, embeddings])?;
        let lp = self.policy.log_prob(tape, x, actions)?;
        let m = tape.mean(lp);
        Ok(tape.scale(m, -1.0))
    }
}

/// Mean of `-log π̄(a | s, χ)` over the batch.
pub fn aux_loss(dec: &AuxDecoder, chi: &[f64], states: &[Vec<f64>], actions: &[Vec<f64>]) -> Result<f64> {
    if states.is_empty() {
        return invalid("AUX loss needs a non-empty batch");
    }
    if states.len() != actions.len() || chi.len() != dec.embed_dim() {
        return shape_err("aux_loss", "batch or embedding size mismatch");
    }
    let mut total = 0.0;
    for (s, a) in states.iter().zip(actions) {
        let mut x = s.clone();
        x.extend_from_slice(chi);
        let (mean, log_std) = dec.policy.forward(&x)?;
        total -= nets::log_prob(&mean, &log_std, a);
    }
    Ok(total / states.len() as f64)
}
