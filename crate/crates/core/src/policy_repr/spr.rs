use rand::Rng;

use crate::autodiff::{ParamSet, Tape, Tensor, Var};
use crate::error::{invalid, shape_err, Result};
use crate::nets::{Activation, BoundMlp, MlpParams};

/// Stacks `(s, a)` concatenations into a `[pairs x (s + a)]` matrix.
pub fn pairs_tensor(states: &[Vec<f64>], actions: &[Vec<f64>], idx: &[usize]) -> Result<Tensor> {
    if states.len() != actions.len() {
        return shape_err("spr_encode", "state and action counts differ");
    }
    let rows: Vec<Vec<f64>> = idx
        .iter()
        .map(|&i| {
            let mut r = states[i].clone();
            r.extend_from_slice(&actions[i]);
            r
        })
        .collect();
    Tensor::stack_rows(&rows)
}

/// Surface policy representation: a shared pair network over sampled
/// state-action pairs, mean-reduced, then a post network.
#[derive(Clone, Debug, PartialEq)]
pub struct SprEncoder {
    pub pair: MlpParams,
    pub post: MlpParams,
}

impl SprEncoder {
    pub fn init(
        state_dim: usize,
        act_dim: usize,
        hidden: usize,
        feature: usize,
        post_hidden: usize,
        embed_dim: usize,
        rng: &mut impl Rng,
    ) -> Result<Self> {
        let pair = MlpParams::init(&[state_dim + act_dim, hidden, feature], Activation::Relu, Activation::Tanh, rng)?;
        let post = MlpParams::init(&[feature, post_hidden, embed_dim], Activation::Relu, Activation::Tanh, rng)?;
        Self::new(pair, post)
    }

    pub fn new(pair: MlpParams, post: MlpParams) -> Result<Self> {
        if pair.output_dim() != post.input_dim() {
            return shape_err(
                "spr_encode",
                format!("pair features {} vs post input {}", pair.output_dim(), post.input_dim()),
            );
        }
        Ok(Self { pair, post })
    }

    pub fn embed_dim(&self) -> usize {
        self.post.output_dim()
    }

    pub fn pair_dim(&self) -> usize {
        self.pair.input_dim()
    }

    pub fn encode(&self, states: &[Vec<f64>], actions: &[Vec<f64>]) -> Result<Vec<f64>> {
        if states.is_empty() {
            return invalid("SPR needs at least one state-action pair");
        }
        let idx: Vec<usize> = (0..states.len()).collect();
        let pairs = pairs_tensor(states, actions, &idx)?;
        let mut tape = Tape::new();
        let bound = self.bind_const(&mut tape);
        let e = bound.encode(&mut tape, &[&pairs])?;
        Ok(tape.value(e).data().to_vec())
    }

    pub fn bind(&self, tape: &mut Tape) -> BoundSpr {
        BoundSpr {
            pair: self.pair.bind(tape),
            post: self.post.bind(tape),
            width: self.pair_dim(),
        }
    }

    pub fn bind_const(&self, tape: &mut Tape) -> BoundSpr {
        BoundSpr {
            pair: self.pair.bind_const(tape),
            post: self.post.bind_const(tape),
            width: self.pair_dim(),
        }
    }
}

impl ParamSet for SprEncoder {
    fn tensors(&self) -> Vec<&Tensor> {
        let mut t = self.pair.tensors();
        t.extend(self.post.tensors());
        t
    }

    fn tensors_mut(&mut self) -> Vec<&mut Tensor> {
        let mut t = self.pair.tensors_mut();
        t.extend(self.post.tensors_mut());
        t
    }
}

#[derive(Clone, Debug)]
pub struct BoundSpr {
    pair: BoundMlp,
    post: BoundMlp,
    width: usize,
}

impl BoundSpr {
    pub fn vars(&self) -> Vec<Var> {
        let mut v = self.pair.vars();
        v.extend(self.post.vars());
        v
    }

    /// One embedding row per pair set. Sets of equal size share a single
    /// pair-network pass.
    pub fn encode(&self, tape: &mut Tape, sets: &[&Tensor]) -> Result<Var> {
        if sets.is_empty() || sets.iter().any(|s| s.rows() == 0) {
            return invalid("SPR needs at least one state-action pair per policy");
        }
        if let Some(bad) = sets.iter().find(|s| s.cols() != self.width) {
            return shape_err("spr_encode", format!("pairs have width {}, expected {}", bad.cols(), self.width));
        }
        let k = sets[0].rows();
        let pooled = if sets.iter().all(|s| s.rows() == k) {
            let data = sets.iter().flat_map(|s| s.data().iter().copied()).collect();
            let x = tape.constant(Tensor::matrix(sets.len() * k, self.width, data)?);
            let f = self.pair.forward(tape, x)?;
            tape.segment_mean(f, k)?
        } else {
            let mut means = Vec::with_capacity(sets.len());
            for s in sets {
                let x = tape.constant((*s).clone());
                let f = self.pair.forward(tape, x)?;
                means.push(tape.mean_rows(f)?);
            }
            tape.concat_rows(&means)?
        };
        self.post.forward(tape, pooled)
    }
}
