use crate::autodiff::{ParamSet, Tape, Tensor, Var};
use crate::error::{shape_err, Result};
use crate::nets::GaussianPolicy;

use super::opr::{BoundOpr, OprEncoder};
use super::spr::{BoundSpr, SprEncoder};

/// A learnable policy encoder.
#[derive(Clone, Debug, PartialEq)]
pub enum Encoder {
    Opr(OprEncoder),
    Spr(SprEncoder),
}

/// What an encoder reads for one policy.
#[derive(Clone, Debug, PartialEq)]
pub enum EncoderInput {
    Params(GaussianPolicy),
    Pairs(Tensor),
}

impl Encoder {
    pub fn embed_dim(&self) -> usize {
        match self {
            Encoder::Opr(e) => e.embed_dim(),
            Encoder::Spr(e) => e.embed_dim(),
        }
    }

    pub fn bind(&self, tape: &mut Tape) -> BoundEncoder {
        match self {
            Encoder::Opr(e) => BoundEncoder::Opr(e.bind(tape)),
            Encoder::Spr(e) => BoundEncoder::Spr(e.bind(tape)),
        }
    }

    pub fn bind_const(&self, tape: &mut Tape) -> BoundEncoder {
        match self {
            Encoder::Opr(e) => BoundEncoder::Opr(e.bind_const(tape)),
            Encoder::Spr(e) => BoundEncoder::Spr(e.bind_const(tape)),
        }
    }

    /// `[inputs x embed]` embeddings without recording gradients.
    pub fn encode(&self, inputs: &[EncoderInput]) -> Result<Tensor> {
        let mut tape = Tape::new();
        let bound = self.bind_const(&mut tape);
        let e = bound.encode(&mut tape, inputs)?;
        Ok(tape.value(e).clone())
    }
}

impl ParamSet for Encoder {
    fn tensors(&self) -> Vec<&Tensor> {
        match self {
            Encoder::Opr(e) => e.tensors(),
            Encoder::Spr(e) => e.tensors(),
        }
    }

    fn tensors_mut(&mut self) -> Vec<&mut Tensor> {
        match self {
            Encoder::Opr(e) => e.tensors_mut(),
            Encoder::Spr(e) => e.tensors_mut(),
        }
    }
}

#[derive(Clone, Debug)]
pub enum BoundEncoder {
    Opr(BoundOpr),
    Spr(BoundSpr),
}

impl BoundEncoder {
    pub fn vars(&self) -> Vec<Var> {
        match self {
            BoundEncoder::Opr(b) => b.vars(),
            BoundEncoder::Spr(b) => b.vars(),
        }
    }

    pub fn encode(&self, tape: &mut Tape, inputs: &[EncoderInput]) -> Result<Var> {
        match self {
            BoundEncoder::Opr(b) => {
                let policies = inputs
                    .iter()
                    .map(|i| match i {
                        EncoderInput::Params(p) => Ok((&p.mean, p.log_std.data())),
                        EncoderInput::Pairs(_) => shape_err("opr_encode", "OPR reads policy parameters"),
                    })
                    .collect::<Result<Vec<_>>>()?;
                b.encode(tape, &policies)
            }
            BoundEncoder::Spr(b) => {
                let sets = inputs
                    .iter()
                    .map(|i| match i {
                        EncoderInput::Pairs(t) => Ok(t),
                        EncoderInput::Params(_) => shape_err("spr_encode", "SPR reads state-action pairs"),
                    })
                    .collect::<Result<Vec<_>>>()?;
                b.encode(tape, &sets)
            }
        }
    }
}
