use rand::Rng;

use super::mlp::{Activation, BoundLayer, BoundMlp, Layer, MlpParams};
use crate::autodiff::{ParamSet, Tape, Tensor, Var};
use crate::error::{invalid, shape_err, Result};

/// Two-stream policy-extended value network `V(s, χ)`.
///
/// The state and the policy embedding each pass through their own ReLU
/// layer; the two feature blocks are concatenated (state first) and fed to
/// a trunk MLP with a scalar linear head.
#[derive(Clone, Debug, PartialEq)]
pub struct PeVFAParams {
    pub state_stream: Layer,
    pub embed_stream: Layer,
    pub trunk: MlpParams,
}

impl PeVFAParams {
    pub fn init(
        state_dim: usize,
        embed_dim: usize,
        stream_width: usize,
        trunk_hidden: &[usize],
        rng: &mut impl Rng,
    ) -> Result<Self> {
        let state_stream = Layer::init(state_dim, stream_width, Activation::Relu, rng);
        let embed_stream = Layer::init(embed_dim, stream_width, Activation::Relu, rng);
        let mut sizes = vec![2 * stream_width];
        sizes.extend_from_slice(trunk_hidden);
        sizes.push(1);
        let trunk = MlpParams::init(&sizes, Activation::Relu, Activation::Identity, rng)?;
        Self::new(state_stream, embed_stream, trunk)
    }

    pub fn new(state_stream: Layer, embed_stream: Layer, trunk: MlpParams) -> Result<Self> {
        if trunk.input_dim() != state_stream.outputs() + embed_stream.outputs() {
            return shape_err(
                "pevfa",
                format!(
                    "trunk input {} != {} + {}",
                    trunk.input_dim(),
                    state_stream.outputs(),
                    embed_stream.outputs()
                ),
            );
        }
        if trunk.output_dim() != 1 {
            return invalid("PeVFA head must be scalar");
        }
        Ok(Self {
            state_stream,
            embed_stream,
            trunk,
        })
    }

    pub fn state_dim(&self) -> usize {
        self.state_stream.inputs()
    }

    pub fn embed_dim(&self) -> usize {
        self.embed_stream.inputs()
    }

    /// Zeroes the embedding stream so the output ignores `χ`.
    pub fn zero_embedding_stream(&mut self) {
        self.embed_stream.weight = Tensor::zeros_like(&self.embed_stream.weight);
        self.embed_stream.bias = Tensor::zeros_like(&self.embed_stream.bias);
    }

    /// The conventional value network this PeVFA computes when its embedding
    /// stream is zero: state stream, then the trunk's first layer restricted
    /// to the state columns, then the rest of the trunk.
    pub fn as_vfa(&self) -> Result<MlpParams> {
        let ws = self.state_stream.outputs();
        let first = &self.trunk.layers()[0];
        let cols = first.inputs();
        let data: Vec<f64> = (0..first.outputs())
            .flat_map(|i| first.weight.row_slice(i)[..ws].to_vec())
            .collect();
        debug_assert!(cols > ws);
        let restricted = Layer::new(
            Tensor::matrix(first.outputs(), ws, data)?,
            first.bias.clone(),
            first.activation,
        )?;
        let mut layers = vec![self.state_stream.clone(), restricted];
        layers.extend(self.trunk.layers()[1..].iter().cloned());
        MlpParams::new(layers)
    }

    /// Values for a batch: `states` is `[batch x state]`, `embeddings` is
    /// `[batch x embed]`. Returns one value per row.
    pub fn forward(&self, states: &Tensor, embeddings: &Tensor) -> Result<Vec<f64>> {
        let mut tape = Tape::new();
        let bound = self.bind_const(&mut tape);
        let s = tape.constant(states.clone());
        let e = tape.constant(embeddings.clone());
        let v = bound.forward(&mut tape, s, e)?;
        Ok(tape.value(v).data().to_vec())
    }

    /// Values of many states under a single embedding.
    pub fn forward_shared(&self, states: &Tensor, embedding: &[f64]) -> Result<Vec<f64>> {
        if embedding.len() != self.embed_dim() {
            return shape_err(
                "pevfa_forward",
                format!("embedding width {} != {}", embedding.len(), self.embed_dim()),
            );
        }
        let mut tape = Tape::new();
        let bound = self.bind_const(&mut tape);
        let s = tape.constant(states.clone());
        let e = tape.constant(Tensor::row(embedding.to_vec()));
        let v = bound.forward_shared(&mut tape, s, e)?;
        Ok(tape.value(v).data().to_vec())
    }

    pub fn forward_row(&self, state: &[f64], embedding: &[f64]) -> Result<f64> {
        Ok(self.forward_shared(&Tensor::row(state.to_vec()), embedding)?[0])
    }

    pub fn bind(&self, tape: &mut Tape) -> BoundPeVFA {
        BoundPeVFA {
            state_stream: self.state_stream.bind(tape),
            embed_stream: self.embed_stream.bind(tape),
            trunk: self.trunk.bind(tape),
            state_dim: self.state_dim(),
            embed_dim: self.embed_dim(),
        }
    }

    pub fn bind_const(&self, tape: &mut Tape) -> BoundPeVFA {
        BoundPeVFA {
            state_stream: self.state_stream.bind_const(tape),
            embed_stream: self.embed_stream.bind_const(tape),
            trunk: self.trunk.bind_const(tape),
            state_dim: self.state_dim(),
            embed_dim: self.embed_dim(),
        }
    }
}

impl ParamSet for PeVFAParams {
    fn tensors(&self) -> Vec<&Tensor> {
        let mut t = vec![
            &self.state_stream.weight,
            &self.state_stream.bias,
            &self.embed_stream.weight,
            &self.embed_stream.bias,
        ];
        t.extend(self.trunk.tensors());
        t
    }

    fn tensors_mut(&mut self) -> Vec<&mut Tensor> {
        let mut t = vec![
            &mut self.state_stream.weight,
            &mut self.state_stream.bias,
            &mut self.embed_stream.weight,
            &mut self.embed_stream.bias,
        ];
        t.extend(self.trunk.tensors_mut());
        t
    }
}

#[derive(Clone, Debug)]
pub struct BoundPeVFA {
    pub state_stream: BoundLayer,
    pub embed_stream: BoundLayer,
    pub trunk: BoundMlp,
    state_dim: usize,
    embed_dim: usize,
}

impl BoundPeVFA {
    pub fn vars(&self) -> Vec<Var> {
        let mut v = vec![
            self.state_stream.weight,
            self.state_stream.bias,
            self.embed_stream.weight,
            self.embed_stream.bias,
        ];
        v.extend(self.trunk.vars());
        v
    }

    fn check(&self, tape: &Tape, states: Var, embeddings: Var) -> Result<()> {
        let s = tape.value(states).cols();
        let e = tape.value(embeddings).cols();
        if s != self.state_dim || e != self.embed_dim {
            return shape_err(
                "pevfa_forward",
                format!(
                    "got state width {s}, embedding width {e}; expected {}, {}",
                    self.state_dim, self.embed_dim
                ),
            );
        }
        Ok(())
    }

    /// `[batch x 1]` values with one embedding row per state row.
    pub fn forward(&self, tape: &mut Tape, states: Var, embeddings: Var) -> Result<Var> {
        self.check(tape, states, embeddings)?;
        if tape.value(states).rows() != tape.value(embeddings).rows() {
            return shape_err("pevfa_forward", "state and embedding batch sizes differ");
        }
        let hs = self.state_stream.forward(tape, states)?;
        let he = self.embed_stream.forward(tape, embeddings)?;
        let h = tape.concat_cols(&[hs, he])?;
        self.trunk.forward(tape, h)
    }

    /// Like [`forward`](Self::forward) with a single `[1 x embed]` embedding
    /// shared by every state row.
    pub fn forward_shared(&self, tape: &mut Tape, states: Var, embedding: Var) -> Result<Var> {
        let rows = tape.value(states).rows();
        self.forward_grouped(tape, states, embedding, &vec![0; rows])
    }

    /// `embeddings` is `[policies x embed]`; state row `i` is evaluated under
    /// embedding row `slots[i]`. The embedding stream runs once per policy.
    pub fn forward_grouped(
        &self,
        tape: &mut Tape,
        states: Var,
        embeddings: Var,
        slots: &[usize],
    ) -> Result<Var> {
        self.check(tape, states, embeddings)?;
        if slots.len() != tape.value(states).rows() {
            return shape_err("pevfa_forward", "one slot per state row required");
        }
        let he = self.embed_stream.forward(tape, embeddings)?;
        let he = tape.gather_rows(he, slots)?;
        let hs = self.state_stream.forward(tape, states)?;
        let h = tape.concat_cols(&[hs, he])?;
        self.trunk.forward(tape, h)
    }
}
