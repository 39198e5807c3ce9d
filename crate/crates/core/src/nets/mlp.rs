use rand::Rng;

use crate::autodiff::{ParamSet, Tape, Tensor, Var};
use crate::error::{invalid, shape_err, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Activation {
    Identity,
    Tanh,
    Relu,
}

impl Activation {
    pub fn name(self) -> &'static str {
        match self {
            Activation::Identity => "identity",
            Activation::Tanh => "tanh",
            Activation::Relu => "relu",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "identity" => Some(Activation::Identity),
            "tanh" => Some(Activation::Tanh),
            "relu" => Some(Activation::Relu),
            _ => None,
        }
    }

    pub(crate) fn apply(self, tape: &mut Tape, x: Var) -> Var {
        match self {
            Activation::Identity => x,
            Activation::Tanh => tape.tanh(x),
            Activation::Relu => tape.relu(x),
        }
    }
}

/// Dense layer; `weight` is `out x in` so row `i` holds node `i`'s incoming
/// weights.
#[derive(Clone, Debug, PartialEq)]
pub struct Layer {
    pub weight: Tensor,
    pub bias: Tensor,
    pub activation: Activation,
}

impl Layer {
    pub fn new(weight: Tensor, bias: Tensor, activation: Activation) -> Result<Self> {
        let (out, _) = weight.dims();
        if bias.len() != out || weight.shape().len() != 2 {
            return shape_err(
                "layer",
                format!("weight {:?} with bias {:?}", weight.shape(), bias.shape()),
            );
        }
        let bias = Tensor::vector(bias.into_data());
        Ok(Self {
            weight,
            bias,
            activation,
        })
    }

    pub fn zeros(inputs: usize, outputs: usize, activation: Activation) -> Self {
        Self {
            weight: Tensor::zeros(&[outputs, inputs]),
            bias: Tensor::zeros(&[outputs]),
            activation,
        }
    }

    /// Weights `U(-1/√fan_in, 1/√fan_in)`, zero biases.
    pub fn init(inputs: usize, outputs: usize, activation: Activation, rng: &mut impl Rng) -> Self {
        let bound = 1.0 / (inputs as f64).sqrt();
        let weight = Tensor::from_fn(outputs, inputs, |_, _| rng.random_range(-bound..bound));
        Self {
            weight,
            bias: Tensor::zeros(&[outputs]),
            activation,
        }
    }

    pub fn inputs(&self) -> usize {
        self.weight.cols()
    }

    pub fn outputs(&self) -> usize {
        self.weight.rows()
    }

    pub fn bind(&self, tape: &mut Tape) -> BoundLayer {
        BoundLayer {
            weight: tape.param(self.weight.clone()),
            bias: tape.param(self.bias.clone()),
            activation: self.activation,
        }
    }

    /// Binds as constants: usable in forward passes, receives no gradient.
    pub fn bind_const(&self, tape: &mut Tape) -> BoundLayer {
        BoundLayer {
            weight: tape.constant(self.weight.clone()),
            bias: tape.constant(self.bias.clone()),
            activation: self.activation,
        }
    }
}

#[derive(Clone, Copy, Debug)]
pub struct BoundLayer {
    pub weight: Var,
    pub bias: Var,
    pub activation: Activation,
}

impl BoundLayer {
    pub fn forward(&self, tape: &mut Tape, x: Var) -> Result<Var> {
        let h = tape.matmul_nt(x, self.weight)?;
        let h = tape.add(h, self.bias)?;
        Ok(self.activation.apply(tape, h))
    }
}

/// Multi-layer perceptron parameters, layers ordered input to output.
#[derive(Clone, Debug, PartialEq)]
pub struct MlpParams {
    layers: Vec<Layer>,
}

impl MlpParams {
    pub fn new(layers: Vec<Layer>) -> Result<Self> {
        if layers.is_empty() {
            return invalid("an MLP needs at least one layer");
        }
        for pair in layers.windows(2) {
            if pair[0].outputs() != pair[1].inputs() {
                return shape_err(
                    "mlp",
                    format!(
                        "layer widths do not chain: {} outputs into {} inputs",
                        pair[0].outputs(),
                        pair[1].inputs()
                    ),
                );
            }
        }
        Ok(Self { layers })
    }

    /// `sizes = [in, h1, ..., out]`; hidden layers use `hidden`, the last
    /// layer `output`.
    pub fn init(
        sizes: &[usize],
        hidden: Activation,
        output: Activation,
        rng: &mut impl Rng,
    ) -> Result<Self> {
        Self::build(sizes, hidden, output, |i, o, a| Layer::init(i, o, a, rng))
    }

    pub fn zeros(sizes: &[usize], hidden: Activation, output: Activation) -> Result<Self> {
        Self::build(sizes, hidden, output, Layer::zeros)
    }

    fn build(
        sizes: &[usize],
        hidden: Activation,
        output: Activation,
        mut make: impl FnMut(usize, usize, Activation) -> Layer,
    ) -> Result<Self> {
        if sizes.len() < 2 || sizes.contains(&0) {
            return invalid(format!("bad layer sizes {sizes:?}"));
        }
        let n = sizes.len() - 1;
        let layers = (0..n)
            .map(|i| {
                let act = if i + 1 == n { output } else { hidden };
                make(sizes[i], sizes[i + 1], act)
            })
            .collect();
        Self::new(layers)
    }

    pub fn layers(&self) -> &[Layer] {
        &self.layers
    }

    pub fn layers_mut(&mut self) -> &mut [Layer] {
        &mut self.layers
    }

    pub fn input_dim(&self) -> usize {
        self.layers[0].inputs()
    }

    pub fn output_dim(&self) -> usize {
        self.layers[self.layers.len() - 1].outputs()
    }

    /// Layer widths `[in, h1, ..., out]`.
    pub fn sizes(&self) -> Vec<usize> {
        let mut s = vec![self.input_dim()];
        s.extend(self.layers.iter().map(Layer::outputs));
        s
    }

    pub fn bind(&self, tape: &mut Tape) -> BoundMlp {
        BoundMlp {
            layers: self.layers.iter().map(|l| l.bind(tape)).collect(),
        }
    }

    pub fn bind_const(&self, tape: &mut Tape) -> BoundMlp {
        BoundMlp {
            layers: self.layers.iter().map(|l| l.bind_const(tape)).collect(),
        }
    }

    /// Batched forward pass on a `[batch x in]` matrix. Uses the same
    /// primitives as the taped path, so results agree bit for bit.
    pub fn forward(&self, x: &Tensor) -> Result<Tensor> {
        if x.cols() != self.input_dim() {
            return shape_err(
                "mlp_forward",
                format!("input width {} != {}", x.cols(), self.input_dim()),
            );
        }
        let mut tape = Tape::new();
        let bound = self.bind_const(&mut tape);
        let xv = tape.constant(x.clone());
        let h = bound.forward(&mut tape, xv)?;
        Ok(tape.value(h).clone())
    }

    pub fn forward_row(&self, x: &[f64]) -> Result<Vec<f64>> {
        Ok(self.forward(&Tensor::row(x.to_vec()))?.into_data())
    }

    pub fn all_finite(&self) -> bool {
        self.layers
            .iter()
            .all(|l| l.weight.is_finite() && l.bias.is_finite())
    }
}

impl ParamSet for MlpParams {
    fn tensors(&self) -> Vec<&Tensor> {
        self.layers
            .iter()
            .flat_map(|l| [&l.weight, &l.bias])
            .collect()
    }

    fn tensors_mut(&mut self) -> Vec<&mut Tensor> {
        self.layers
            .iter_mut()
            .flat_map(|l| [&mut l.weight, &mut l.bias])
            .collect()
    }
}

#[derive(Clone, Debug)]
pub struct BoundMlp {
    pub layers: Vec<BoundLayer>,
}

impl BoundMlp {
    pub fn forward(&self, tape: &mut Tape, x: Var) -> Result<Var> {
        let mut h = x;
        for l in &self.layers {
            h = l.forward(tape, h)?;
        }
        Ok(h)
    }

    /// Handles in [`ParamSet`] order.
    pub fn vars(&self) -> Vec<Var> {
        self.layers.iter().flat_map(|l| [l.weight, l.bias]).collect()
    }
}
