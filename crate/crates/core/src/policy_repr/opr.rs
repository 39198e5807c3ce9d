use rand::Rng;

use crate::autodiff::{ParamSet, Tape, Tensor, Var};
use crate::error::{shape_err, Result};
use crate::nets::{Activation, BoundMlp, GaussianPolicy, Layer, MlpParams};

/// Rows `(w_i, b_i)` of a layer: `[out x (in + 1)]`.
pub fn layer_rows(layer: &Layer) -> Tensor {
    let (out, inp) = layer.weight.dims();
    Tensor::from_fn(out, inp + 1, |i, j| {
        if j < inp {
            layer.weight.get(i, j)
        } else {
            layer.bias.data()[i]
        }
    })
}

/// Mean element feature over the rows of one layer.
pub fn opr_layer_feature(element: &MlpParams, layer: &Layer) -> Result<Vec<f64>> {
    let mut tape = Tape::new();
    let net = element.bind_const(&mut tape);
    let rows = tape.constant(layer_rows(layer));
    let f = net.forward(&mut tape, rows)?;
    let m = tape.mean_rows(f)?;
    Ok(tape.value(m).data().to_vec())
}

/// Origin policy representation: a per-layer element network applied to
/// every `(incoming weights, bias)` row, mean-reduced, concatenated across
/// layers (plus any extra parameters such as log-std), then a post network.
#[derive(Clone, Debug, PartialEq)]
pub struct OprEncoder {
    pub element: Vec<MlpParams>,
    pub post: MlpParams,
    extra: usize,
}

impl OprEncoder {
    /// `policy_sizes` are the encoded network's widths `[in, h1, ..., out]`.
    pub fn init(
        policy_sizes: &[usize],
        extra: usize,
        hidden: usize,
        feature: usize,
        post_hidden: usize,
        embed_dim: usize,
        rng: &mut impl Rng,
    ) -> Result<Self> {
        let element = policy_sizes
            .windows(2)
            .map(|w| MlpParams::init(&[w[0] + 1, hidden, feature], Activation::Relu, Activation::Tanh, rng))
            .collect::<Result<Vec<_>>>()?;
        let post_in = element.len() * feature + extra;
        let post = MlpParams::init(&[post_in, post_hidden, embed_dim], Activation::Relu, Activation::Tanh, rng)?;
        Self::new(element, post, extra)
    }

    pub fn new(element: Vec<MlpParams>, post: MlpParams, extra: usize) -> Result<Self> {
        if element.is_empty() {
            return shape_err("opr_encode", "no element networks");
        }
        let features: usize = element.iter().map(MlpParams::output_dim).sum();
        if post.input_dim() != features + extra {
            return shape_err(
                "opr_encode",
                format!("post network takes {} inputs, layers give {features} + {extra}", post.input_dim()),
            );
        }
        Ok(Self { element, post, extra })
    }

    pub fn embed_dim(&self) -> usize {
        self.post.output_dim()
    }

    pub fn extra_dim(&self) -> usize {
        self.extra
    }

    pub fn encode(&self, policy: &MlpParams, extra: &[f64]) -> Result<Vec<f64>> {
        let mut tape = Tape::new();
        let bound = self.bind_const(&mut tape);
        let e = bound.encode(&mut tape, &[(policy, extra)])?;
        Ok(tape.value(e).data().to_vec())
    }

    pub fn encode_gaussian(&self, policy: &GaussianPolicy) -> Result<Vec<f64>> {
        self.encode(&policy.mean, policy.log_std.data())
    }

    pub fn bind(&self, tape: &mut Tape) -> BoundOpr {
        BoundOpr {
            element: self.element.iter().map(|m| m.bind(tape)).collect(),
            post: self.post.bind(tape),
            inputs: self.element.iter().map(MlpParams::input_dim).collect(),
            extra: self.extra,
        }
    }

    pub fn bind_const(&self, tape: &mut Tape) -> BoundOpr {
        BoundOpr {
            element: self.element.iter().map(|m| m.bind_const(tape)).collect(),
            post: self.post.bind_const(tape),
            inputs: self.element.iter().map(MlpParams::input_dim).collect(),
            extra: self.extra,
        }
    }
}

impl ParamSet for OprEncoder {
    fn tensors(&self) -> Vec<&Tensor> {
        let mut t: Vec<&Tensor> = self.element.iter().flat_map(|m| m.tensors()).collect();
        t.extend(self.post.tensors());
        t
    }

    fn tensors_mut(&mut self) -> Vec<&mut Tensor> {
        let mut t: Vec<&mut Tensor> = self.element.iter_mut().flat_map(|m| m.tensors_mut()).collect();
        t.extend(self.post.tensors_mut());
        t
    }
}

#[derive(Clone, Debug)]
pub struct BoundOpr {
    element: Vec<BoundMlp>,
    post: BoundMlp,
    inputs: Vec<usize>,
    extra: usize,
}

impl BoundOpr {
    pub fn vars(&self) -> Vec<Var> {
        let mut v: Vec<Var> = self.element.iter().flat_map(BoundMlp::vars).collect();
        v.extend(self.post.vars());
        v
    }

    /// `[policies x embed]` embeddings. All policies must share one
    /// architecture so each layer's rows reduce in equal-sized groups.
    pub fn encode(&self, tape: &mut Tape, policies: &[(&MlpParams, &[f64])]) -> Result<Var> {
        let Some(&(first, _)) = policies.first() else {
            return shape_err("opr_encode", "no policies to encode");
        };
        let sizes = first.sizes();
        if sizes.len() - 1 != self.element.len() {
            return shape_err(
                "opr_encode",
                format!("policy has {} layers, encoder {}", sizes.len() - 1, self.element.len()),
            );
        }
        for (l, &inp) in self.inputs.iter().enumerate() {
            if sizes[l] + 1 != inp {
                return shape_err(
                    "opr_encode",
                    format!("layer {l} rows have {} entries, element network takes {inp}", sizes[l] + 1),
                );
            }
        }
        for (p, extra) in policies {
            if p.sizes() != sizes || extra.len() != self.extra {
                return shape_err("opr_encode", "policies in one batch must share a shape");
            }
        }
        let mut parts = Vec::with_capacity(self.element.len() + 1);
        for (l, net) in self.element.iter().enumerate() {
            let out = sizes[l + 1];
            let mut data = Vec::with_capacity(policies.len() * out * (sizes[l] + 1));
            for (p, _) in policies {
                data.extend_from_slice(layer_rows(&p.layers()[l]).data());
            }
            let rows = tape.constant(Tensor::matrix(policies.len() * out, sizes[l] + 1, data)?);
            let f = net.forward(tape, rows)?;
            parts.push(tape.segment_mean(f, out)?);
        }
        if self.extra > 0 {
            let data = policies.iter().flat_map(|(_, e)| e.iter().copied()).collect();
            parts.push(tape.constant(Tensor::matrix(policies.len(), self.extra, data)?));
        }
        let h = tape.concat_cols(&parts)?;
        self.post.forward(tape, h)
    }
}
