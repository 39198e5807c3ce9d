use crate::autodiff::{soft_update, ParamSet, Tape, Tensor, Var};
use crate::error::{invalid, shape_err, Result};

use super::encoder::Encoder;

/// Bilinear InfoNCE: `-log softmax` of the positive among
/// `{χᵀWχ⁺} ∪ {χᵀWχ⁻}`, stabilized by subtracting the largest logit.
pub fn infonce_loss(anchor: &[f64], positive: &[f64], negatives: &[Vec<f64>], w: &Tensor) -> Result<f64> {
    let d = anchor.len();
    if negatives.is_empty() {
        return invalid("InfoNCE needs at least one negative");
    }
    if w.dims() != (d, d) || positive.len() != d || negatives.iter().any(|n| n.len() != d) {
        return shape_err("infonce", format!("embedding width {d}, W {:?}", w.shape()));
    }
    let wa: Vec<f64> = (0..d)
        .map(|j| (0..d).map(|i| anchor[i] * w.get(i, j)).sum())
        .collect();
    let logit = |x: &[f64]| wa.iter().zip(x).map(|(a, b)| a * b).sum::<f64>();
    let pos = logit(positive);
    let logits: Vec<f64> = std::iter::once(pos).chain(negatives.iter().map(|n| logit(n))).collect();
    let m = logits.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let lse = m + logits.iter().map(|l| (l - m).exp()).sum::<f64>().ln();
    Ok(lse - pos)
}

/// Batched InfoNCE on the tape: row `i` of `anchors` pairs with row `i` of
/// `keys`; every other key row is a negative.
pub fn infonce_tape(tape: &mut Tape, anchors: Var, keys: Var, w: Var) -> Result<Var> {
    let (p, d) = tape.value(anchors).dims();
    if p < 2 {
        return invalid("InfoNCE needs at least two policies per batch");
    }
    if tape.value(keys).dims() != (p, d) {
        return shape_err("infonce", "anchor and key batches differ in shape");
    }
    let aw = tape.matmul(anchors, w)?;
    let logits = tape.matmul_nt(aw, keys)?;
    let lse = tape.logsumexp_rows(logits);
    let eye = tape.constant(Tensor::from_fn(p, p, |i, j| if i == j { 1.0 } else { 0.0 }));
    let masked = tape.mul(logits, eye)?;
    let diag = tape.row_sum(masked);
    let per = tape.sub(lse, diag)?;
    Ok(tape.mean(per))
}

/// `target <- (1 - m) target + m online`.
pub fn momentum_update(target: &mut dyn ParamSet, online: &dyn ParamSet, m: f64) -> Result<()> {
    if !(0.0..=1.0).contains(&m) {
        return invalid(format!("momentum {m} outside [0, 1]"));
    }
    soft_update(target, online, m)
}

/// Bilinear similarity plus the slowly-tracking key encoder.
#[derive(Clone, Debug, PartialEq)]
pub struct ContrastiveHead {
    pub w: Tensor,
    pub target: Encoder,
    pub momentum: f64,
}

impl ContrastiveHead {
    /// `W` starts at the identity; the key encoder starts as a copy.
    pub fn new(online: &Encoder, momentum: f64) -> Result<Self> {
        if !(momentum > 0.0 && momentum < 1.0) {
            return invalid(format!("momentum {momentum} outside (0, 1)"));
        }
        let d = online.embed_dim();
        Ok(Self {
            w: Tensor::from_fn(d, d, |i, j| if i == j { 1.0 } else { 0.0 }),
            target: online.clone(),
            momentum,
        })
    }

    pub fn track(&mut self, online: &Encoder) -> Result<()> {
        momentum_update(&mut self.target, online, self.momentum)
    }
}
