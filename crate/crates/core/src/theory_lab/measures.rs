use rand::Rng;
use rand_distr::StandardNormal;

use crate::autodiff::ParamSet;
use crate::envs::PolicyTable;
use crate::error::{invalid, shape_err, Result};
use crate::nets::{gaussian_kl, GaussianPolicy};

/// `‖pred − truth‖₂ / √n`.
pub fn approx_loss(pred: &[f64], truth: &[f64]) -> Result<f64> {
    if pred.is_empty() {
        return invalid("approximation loss over an empty state set");
    }
    if pred.len() != truth.len() {
        return shape_err("approx_loss", format!("{} predictions vs {} oracle values", pred.len(), truth.len()));
    }
    let ss: f64 = pred.iter().zip(truth).map(|(a, b)| (a - b) * (a - b)).sum();
    Ok((ss / pred.len() as f64).sqrt())
}

/// Mean over probe states of `KL(p‖q) + KL(q‖p)` between the two Gaussian
/// action distributions.
pub fn policy_distance(a: &GaussianPolicy, b: &GaussianPolicy, probes: &[Vec<f64>]) -> Result<f64> {
    if probes.is_empty() {
        return invalid("policy distance needs at least one probe state");
    }
    let mut total = 0.0;
    for s in probes {
        let (ma, la) = a.forward(s)?;
        let (mb, lb) = b.forward(s)?;
        total += gaussian_kl(&ma, &la, &mb, &lb) + gaussian_kl(&mb, &lb, &ma, &la);
    }
    Ok(total / probes.len() as f64)
}

/// Symmetrized KL between categorical action distributions, averaged over
/// states.
pub fn table_distance(a: &PolicyTable, b: &PolicyTable) -> Result<f64> {
    if a.is_empty() || a.len() != b.len() {
        return shape_err("table_distance", format!("{} vs {} states", a.len(), b.len()));
    }
    let mut total = 0.0;
    for (pa, pb) in a.iter().zip(b) {
        if pa.len() != pb.len() {
            return shape_err("table_distance", "action counts differ");
        }
        total += pa
            .iter()
            .zip(pb)
            .map(|(&x, &y)| if x == y { 0.0 } else { (x - y) * (x.ln() - y.ln()) })
            .sum::<f64>();
    }
    Ok(total / a.len() as f64)
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Contraction {
    pub ratio: f64,
    /// `f_before` was 0; `ratio` is reported as 0.
    pub degenerate: bool,
    /// The realized ratio is at least 1.
    pub non_contraction: bool,
}

pub fn contraction_ratio(f_before: f64, f_after: f64) -> Contraction {
    if f_before == 0.0 {
        return Contraction {
            ratio: 0.0,
            degenerate: true,
            non_contraction: false,
        };
    }
    let ratio = f_after / f_before;
    Contraction {
        ratio,
        degenerate: false,
        non_contraction: ratio >= 1.0,
    }
}

/// Largest `|f(π) − f(π')| / d(π, π')` over `count` perturbations `π'`.
/// Perturbations at zero distance are skipped.
pub fn lipschitz_estimate<P, R: Rng>(
    pi: &P,
    count: usize,
    rng: &mut R,
    mut perturb: impl FnMut(&P, &mut R) -> P,
    distance: impl Fn(&P, &P) -> Result<f64>,
    f: impl Fn(&P) -> Result<f64>,
) -> Result<f64> {
    if count < 2 {
        return invalid("lipschitz estimate needs at least two perturbations");
    }
    let f0 = f(pi)?;
    let mut best: f64 = 0.0;
    for _ in 0..count {
        let q = perturb(pi, rng);
        let d = distance(pi, &q)?;
        if d <= 0.0 {
            continue;
        }
        best = best.max((f0 - f(&q)?).abs() / d);
    }
    Ok(best)
}

/// Gaussian noise of standard deviation `scale` on every policy parameter.
pub fn perturb_gaussian(pi: &GaussianPolicy, scale: f64, rng: &mut impl Rng) -> GaussianPolicy {
    let mut q = pi.clone();
    for t in q.tensors_mut() {
        for v in t.data_mut() {
            let e: f64 = rng.sample(StandardNormal);
            *v += scale * e;
        }
    }
    q
}
