use rand::seq::index;
use rand::Rng;
use rand_distr::StandardNormal;

use crate::error::{invalid, Result};
use crate::nets::MlpParams;

/// Zeroes each weight and bias of every non-output layer independently with
/// probability `mask_ratio`. The output layer is never touched.
pub fn augment_opr(policy: &MlpParams, mask_ratio: f64, rng: &mut impl Rng) -> Result<MlpParams> {
    if !(0.0..=1.0).contains(&mask_ratio) {
        return invalid(format!("mask ratio {mask_ratio} outside [0, 1]"));
    }
    let mut out = policy.clone();
    let n = out.layers().len();
    for layer in &mut out.layers_mut()[..n - 1] {
        for t in [&mut layer.weight, &mut layer.bias] {
            for v in t.data_mut() {
                if rng.random::<f64>() < mask_ratio {
                    *v = 0.0;
                }
            }
        }
    }
    Ok(out)
}

/// Noise-corruption alternative: Gaussian noise of the given scale on the
/// same parameters `augment_opr` may mask.
pub fn augment_opr_noise(policy: &MlpParams, scale: f64, rng: &mut impl Rng) -> Result<MlpParams> {
    if !(scale >= 0.0 && scale.is_finite()) {
        return invalid(format!("noise scale {scale} must be finite and non-negative"));
    }
    let mut out = policy.clone();
    let n = out.layers().len();
    for layer in &mut out.layers_mut()[..n - 1] {
        for t in [&mut layer.weight, &mut layer.bias] {
            for v in t.data_mut() {
                let e: f64 = rng.sample(StandardNormal);
                *v += scale * e;
            }
        }
    }
    Ok(out)
}

/// Uniform subsample without replacement of `ceil(ratio * n)` indices.
pub fn spr_sample_indices(n: usize, ratio: f64, rng: &mut impl Rng) -> Result<Vec<usize>> {
    if n == 0 {
        return invalid("cannot sample from an empty pair buffer");
    }
    if !(ratio > 0.0 && ratio <= 1.0) {
        return invalid(format!("sample ratio {ratio} outside (0, 1]"));
    }
    let k = ((ratio * n as f64 - 1e-9).ceil() as usize).clamp(1, n);
    Ok(index::sample(rng, n, k).into_vec())
}

pub fn augment_spr<T: Clone>(buffer: &[T], sample_ratio: f64, rng: &mut impl Rng) -> Result<Vec<T>> {
    let idx = spr_sample_indices(buffer.len(), sample_ratio, rng)?;
    Ok(idx.into_iter().map(|i| buffer[i].clone()).collect())
}
