use rand::Rng;
use rand::SeedableRng;

use super::PolicyEmbedding;
use crate::autodiff::ParamSet;
use crate::error::{invalid, Result};
use crate::nets::{GaussianPolicy, MlpParams};
use crate::seeding::{derive_seed, Rng as ChaRng};

/// Raw policy representation: every weight and bias in checkpoint order
/// (layers input to output, weights row-major, then biases).
pub fn rpr_encode(policy: &MlpParams) -> Vec<f64> {
    policy
        .tensors()
        .into_iter()
        .flat_map(|t| t.data().iter().copied())
        .collect()
}

/// Mean network followed by the log-std vector.
pub fn rpr_encode_gaussian(policy: &GaussianPolicy) -> Vec<f64> {
    let mut v = rpr_encode(&policy.mean);
    v.extend_from_slice(policy.log_std.data());
    v
}

/// Fixed random code for policy `id`, `U(-1, 1)^dim`, keyed on
/// `(master_seed, id)` only.
pub fn random_pr(policy_id: u64, dim: usize, master_seed: u64) -> Result<PolicyEmbedding> {
    if dim == 0 {
        return invalid("random representation needs dim >= 1");
    }
    let mut rng = ChaRng::seed_from_u64(derive_seed(master_seed, "random-pr", policy_id));
    Ok((0..dim).map(|_| rng.random_range(-1.0..1.0)).collect())
}
