use crate::error::{invalid, shape_err, Result};

/// Discounted Monte Carlo return from every step of one episode.
/// `rewards[t]` is the reward received after acting at step `t`.
pub fn mc_returns(rewards: &[f64], gamma: f64) -> Result<Vec<f64>> {
    if rewards.is_empty() {
        return invalid("mc_returns needs a non-empty trajectory");
    }
    let mut out = vec![0.0; rewards.len()];
    let mut g = 0.0;
    for t in (0..rewards.len()).rev() {
        g = rewards[t] + gamma * g;
        out[t] = g;
    }
    Ok(out)
}

/// Generalized advantage estimates for one episode. `values` holds
/// `V(s_0) .. V(s_H)`, the last entry being the bootstrap (0 at a true end).
pub fn gae(rewards: &[f64], values: &[f64], gamma: f64, lambda: f64) -> Result<Vec<f64>> {
    if values.len() != rewards.len() + 1 {
        return shape_err(
            "gae",
            format!("{} rewards need {} values, got {}", rewards.len(), rewards.len() + 1, values.len()),
        );
    }
    let mut adv = vec![0.0; rewards.len()];
    let mut acc = 0.0;
    for t in (0..rewards.len()).rev() {
        let delta = rewards[t] + gamma * values[t + 1] - values[t];
        acc = delta + gamma * lambda * acc;
        adv[t] = acc;
    }
    Ok(adv)
}
