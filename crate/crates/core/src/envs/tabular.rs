use rand::Rng;

use crate::error::{invalid, shape_err, Error, Result};

/// Finite MDP with dense transition tensor `P[s, a, s']` and rewards `r[s, a]`.
#[derive(Clone, Debug, PartialEq)]
pub struct TabularMdp {
    n_states: usize,
    n_actions: usize,
    transitions: Vec<f64>,
    rewards: Vec<f64>,
    gamma: f64,
}

/// Row-stochastic `|S| x |A|` action-probability table.
pub type PolicyTable = Vec<Vec<f64>>;

impl TabularMdp {
    pub fn new(
        n_states: usize,
        n_actions: usize,
        transitions: Vec<f64>,
        rewards: Vec<f64>,
        gamma: f64,
    ) -> Result<Self> {
        if n_states == 0 || n_actions == 0 {
            return invalid("MDP needs at least one state and one action");
        }
        if transitions.len() != n_states * n_actions * n_states || rewards.len() != n_states * n_actions {
            return shape_err("tabular_mdp", "transition or reward table has the wrong size");
        }
        if !(0.0..1.0).contains(&gamma) {
            return invalid(format!("discount must lie in [0, 1), got {gamma}"));
        }
        for s in 0..n_states {
            for a in 0..n_actions {
                let row = &transitions[(s * n_actions + a) * n_states..(s * n_actions + a + 1) * n_states];
                if row.iter().any(|&p| p < 0.0 || !p.is_finite()) {
                    return invalid(format!("negative transition probability at ({s}, {a})"));
                }
                let total: f64 = row.iter().sum();
                if (total - 1.0).abs() > 1e-12 {
                    return invalid(format!("P[{s}, {a}, ·] sums to {total}"));
                }
            }
        }
        if rewards.iter().any(|r| !r.is_finite()) {
            return Err(Error::NonFinite("reward table".into()));
        }
        Ok(Self {
            n_states,
            n_actions,
            transitions,
            rewards,
            gamma,
        })
    }

    /// Dense random MDP: Dirichlet(1)-like rows via normalized exponentials,
    /// rewards `U(0, 1)`.
    pub fn random(n_states: usize, n_actions: usize, gamma: f64, rng: &mut impl Rng) -> Result<Self> {
        let mut transitions = Vec::with_capacity(n_states * n_actions * n_states);
        for _ in 0..n_states * n_actions {
            let row: Vec<f64> = (0..n_states)
                .map(|_| -(1.0 - rng.random::<f64>()).ln())
                .collect();
            let total: f64 = row.iter().sum();
            let mut row: Vec<f64> = row.iter().map(|p| p / total).collect();
            // Put the rounding residue on the largest entry so rows sum to 1.
            let residue = 1.0 - row.iter().sum::<f64>();
            let imax = (0..n_states)
                .max_by(|&i, &j| row[i].total_cmp(&row[j]))
                .unwrap_or(0);
            row[imax] += residue;
            transitions.extend(row);
        }
        let rewards = (0..n_states * n_actions).map(|_| rng.random::<f64>()).collect();
        Self::new(n_states, n_actions, transitions, rewards, gamma)
    }

    pub fn n_states(&self) -> usize {
        self.n_states
    }

    pub fn n_actions(&self) -> usize {
        self.n_actions
    }

    pub fn gamma(&self) -> f64 {
        self.gamma
    }

    pub fn p(&self, s: usize, a: usize, next: usize) -> f64 {
        self.transitions[(s * self.n_actions + a) * self.n_states + next]
    }

    pub fn r(&self, s: usize, a: usize) -> f64 {
        self.rewards[s * self.n_actions + a]
    }

    fn check_policy(&self, policy: &PolicyTable) -> Result<()> {
        if policy.len() != self.n_states || policy.iter().any(|row| row.len() != self.n_actions) {
            return shape_err("tabular_true_values", "policy table does not match |S| x |A|");
        }
        for (s, row) in policy.iter().enumerate() {
            let total: f64 = row.iter().sum();
            if (total - 1.0).abs() > 1e-9 || row.iter().any(|&p| p < 0.0) {
                return invalid(format!("policy row {s} is not a distribution (sum {total})"));
            }
        }
        Ok(())
    }

    /// `(P^π, r^π)` after mixing actions by the policy.
    pub fn policy_matrices(&self, policy: &PolicyTable) -> Result<(Vec<Vec<f64>>, Vec<f64>)> {
        self.check_policy(policy)?;
        let n = self.n_states;
        let mut p_pi = vec![vec![0.0; n]; n];
        let mut r_pi = vec![0.0; n];
        for s in 0..n {
            for a in 0..self.n_actions {
                let w = policy[s][a];
                r_pi[s] += w * self.r(s, a);
                for (next, slot) in p_pi[s].iter_mut().enumerate() {
                    *slot += w * self.p(s, a, next);
                }
            }
        }
        Ok((p_pi, r_pi))
    }

    /// One Bellman backup `r^π + γ P^π v`.
    pub fn bellman_backup(&self, policy: &PolicyTable, v: &[f64]) -> Result<Vec<f64>> {
        let (p_pi, r_pi) = self.policy_matrices(policy)?;
        Ok((0..self.n_states)
            .map(|s| r_pi[s] + self.gamma * p_pi[s].iter().zip(v).map(|(p, x)| p * x).sum::<f64>())
            .collect())
    }

    /// Exact `V^π = (I − γP^π)⁻¹ r^π` by a direct linear solve.
    pub fn true_values(&self, policy: &PolicyTable) -> Result<Vec<f64>> {
        let (p_pi, r_pi) = self.policy_matrices(policy)?;
        let n = self.n_states;
        let a: Vec<Vec<f64>> = (0..n)
            .map(|i| {
                (0..n)
                    .map(|j| if i == j { 1.0 } else { 0.0 } - self.gamma * p_pi[i][j])
                    .collect()
            })
            .collect();
        solve_linear(a, r_pi)
    }

    /// `Q^π(s, a) = r(s, a) + γ Σ P(s'|s,a) V^π(s')`.
    pub fn q_values(&self, v: &[f64]) -> Vec<Vec<f64>> {
        (0..self.n_states)
            .map(|s| {
                (0..self.n_actions)
                    .map(|a| {
                        self.r(s, a)
                            + self.gamma
                                * (0..self.n_states).map(|n| self.p(s, a, n) * v[n]).sum::<f64>()
                    })
                    .collect()
            })
            .collect()
    }
}

/// Gaussian elimination with partial pivoting.
pub fn solve_linear(mut a: Vec<Vec<f64>>, mut b: Vec<f64>) -> Result<Vec<f64>> {
    let n = b.len();
    for col in 0..n {
        let piv = (col..n)
            .max_by(|&i, &j| a[i][col].abs().total_cmp(&a[j][col].abs()))
            .unwrap_or(col);
        if a[piv][col].abs() < 1e-14 {
            return invalid("singular Bellman system");
        }
        a.swap(col, piv);
        b.swap(col, piv);
        for row in col + 1..n {
            let f = a[row][col] / a[col][col];
            if f == 0.0 {
                continue;
            }
            for k in col..n {
                a[row][k] -= f * a[col][k];
            }
            b[row] -= f * b[col];
        }
    }
    let mut x = vec![0.0; n];
    for i in (0..n).rev() {
        let s: f64 = (i + 1..n).map(|k| a[i][k] * x[k]).sum();
        x[i] = (b[i] - s) / a[i][i];
    }
    Ok(x)
}

/// Softmax over each row of a logit table.
pub fn softmax_policy(logits: &[Vec<f64>]) -> PolicyTable {
    logits
        .iter()
        .map(|row| {
            let m = row.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            let e: Vec<f64> = row.iter().map(|x| (x - m).exp()).collect();
            let z: f64 = e.iter().sum();
            e.into_iter().map(|x| x / z).collect()
        })
        .collect()
}
