use rand::Rng;

use super::{check_action, Environment};
use crate::error::Result;

/// Utility `u = x² − y²` whose increments are the walker's rewards.
pub fn utility(x: f64, y: f64) -> f64 {
    x * x - y * y
}

/// `(x, y, sin θ, cos θ, cos x, cos y)` with `θ` the polar angle; `θ = 0` at
/// the origin.
pub fn walker_features(x: f64, y: f64) -> Vec<f64> {
    let theta = if x == 0.0 && y == 0.0 { 0.0 } else { y.atan2(x) };
    vec![x, y, theta.sin(), theta.cos(), x.cos(), y.cos()]
}

/// Point on an unbounded plane, displaced by the action each step.
#[derive(Clone, Debug, PartialEq)]
pub struct PointWalker {
    pub x: f64,
    pub y: f64,
    start: (f64, f64),
    /// Half-width of a uniform box around `start` drawn on reset; 0 is fixed.
    spread: f64,
}

impl PointWalker {
    pub const OBS_DIM: usize = 6;
    pub const ACT_DIM: usize = 2;

    pub fn new() -> Self {
        Self::starting_at(0.0, 0.0)
    }

    pub fn starting_at(x: f64, y: f64) -> Self {
        Self {
            x,
            y,
            start: (x, y),
            spread: 0.0,
        }
    }

    pub fn with_spread(spread: f64) -> Self {
        Self {
            spread,
            ..Self::new()
        }
    }

    pub fn utility(&self) -> f64 {
        utility(self.x, self.y)
    }

    pub fn features(&self) -> Vec<f64> {
        walker_features(self.x, self.y)
    }
}

impl Default for PointWalker {
    fn default() -> Self {
        Self::new()
    }
}

impl Environment for PointWalker {
    fn obs_dim(&self) -> usize {
        Self::OBS_DIM
    }

    fn act_dim(&self) -> usize {
        Self::ACT_DIM
    }

    fn reset(&mut self, rng: &mut dyn rand::RngCore) -> Vec<f64> {
        (self.x, self.y) = self.start;
        if self.spread > 0.0 {
            self.x += rng.random_range(-self.spread..self.spread);
            self.y += rng.random_range(-self.spread..self.spread);
        }
        self.features()
    }

    fn step(&mut self, action: &[f64]) -> Result<(Vec<f64>, f64)> {
        let a = check_action("point_walker", action, Self::ACT_DIM)?;
        let before = self.utility();
        self.x += a[0];
        self.y += a[1];
        let reward = (self.utility() - before) / 10.0;
        Ok((self.features(), reward))
    }
}
