use rand::Rng;

use super::{check_action, Environment};
use crate::error::Result;

pub const GOAL: [f64; 2] = [1.0, 1.0];
const DT: f64 = 0.1;

/// 2D double integrator chasing a fixed goal.
///
/// `vel += 0.1·a` clipped to `[-1, 1]²`, then `pos += 0.1·vel`; reward is
/// the negative distance to the goal after the move. Observations are
/// `(pos, vel, goal − pos)`.
#[derive(Clone, Debug, PartialEq)]
pub struct PointMass {
    pub pos: [f64; 2],
    pub vel: [f64; 2],
    /// Half-width of the uniform start box around the origin; 0 starts at
    /// the origin.
    pub start_spread: f64,
}

impl PointMass {
    pub const OBS_DIM: usize = 6;
    pub const ACT_DIM: usize = 2;

    pub fn new(start_spread: f64) -> Self {
        Self {
            pos: [0.0; 2],
            vel: [0.0; 2],
            start_spread,
        }
    }

    pub fn at(pos: [f64; 2], vel: [f64; 2]) -> Self {
        Self {
            pos,
            vel,
            start_spread: 0.0,
        }
    }

    pub fn features(&self) -> Vec<f64> {
        vec![
            self.pos[0],
            self.pos[1],
            self.vel[0],
            self.vel[1],
            GOAL[0] - self.pos[0],
            GOAL[1] - self.pos[1],
        ]
    }

    pub fn distance_to_goal(&self) -> f64 {
        ((GOAL[0] - self.pos[0]).powi(2) + (GOAL[1] - self.pos[1]).powi(2)).sqrt()
    }
}

impl Environment for PointMass {
    fn obs_dim(&self) -> usize {
        Self::OBS_DIM
    }

    fn act_dim(&self) -> usize {
        Self::ACT_DIM
    }

    fn reset(&mut self, rng: &mut dyn rand::RngCore) -> Vec<f64> {
        self.vel = [0.0; 2];
        self.pos = if self.start_spread > 0.0 {
            let s = self.start_spread;
            [rng.random_range(-s..s), rng.random_range(-s..s)]
        } else {
            [0.0; 2]
        };
        self.features()
    }

    fn step(&mut self, action: &[f64]) -> Result<(Vec<f64>, f64)> {
        let a = check_action("point_mass", action, Self::ACT_DIM)?;
        for i in 0..2 {
            self.vel[i] = (self.vel[i] + DT * a[i]).clamp(-1.0, 1.0);
            self.pos[i] += DT * self.vel[i];
        }
        Ok((self.features(), -self.distance_to_goal()))
    }
}
