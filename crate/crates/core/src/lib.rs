//! Policy-extended value function approximation (PeVFA).

pub mod autodiff;
pub mod envs;
pub mod error;
pub mod harness;
pub mod nets;
pub mod policy_repr;
pub mod rl_core;
pub mod seeding;
pub mod theory_lab;

pub use error::{Error, Result};
