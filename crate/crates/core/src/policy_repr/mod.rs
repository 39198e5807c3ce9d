//! Policy representations (raw, random, OPR, SPR) and their training
//! regimes: end-to-end through the PeVFA loss, contrastive, and policy
//! recovery.

mod augment;
mod aux;
mod contrastive;
mod encoder;
mod learner;
mod opr;
mod rpr;
mod spr;

use std::io::Write;

pub use augment::{augment_opr, augment_opr_noise, augment_spr, spr_sample_indices};
pub use aux::{aux_loss, AuxDecoder, BoundAux};
pub use contrastive::{infonce_loss, infonce_tape, momentum_update, ContrastiveHead};
pub use encoder::{BoundEncoder, Encoder, EncoderInput};
pub use learner::{
    pevfa_value_loss, representation_step, sample_value_batch, train_representation, BatchSpec,
    Representation, StepLosses, ValueBatch,
};
pub use opr::{layer_rows, opr_layer_feature, BoundOpr, OprEncoder};
pub use rpr::{random_pr, rpr_encode, rpr_encode_gaussian};
pub use spr::{pairs_tensor, BoundSpr, SprEncoder};

use crate::error::{invalid, shape_err, Result};
use crate::nets::GaussianPolicy;

pub type PolicyEmbedding = Vec<f64>;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum ReprKind {
    Rpr,
    Random,
    Opr,
    Spr,
}

impl ReprKind {
    pub fn name(self) -> &'static str {
        match self {
            ReprKind::Rpr => "rpr",
            ReprKind::Random => "random",
            ReprKind::Opr => "opr",
            ReprKind::Spr => "spr",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "rpr" => Some(ReprKind::Rpr),
            "random" => Some(ReprKind::Random),
            "opr" => Some(ReprKind::Opr),
            "spr" => Some(ReprKind::Spr),
            _ => None,
        }
    }

    pub fn learnable(self) -> bool {
        matches!(self, ReprKind::Opr | ReprKind::Spr)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum ReprLoss {
    E2e,
    Cl,
    Aux,
}

impl ReprLoss {
    pub fn name(self) -> &'static str {
        match self {
            ReprLoss::E2e => "e2e",
            ReprLoss::Cl => "cl",
            ReprLoss::Aux => "aux",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "e2e" => Some(ReprLoss::E2e),
            "cl" => Some(ReprLoss::Cl),
            "aux" => Some(ReprLoss::Aux),
            _ => None,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Augmentation {
    Mask,
    Noise,
}

#[derive(Clone, Debug, PartialEq)]
pub struct ReprConfig {
    pub kind: ReprKind,
    pub loss: ReprLoss,
    pub embed_dim: usize,
    pub opr_hidden: usize,
    pub opr_feature: usize,
    pub spr_hidden: usize,
    pub spr_feature: usize,
    pub post_hidden: usize,
    pub encoder_lr: f64,
    pub cl_lr: f64,
    pub aux_lr: f64,
    pub augmentation: Augmentation,
    pub mask_ratio: f64,
    pub noise_scale: f64,
    pub spr_pairs: usize,
    pub sample_ratio: f64,
    pub momentum: f64,
    pub policy_batch: usize,
    pub aux_batch: usize,
    pub decoder_hidden: Vec<usize>,
}

impl ReprConfig {
    pub fn new(kind: ReprKind, loss: ReprLoss) -> Self {
        Self {
            kind,
            loss,
            embed_dim: 64,
            opr_hidden: 32,
            opr_feature: 16,
            spr_hidden: 64,
            spr_feature: 32,
            post_hidden: 64,
            encoder_lr: 1e-3,
            cl_lr: 1e-3,
            aux_lr: 1e-3,
            augmentation: Augmentation::Mask,
            mask_ratio: 0.1,
            noise_scale: 0.05,
            spr_pairs: 200,
            sample_ratio: 0.8,
            momentum: 0.05,
            policy_batch: 16,
            aux_batch: 128,
            decoder_hidden: vec![64],
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.loss != ReprLoss::E2e && !self.kind.learnable() {
            return invalid(format!(
                "{} loss needs a learnable representation, not {}",
                self.loss.name(),
                self.kind.name()
            ));
        }
        if self.embed_dim == 0 || self.policy_batch == 0 || self.spr_pairs == 0 || self.aux_batch == 0 {
            return invalid("representation sizes must be positive");
        }
        if !(0.0..=1.0).contains(&self.mask_ratio) || !(self.sample_ratio > 0.0 && self.sample_ratio <= 1.0) {
            return invalid("mask ratio must lie in [0, 1] and sample ratio in (0, 1]");
        }
        if !(self.momentum > 0.0 && self.momentum < 1.0) {
            return invalid(format!("momentum {} outside (0, 1)", self.momentum));
        }
        Ok(())
    }
}

/// One policy met along the improvement path, with its own on-policy data.
#[derive(Clone, Debug, PartialEq)]
pub struct PolicyRecord {
    pub id: u64,
    pub iteration: usize,
    pub policy: GaussianPolicy,
    pub states: Vec<Vec<f64>>,
    pub actions: Vec<Vec<f64>>,
    /// Monte Carlo return from each state, aligned with `states`.
    pub returns: Vec<f64>,
    pub avg_return: f64,
    pub embedding: Option<PolicyEmbedding>,
}

impl PolicyRecord {
    pub fn new(
        id: u64,
        iteration: usize,
        policy: GaussianPolicy,
        states: Vec<Vec<f64>>,
        actions: Vec<Vec<f64>>,
        returns: Vec<f64>,
        avg_return: f64,
    ) -> Result<Self> {
        if states.is_empty() || states.len() != actions.len() || states.len() != returns.len() {
            return shape_err(
                "policy_record",
                format!("{} states, {} actions, {} returns", states.len(), actions.len(), returns.len()),
            );
        }
        Ok(Self {
            id,
            iteration,
            policy,
            states,
            actions,
            returns,
            avg_return,
            embedding: None,
        })
    }

    pub fn steps(&self) -> usize {
        self.states.len()
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct EmbeddingRow {
    pub policy_id: u64,
    pub trial: u64,
    pub iteration: usize,
    pub avg_return: f64,
    pub embedding: PolicyEmbedding,
}

/// `policy_id,trial,iteration,avg_return,dim_0..dim_{D-1}`.
pub fn write_embeddings_csv(w: &mut impl Write, rows: &[EmbeddingRow]) -> Result<()> {
    let Some(first) = rows.first() else {
        return invalid("no embeddings to write");
    };
    let d = first.embedding.len();
    write!(w, "policy_id,trial,iteration,avg_return")?;
    for i in 0..d {
        write!(w, ",dim_{i}")?;
    }
    writeln!(w)?;
    for r in rows {
        if r.embedding.len() != d {
            return shape_err("embeddings_csv", "embedding widths differ between rows");
        }
        write!(w, "{},{},{},{}", r.policy_id, r.trial, r.iteration, r.avg_return)?;
        for v in &r.embedding {
            write!(w, ",{v}")?;
        }
        writeln!(w)?;
    }
    Ok(())
}
