use rand::seq::index;
use rand::{Rng, SeedableRng};

use super::augment::{augment_opr, augment_opr_noise, spr_sample_indices};
use super::aux::AuxDecoder;
use super::contrastive::{infonce_tape, ContrastiveHead};
use super::encoder::{Encoder, EncoderInput};
use super::opr::OprEncoder;
use super::rpr::{random_pr, rpr_encode_gaussian};
use super::spr::{pairs_tensor, SprEncoder};
use super::{Augmentation, PolicyRecord, ReprConfig, ReprKind, ReprLoss};
use crate::autodiff::{AdamConfig, AdamState, ParamSet, Tape, Tensor, Var};
use crate::error::{invalid, Error, Result};
use crate::nets::{BoundPeVFA, PeVFAParams};
use crate::seeding::{derive_seed, Rng as ChaRng};

/// A representation choice together with everything it trains.
#[derive(Clone, Debug)]
pub struct Representation {
    pub config: ReprConfig,
    pub encoder: Option<Encoder>,
    pub head: Option<ContrastiveHead>,
    pub decoder: Option<AuxDecoder>,
    encoder_opt: Option<AdamState>,
    head_opt: Option<AdamState>,
    decoder_opt: Option<AdamState>,
    seed: u64,
    rpr_dim: usize,
}

impl Representation {
    /// `policy_sizes` are the mean-network widths of the policies that will
    /// be encoded; `seed` keys random codes and evaluation-time pair draws.
    pub fn new(
        config: ReprConfig,
        state_dim: usize,
        act_dim: usize,
        policy_sizes: &[usize],
        seed: u64,
        rng: &mut impl Rng,
    ) -> Result<Self> {
        config.validate()?;
        let rpr_dim = policy_sizes.windows(2).map(|w| (w[0] + 1) * w[1]).sum::<usize>() + act_dim;
        let c = &config;
        let encoder = match c.kind {
            ReprKind::Opr => Some(Encoder::Opr(OprEncoder::init(
                policy_sizes,
                act_dim,
                c.opr_hidden,
                c.opr_feature,
                c.post_hidden,
                c.embed_dim,
                rng,
            )?)),
            ReprKind::Spr => Some(Encoder::Spr(SprEncoder::init(
                state_dim,
                act_dim,
                c.spr_hidden,
                c.spr_feature,
                c.post_hidden,
                c.embed_dim,
                rng,
            )?)),
            ReprKind::Rpr | ReprKind::Random => None,
        };
        let head = match (&encoder, c.loss) {
            (Some(e), ReprLoss::Cl) => Some(ContrastiveHead::new(e, c.momentum)?),
            _ => None,
        };
        let decoder = match c.loss {
            ReprLoss::Aux => Some(AuxDecoder::init(state_dim, c.embed_dim, &c.decoder_hidden, act_dim, rng)?),
            _ => None,
        };
        let encoder_opt = encoder
            .as_ref()
            .map(|e| AdamState::new(AdamConfig::with_lr(c.encoder_lr), e));
        let head_opt = head.as_ref().map(|h| AdamState::new(AdamConfig::with_lr(c.cl_lr), &h.w));
        let decoder_opt = decoder
            .as_ref()
            .map(|d| AdamState::new(AdamConfig::with_lr(c.aux_lr), d));
        Ok(Self {
            config,
            encoder,
            head,
            decoder,
            encoder_opt,
            head_opt,
            decoder_opt,
            seed,
            rpr_dim,
        })
    }

    pub fn kind(&self) -> ReprKind {
        self.config.kind
    }

    pub fn embed_dim(&self) -> usize {
        match self.config.kind {
            ReprKind::Rpr => self.rpr_dim,
            ReprKind::Random => self.config.embed_dim,
            ReprKind::Opr | ReprKind::Spr => self.config.embed_dim,
        }
    }

    /// Fixed (non-learned) embedding, for RPR and random codes.
    fn fixed(&self, record: &PolicyRecord) -> Result<Vec<f64>> {
        match self.config.kind {
            ReprKind::Rpr => Ok(rpr_encode_gaussian(&record.policy)),
            ReprKind::Random => random_pr(record.id, self.config.embed_dim, self.seed),
            _ => invalid("learned representation has no fixed embedding"),
        }
    }

    fn spr_input(&self, record: &PolicyRecord, count: usize, rng: &mut impl Rng) -> Result<EncoderInput> {
        let n = record.steps();
        let idx = index::sample(rng, n, count.min(n)).into_vec();
        Ok(EncoderInput::Pairs(pairs_tensor(&record.states, &record.actions, &idx)?))
    }

    fn augmented_params(&self, record: &PolicyRecord, rng: &mut impl Rng) -> Result<EncoderInput> {
        let mut p = record.policy.clone();
        p.mean = match self.config.augmentation {
            Augmentation::Mask => augment_opr(&p.mean, self.config.mask_ratio, rng)?,
            Augmentation::Noise => augment_opr_noise(&p.mean, self.config.noise_scale, rng)?,
        };
        Ok(EncoderInput::Params(p))
    }

    /// Encoder input for one policy. SPR draws `count` pairs; OPR optionally
    /// augments the parameters.
    fn input(&self, record: &PolicyRecord, count: usize, augment: bool, rng: &mut impl Rng) -> Result<EncoderInput> {
        match self.config.kind {
            ReprKind::Spr => self.spr_input(record, count, rng),
            _ if augment => self.augmented_params(record, rng),
            _ => Ok(EncoderInput::Params(record.policy.clone())),
        }
    }

    fn pair_count(&self, records: &[&PolicyRecord]) -> usize {
        records
            .iter()
            .map(|r| r.steps())
            .min()
            .unwrap_or(0)
            .min(self.config.spr_pairs)
    }

    /// Deterministic embeddings `[records x embed]`. SPR pair draws are
    /// keyed on the policy id, so a policy always sees the same pairs.
    pub fn embed_many(&self, records: &[&PolicyRecord]) -> Result<Tensor> {
        if records.is_empty() {
            return invalid("no policies to embed");
        }
        let Some(enc) = &self.encoder else {
            let rows = records.iter().map(|r| self.fixed(r)).collect::<Result<Vec<_>>>()?;
            return Tensor::stack_rows(&rows);
        };
        let count = self.pair_count(records);
        let inputs = records
            .iter()
            .map(|r| {
                let mut rng = ChaRng::seed_from_u64(derive_seed(self.seed, "spr-eval", r.id));
                self.input(r, count, false, &mut rng)
            })
            .collect::<Result<Vec<_>>>()?;
        enc.encode(&inputs)
    }

    pub fn embed(&self, record: &PolicyRecord) -> Result<Vec<f64>> {
        Ok(self.embed_many(&[record])?.into_data())
    }
}

/// How a PeVFA regression batch is drawn from stored policies.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct BatchSpec {
    /// Distinct policies per batch.
    pub policies: usize,
    /// State samples per batch, spread evenly over the chosen policies.
    pub samples: usize,
    /// Exponential recency weight per iteration of age; 0 is uniform.
    pub recency: f64,
}

/// `policies` index the record slice; `slots[i]` says which of them state
/// row `i` belongs to.
#[derive(Clone, Debug, PartialEq)]
pub struct ValueBatch {
    pub policies: Vec<usize>,
    pub slots: Vec<usize>,
    pub states: Tensor,
    pub targets: Tensor,
}

pub fn sample_value_batch(records: &[PolicyRecord], spec: &BatchSpec, rng: &mut impl Rng) -> Result<ValueBatch> {
    if records.is_empty() || spec.samples == 0 || spec.policies == 0 {
        return invalid("value batch needs records and positive sizes");
    }
    let p = spec.policies.min(records.len());
    let policies = if spec.recency == 0.0 {
        index::sample(rng, records.len(), p).into_vec()
    } else {
        let newest = records.iter().map(|r| r.iteration).max().unwrap_or(0);
        let weight = |i: usize| (-spec.recency * (newest - records[i].iteration) as f64).exp().max(1e-300);
        index::sample_weighted(rng, records.len(), weight, p)
            .map_err(|e| Error::InvalidArgument(format!("recency weights: {e}")))?
            .into_vec()
    };
    let mut slots = Vec::with_capacity(spec.samples);
    let mut rows = Vec::with_capacity(spec.samples);
    let mut targets = Vec::with_capacity(spec.samples);
    for k in 0..spec.samples {
        let slot = k % p;
        let r = &records[policies[slot]];
        let i = rng.random_range(0..r.steps());
        slots.push(slot);
        rows.push(r.states[i].clone());
        targets.push(r.returns[i]);
    }
    Ok(ValueBatch {
        policies,
        slots,
        states: Tensor::stack_rows(&rows)?,
        targets: Tensor::matrix(spec.samples, 1, targets)?,
    })
}

/// Mean squared error of `V(s, χ)` against the batch targets, with
/// `embeddings` holding one row per chosen policy.
pub fn pevfa_value_loss(tape: &mut Tape, pevfa: &BoundPeVFA, embeddings: Var, batch: &ValueBatch) -> Result<Var> {
    let s = tape.constant(batch.states.clone());
    let y = tape.constant(batch.targets.clone());
    let v = pevfa.forward_grouped(tape, s, embeddings, &batch.slots)?;
    let diff = tape.sub(v, y)?;
    let sq = tape.square(diff);
    Ok(tape.mean(sq))
}

#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct StepLosses {
    pub value: f64,
    pub cl: f64,
    pub aux: f64,
}

impl StepLosses {
    pub fn representation(&self) -> f64 {
        self.cl + self.aux
    }
}

/// One joint gradient step on a batch of stored policies. The PeVFA value
/// loss always reaches a learnable encoder; CL and AUX terms are added per
/// the configured loss. The PeVFA itself is updated only when `pevfa_opt`
/// is given.
pub fn representation_step(
    repr: &mut Representation,
    pevfa: &mut PeVFAParams,
    pevfa_opt: Option<&mut AdamState>,
    records: &[PolicyRecord],
    spec: &BatchSpec,
    rng: &mut impl Rng,
) -> Result<StepLosses> {
    let loss_kind = repr.config.loss;
    if loss_kind == ReprLoss::Cl && records.len() < 2 {
        return invalid("contrastive training needs at least two policies");
    }
    let spec = BatchSpec {
        policies: if loss_kind == ReprLoss::Cl { spec.policies.max(2) } else { spec.policies },
        ..*spec
    };
    let batch = sample_value_batch(records, &spec, rng)?;
    let chosen: Vec<&PolicyRecord> = batch.policies.iter().map(|&i| &records[i]).collect();

    let mut tape = Tape::new();
    let bpevfa = match pevfa_opt {
        Some(_) => pevfa.bind(&mut tape),
        None => pevfa.bind_const(&mut tape),
    };
    let benc = repr.encoder.as_ref().map(|e| e.bind(&mut tape));
    let augment = loss_kind == ReprLoss::Cl;
    let count = repr.pair_count(&chosen);
    let emb = match &benc {
        Some(b) => {
            let inputs = chosen
                .iter()
                .map(|r| repr.input(r, count, augment, rng))
                .collect::<Result<Vec<_>>>()?;
            b.encode(&mut tape, &inputs)?
        }
        None => {
            let rows = chosen.iter().map(|r| repr.fixed(r)).collect::<Result<Vec<_>>>()?;
            tape.constant(Tensor::stack_rows(&rows)?)
        }
    };
    let value = pevfa_value_loss(&mut tape, &bpevfa, emb, &batch)?;
    let mut total = value;

    let mut cl = None;
    let mut w_var = None;
    if let (Some(head), ReprLoss::Cl) = (&repr.head, loss_kind) {
        let key_inputs = chosen
            .iter()
            .map(|r| match repr.config.kind {
                ReprKind::Spr => {
                    let EncoderInput::Pairs(pairs) = repr.spr_input(r, count, rng)? else {
                        unreachable!()
                    };
                    let keep = spr_sample_indices(pairs.rows(), repr.config.sample_ratio, rng)?;
                    let rows: Vec<Vec<f64>> = keep.iter().map(|&i| pairs.row_slice(i).to_vec()).collect();
                    Ok(EncoderInput::Pairs(Tensor::stack_rows(&rows)?))
                }
                _ => repr.augmented_params(r, rng),
            })
            .collect::<Result<Vec<_>>>()?;
        let keys = head.target.encode(&key_inputs)?;
        let keys = tape.constant(keys);
        let w = tape.param(head.w.clone());
        let l = infonce_tape(&mut tape, emb, keys, w)?;
        total = tape.add(total, l)?;
        cl = Some(l);
        w_var = Some(w);
    }

    let mut aux = None;
    let mut dec_vars = None;
    if let (Some(dec), ReprLoss::Aux) = (&repr.decoder, loss_kind) {
        let per = (repr.config.aux_batch / chosen.len()).max(1);
        let mut states = Vec::new();
        let mut actions = Vec::new();
        let mut slots = Vec::new();
        for (slot, r) in chosen.iter().enumerate() {
            for _ in 0..per {
                let i = rng.random_range(0..r.steps());
                states.push(r.states[i].clone());
                actions.push(r.actions[i].clone());
                slots.push(slot);
            }
        }
        let bd = dec.bind(&mut tape);
        let s = tape.constant(Tensor::stack_rows(&states)?);
        let a = tape.constant(Tensor::stack_rows(&actions)?);
        let e = tape.gather_rows(emb, &slots)?;
        let l = bd.loss(&mut tape, s, e, a)?;
        total = tape.add(total, l)?;
        aux = Some(l);
        dec_vars = Some(bd.vars());
    }

    let losses = StepLosses {
        value: tape.value(value).item(),
        cl: cl.map_or(0.0, |v| tape.value(v).item()),
        aux: aux.map_or(0.0, |v| tape.value(v).item()),
    };
    if !tape.value(total).item().is_finite() {
        return Err(Error::NonFinite(format!("representation loss {losses:?}")));
    }
    if benc.is_none() && pevfa_opt.is_none() {
        return Ok(losses);
    }
    let grads = tape.backward(total)?;
    if let Some(opt) = pevfa_opt {
        opt.step(pevfa, &grads.collect(&tape, &bpevfa.vars()))?;
    }
    if let (Some(b), Some(enc), Some(opt)) = (&benc, repr.encoder.as_mut(), repr.encoder_opt.as_mut()) {
        opt.step(enc, &grads.collect(&tape, &b.vars()))?;
    }
    if let (Some(w), Some(head), Some(opt)) = (w_var, repr.head.as_mut(), repr.head_opt.as_mut()) {
        opt.step(&mut head.w, &grads.collect(&tape, &[w]))?;
        if let Some(enc) = &repr.encoder {
            head.track(enc)?;
        }
    }
    if let (Some(vars), Some(dec), Some(opt)) = (dec_vars, repr.decoder.as_mut(), repr.decoder_opt.as_mut()) {
        opt.step(dec, &grads.collect(&tape, &vars))?;
    }
    Ok(losses)
}

/// One representation-training pass: the PeVFA is read, not updated.
pub fn train_representation(
    repr: &mut Representation,
    pevfa: &PeVFAParams,
    records: &[PolicyRecord],
    spec: &BatchSpec,
    rng: &mut impl Rng,
) -> Result<StepLosses> {
    let mut frozen = pevfa.clone();
    representation_step(repr, &mut frozen, None, records, spec, rng)
}

impl Representation {
    /// Total number of trainable representation parameters (encoder, `W`,
    /// decoder).
    pub fn num_params(&self) -> usize {
        self.encoder.as_ref().map_or(0, |e| e.num_params())
            + self.head.as_ref().map_or(0, |h| h.w.len())
            + self.decoder.as_ref().map_or(0, |d| d.num_params())
    }
}
