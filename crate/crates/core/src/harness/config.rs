//! Flat `key = value` experiment configuration.

use std::collections::BTreeMap;
use std::path::PathBuf;

use sha2::{Digest, Sha256};

use crate::envs::{EnvConfig, EnvKind};
use crate::error::{Error, Result};
use crate::policy_repr::{Augmentation, ReprConfig, ReprKind, ReprLoss};
use crate::rl_core::{Algo, TrainConfig};
use crate::theory_lab::TabularGpiConfig;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum ExperimentKind {
    GlobalGen,
    LocalGen,
    Train,
    TheoryCheck,
}

impl ExperimentKind {
    pub fn name(self) -> &'static str {
        match self {
            ExperimentKind::GlobalGen => "global-gen",
            ExperimentKind::LocalGen => "local-gen",
            ExperimentKind::Train => "train",
            ExperimentKind::TheoryCheck => "theory-check",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "global-gen" => Some(ExperimentKind::GlobalGen),
            "local-gen" => Some(ExperimentKind::LocalGen),
            "train" => Some(ExperimentKind::Train),
            "theory-check" => Some(ExperimentKind::TheoryCheck),
            _ => None,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct GlobalGenConfig {
    pub policies: usize,
    pub trajectories: usize,
    pub train_fraction: f64,
    pub epochs: usize,
    pub batch: usize,
    pub lr: f64,
    pub gamma: f64,
    pub stream: usize,
    pub trunk: Vec<usize>,
}

impl Default for GlobalGenConfig {
    fn default() -> Self {
        Self {
            policies: 2000,
            trajectories: 20,
            train_fraction: 0.8,
            epochs: 10,
            batch: 256,
            lr: 0.005,
            gamma: 0.99,
            stream: 64,
            trunk: vec![128],
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct ExperimentConfig {
    pub kind: ExperimentKind,
    pub env: EnvKind,
    pub algo: Algo,
    pub train: TrainConfig,
    pub global: GlobalGenConfig,
    pub gpi: TabularGpiConfig,
    pub mdps: usize,
    pub seeds: Vec<u64>,
    pub out: PathBuf,
    pub checkpoint_every: usize,
    pub probe_states: usize,
    pub start_spread: f64,
    pub walker_spread: f64,
    /// Episode length; the environment default when unset.
    pub horizon: Option<usize>,
    /// Keep every this many iterations' policies for embedding dumps; 0 keeps none.
    pub store_every: usize,
    /// Effective key/value pairs, after overrides.
    pub entries: BTreeMap<String, String>,
}

/// Parses `key = value` lines; `#` starts a comment. Duplicate keys are an
/// error. Keys are not checked here.
pub fn parse_entries(text: &str) -> Result<BTreeMap<String, String>> {
    let mut map = BTreeMap::new();
    for (n, raw) in text.lines().enumerate() {
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let Some((k, v)) = line.split_once('=') else {
            return Err(Error::Config(format!("line {}: expected `key = value`, got `{line}`", n + 1)));
        };
        let (k, v) = (k.trim(), v.trim());
        if k.is_empty() {
            return Err(Error::Config(format!("line {}: empty key", n + 1)));
        }
        if map.insert(k.to_owned(), v.to_owned()).is_some() {
            return Err(Error::Config(format!("line {}: duplicate key `{k}`", n + 1)));
        }
    }
    Ok(map)
}

/// SHA-256 over the sorted `key=value` lines, ignoring the output directory.
pub fn config_hash(entries: &BTreeMap<String, String>) -> String {
    let mut h = Sha256::new();
    for (k, v) in entries {
        if k == "out" {
            continue;
        }
        h.update(k.as_bytes());
        h.update(b"=");
        h.update(v.as_bytes());
        h.update(b"\n");
    }
    h.finalize().iter().map(|b| format!("{b:02x}")).collect()
}

fn bad(key: &str, value: &str, what: &str) -> Error {
    Error::Config(format!("`{key}`: cannot read `{value}` as {what}"))
}

fn usize_of(key: &str, v: &str) -> Result<usize> {
    v.parse().map_err(|_| bad(key, v, "a non-negative integer"))
}

fn f64_of(key: &str, v: &str) -> Result<f64> {
    let x: f64 = v.parse().map_err(|_| bad(key, v, "a number"))?;
    if !x.is_finite() {
        return Err(bad(key, v, "a finite number"));
    }
    Ok(x)
}

fn bool_of(key: &str, v: &str) -> Result<bool> {
    v.parse().map_err(|_| bad(key, v, "true or false"))
}

fn list_of(key: &str, v: &str) -> Result<Vec<usize>> {
    if v.is_empty() || v == "none" {
        return Ok(Vec::new());
    }
    v.split(',').map(|p| usize_of(key, p.trim())).collect()
}

/// `a..b` (inclusive) or a comma-separated list.
pub fn parse_seeds(v: &str) -> Result<Vec<u64>> {
    let seeds: Vec<u64> = if let Some((a, b)) = v.split_once("..") {
        let a: u64 = a.trim().parse().map_err(|_| bad("seeds", v, "a seed range"))?;
        let b: u64 = b.trim().parse().map_err(|_| bad("seeds", v, "a seed range"))?;
        if b < a {
            return Err(bad("seeds", v, "an ascending range"));
        }
        (a..=b).collect()
    } else {
        v.split(',')
            .map(|p| p.trim().parse().map_err(|_| bad("seeds", v, "seed integers")))
            .collect::<Result<_>>()?
    };
    if seeds.is_empty() {
        return Err(Error::Config("no seeds given".into()));
    }
    Ok(seeds)
}

const REPR_KEYS: &[&str] = &[
    "repr",
    "repr_loss",
    "embed_dim",
    "opr_hidden",
    "opr_feature",
    "spr_hidden",
    "spr_feature",
    "post_hidden",
    "encoder_lr",
    "cl_lr",
    "aux_lr",
    "augmentation",
    "mask_ratio",
    "noise_scale",
    "spr_pairs",
    "sample_ratio",
    "momentum",
    "policy_batch",
    "aux_batch",
    "decoder_hidden",
];

impl ExperimentConfig {
    pub fn from_text(text: &str) -> Result<Self> {
        Self::from_entries(parse_entries(text)?)
    }

    pub fn hash(&self) -> String {
        config_hash(&self.entries)
    }

    pub fn env_config(&self, seed: u64) -> EnvConfig {
        let mut e = EnvConfig::new(self.env);
        if let Some(h) = self.horizon {
            e.horizon = h;
        }
        e.seed = seed;
        e.start_spread = self.start_spread;
        e.walker_spread = self.walker_spread;
        e
    }

    /// Sorted `key = value` lines that parse back to the same config.
    pub fn to_text(&self) -> String {
        self.entries.iter().map(|(k, v)| format!("{k} = {v}\n")).collect()
    }

    pub fn from_entries(entries: BTreeMap<String, String>) -> Result<Self> {
        let get = |k: &str| entries.get(k).map(String::as_str);
        let kind = match get("experiment") {
            Some(v) => ExperimentKind::parse(v).ok_or_else(|| bad("experiment", v, "an experiment kind"))?,
            None => ExperimentKind::Train,
        };
        let env = match get("env") {
            Some(v) => EnvKind::parse(v).ok_or_else(|| bad("env", v, "an environment id"))?,
            None if kind == ExperimentKind::GlobalGen => EnvKind::PointWalker,
            None => EnvKind::PointMass,
        };
        let algo = match get("algo") {
            Some(v) => Algo::parse(v).ok_or_else(|| bad("algo", v, "ppo or ppo-pevfa"))?,
            None => Algo::Ppo,
        };
        let has_repr_keys = REPR_KEYS.iter().any(|k| entries.contains_key(*k));
        match kind {
            ExperimentKind::Train if algo == Algo::Ppo && has_repr_keys => {
                return Err(Error::Config(
                    "representation options are only valid with algo = ppo-pevfa".into(),
                ));
            }
            ExperimentKind::GlobalGen | ExperimentKind::TheoryCheck if has_repr_keys || get("algo").is_some() => {
                return Err(Error::Config(format!(
                    "{} takes no algorithm or representation options",
                    kind.name()
                )));
            }
            ExperimentKind::LocalGen if algo != Algo::Ppo => {
                return Err(Error::Config("local-gen trains plain PPO with a shadow PeVFA".into()));
            }
            _ => {}
        }

        let repr_kind = match get("repr") {
            Some(v) => ReprKind::parse(v).ok_or_else(|| bad("repr", v, "rpr, random, opr or spr"))?,
            None if kind == ExperimentKind::LocalGen => ReprKind::Rpr,
            None => ReprKind::Opr,
        };
        if kind == ExperimentKind::LocalGen && repr_kind != ReprKind::Rpr {
            return Err(Error::Config("the local-gen shadow PeVFA uses repr = rpr".into()));
        }
        let repr_loss = match get("repr_loss") {
            Some(v) => ReprLoss::parse(v).ok_or_else(|| bad("repr_loss", v, "e2e, cl or aux"))?,
            None => ReprLoss::E2e,
        };
        let mut repr = ReprConfig::new(repr_kind, repr_loss);

        let mut train = TrainConfig::default();
        if kind == ExperimentKind::LocalGen {
            train.policy_hidden = vec![8, 8];
        }
        let mut global = GlobalGenConfig::default();
        let mut gpi = TabularGpiConfig::default();
        let mut cfg_seeds = vec![0];
        let mut out = PathBuf::from("runs");
        let mut checkpoint_every = 0;
        let mut probe_states = crate::theory_lab::PROBE_STATES;
        let mut start_spread = 1.0;
        let mut walker_spread = 0.0;
        let mut mdps = 10;
        let mut horizon = None;
        let mut store_every = 2;

        for (k, v) in &entries {
            let (k, v) = (k.as_str(), v.as_str());
            match k {
                "experiment" | "env" | "algo" | "repr" | "repr_loss" => {}
                "seeds" => cfg_seeds = parse_seeds(v)?,
                "out" => out = PathBuf::from(v),
                "checkpoint_every" => checkpoint_every = usize_of(k, v)?,
                "probe_states" => probe_states = usize_of(k, v)?,
                "start_spread" => start_spread = f64_of(k, v)?,
                "walker_spread" => walker_spread = f64_of(k, v)?,
                "mdps" => mdps = usize_of(k, v)?,
                "store_every" => store_every = usize_of(k, v)?,

                "iterations" => {
                    train.iterations = usize_of(k, v)?;
                    gpi.iterations = train.iterations;
                }
                "steps_per_iter" => train.steps_per_iter = usize_of(k, v)?,
                "policy_hidden" => train.policy_hidden = list_of(k, v)?,
                "vfa_hidden" => train.vfa_hidden = list_of(k, v)?,
                "pevfa_stream" => train.pevfa_stream = usize_of(k, v)?,
                "pevfa_trunk" => train.pevfa_trunk = list_of(k, v)?,
                "policy_lr" => train.policy_lr = f64_of(k, v)?,
                "value_lr" => train.value_lr = f64_of(k, v)?,
                "clip" => train.clip = f64_of(k, v)?,
                "gamma" => {
                    train.gamma = f64_of(k, v)?;
                    global.gamma = train.gamma;
                    gpi.gamma = train.gamma;
                }
                "lambda" => train.lambda = f64_of(k, v)?,
                "minibatch" => train.minibatch = usize_of(k, v)?,
                "actor_epochs" => train.actor_epochs = usize_of(k, v)?,
                "critic_epochs" => train.critic_epochs = usize_of(k, v)?,
                "historical_batch" => train.historical_batch = usize_of(k, v)?,
                "historical_steps" => train.historical_steps = usize_of(k, v)?,
                "historical_every" => train.historical_every = usize_of(k, v)?,
                "buffer_capacity" => train.buffer_capacity = usize_of(k, v)?,
                "recency" => train.recency = f64_of(k, v)?,
                "zero_embed_stream" => train.zero_embed_stream = bool_of(k, v)?,
                "timing" => train.timing = bool_of(k, v)?,

                "embed_dim" => repr.embed_dim = usize_of(k, v)?,
                "opr_hidden" => repr.opr_hidden = usize_of(k, v)?,
                "opr_feature" => repr.opr_feature = usize_of(k, v)?,
                "spr_hidden" => repr.spr_hidden = usize_of(k, v)?,
                "spr_feature" => repr.spr_feature = usize_of(k, v)?,
                "post_hidden" => repr.post_hidden = usize_of(k, v)?,
                "encoder_lr" => repr.encoder_lr = f64_of(k, v)?,
                "cl_lr" => repr.cl_lr = f64_of(k, v)?,
                "aux_lr" => repr.aux_lr = f64_of(k, v)?,
                "augmentation" => {
                    repr.augmentation = match v {
                        "mask" => Augmentation::Mask,
                        "noise" => Augmentation::Noise,
                        _ => return Err(bad(k, v, "mask or noise")),
                    }
                }
                "mask_ratio" => repr.mask_ratio = f64_of(k, v)?,
                "noise_scale" => repr.noise_scale = f64_of(k, v)?,
                "spr_pairs" => repr.spr_pairs = usize_of(k, v)?,
                "sample_ratio" => repr.sample_ratio = f64_of(k, v)?,
                "momentum" => repr.momentum = f64_of(k, v)?,
                "policy_batch" => repr.policy_batch = usize_of(k, v)?,
                "aux_batch" => repr.aux_batch = usize_of(k, v)?,
                "decoder_hidden" => repr.decoder_hidden = list_of(k, v)?,

                "policies" => global.policies = usize_of(k, v)?,
                "trajectories" => global.trajectories = usize_of(k, v)?,
                "horizon" => horizon = Some(usize_of(k, v)?),
                "train_fraction" => global.train_fraction = f64_of(k, v)?,
                "epochs" => global.epochs = usize_of(k, v)?,
                "batch" => global.batch = usize_of(k, v)?,
                "lr" => {
                    global.lr = f64_of(k, v)?;
                    gpi.lr = global.lr;
                }
                "stream" => {
                    global.stream = usize_of(k, v)?;
                    gpi.stream = global.stream;
                }
                "trunk" => {
                    global.trunk = list_of(k, v)?;
                    gpi.trunk = global.trunk.clone();
                }

                "mdp_states" => gpi.states = usize_of(k, v)?,
                "mdp_actions" => gpi.actions = usize_of(k, v)?,
                "gpi_step" => gpi.step_size = f64_of(k, v)?,
                "train_steps" => gpi.train_steps = usize_of(k, v)?,
                "perturbations" => gpi.perturbations = usize_of(k, v)?,
                "perturb_scale" => gpi.perturb_scale = f64_of(k, v)?,
                _ => return Err(Error::Config(format!("unknown config key `{k}`"))),
            }
        }
        let pevfa = algo == Algo::PpoPevfa || kind == ExperimentKind::LocalGen;
        if pevfa {
            repr.validate()?;
            train.repr = Some(repr);
        }
        train.validate()?;
        if kind == ExperimentKind::GlobalGen && global.policies < 10 {
            return Err(Error::Config(format!("global-gen needs at least 10 policies, got {}", global.policies)));
        }
        if kind == ExperimentKind::GlobalGen && !(global.train_fraction > 0.0 && global.train_fraction < 1.0) {
            return Err(Error::Config("train_fraction must lie in (0, 1)".into()));
        }
        if horizon == Some(0) {
            return Err(Error::Config("horizon must be positive".into()));
        }
        if kind == ExperimentKind::GlobalGen && env != EnvKind::PointWalker {
            return Err(Error::Config("global-gen runs on point_walker".into()));
        }
        if start_spread < 0.0 || walker_spread < 0.0 {
            return Err(Error::Config("start spreads must be non-negative".into()));
        }
        if probe_states == 0 {
            return Err(Error::Config("probe_states must be positive".into()));
        }
        Ok(Self {
            kind,
            env,
            algo,
            train,
            global,
            gpi,
            mdps,
            seeds: cfg_seeds,
            out,
            checkpoint_every,
            probe_states,
            start_spread,
            walker_spread,
            horizon,
            store_every,
            entries,
        })
    }
}
