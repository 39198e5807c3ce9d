use std::fs::{self, File};
use std::io::{BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use rand::seq::SliceRandom;

use super::checkpoint::{Checkpoint, StoredPolicy};
use super::config::{ExperimentConfig, ExperimentKind};
use super::manifest::{ArtifactManifest, FileRole};
use crate::autodiff::{AdamConfig, AdamState, Tape, Tensor};
use crate::envs::{rollout, synth_policy_population};
use crate::error::{Error, Result};
use crate::nets::{GaussianPolicy, PeVFAParams};
use crate::policy_repr::{rpr_encode, write_embeddings_csv, EmbeddingRow, ReprKind, Representation};
use crate::rl_core::{mc_returns, pevfa_mse, write_log_header, write_log_row, Algo, IterationLog, Trainer};
use crate::seeding::{derive_seed, SeedStream};
use crate::theory_lab::{
    contraction_ratio, lemma2_track, policy_distance, theorem1_check, write_theory_csv, LossRecord, OracleKind,
};

pub const CONFIG_FILE: &str = "config.txt";
pub const TRAIN_LOG: &str = "train_log.csv";
pub const THEORY_LOG: &str = "theory.csv";
pub const GLOBAL_GEN_LOG: &str = "global_gen.csv";
pub const THEORY_SUMMARY: &str = "theory_summary.csv";
pub const POLICIES_FILE: &str = "policies.txt";
pub const EMBEDDINGS_FILE: &str = "embeddings.csv";
pub const CHECKPOINT_DIR: &str = "checkpoints";

pub const GLOBAL_GEN_HEADER: &str = "epoch,train_loss,test_loss";
pub const THEORY_SUMMARY_HEADER: &str =
    "mdp,iterations,thm1_premise_held,thm1_violations,bound_violations,lhat_bound_violations,non_contractions";

/// Directory name of one seed's run under the output directory.
pub fn run_dir_name(cfg: &ExperimentConfig, seed: u64) -> String {
    match cfg.kind {
        ExperimentKind::Train => match &cfg.train.repr {
            Some(r) if cfg.algo == Algo::PpoPevfa => format!(
                "train-{}-{}-{}-{}-seed{seed}",
                cfg.env.name(),
                cfg.algo.name(),
                r.kind.name(),
                r.loss.name()
            ),
            _ => format!("train-{}-{}-seed{seed}", cfg.env.name(), cfg.algo.name()),
        },
        ExperimentKind::LocalGen => format!("local-gen-{}-seed{seed}", cfg.env.name()),
        k => format!("{}-seed{seed}", k.name()),
    }
}

fn create(path: &Path) -> Result<BufWriter<File>> {
    Ok(BufWriter::new(File::create(path)?))
}

/// Runs one seed of the configured experiment into `out/<run dir>/`.
pub fn run_seed(cfg: &ExperimentConfig, seed: u64) -> Result<ArtifactManifest> {
    let name = run_dir_name(cfg, seed);
    let dir = cfg.out.join(&name);
    fs::create_dir_all(&dir)?;
    let hash = cfg.hash();
    let mut m = ArtifactManifest::new(format!("{name}-{}", &hash[..12]), cfg.kind.name(), hash, seed);
    fs::write(dir.join(CONFIG_FILE), cfg.to_text())?;
    m.add(CONFIG_FILE, FileRole::Config);
    let result = match cfg.kind {
        ExperimentKind::GlobalGen => global_gen_experiment(cfg, seed, &dir, &mut m),
        ExperimentKind::LocalGen => local_gen_experiment(cfg, seed, &dir, &mut m),
        ExperimentKind::Train => train_experiment(cfg, seed, &dir, &mut m),
        ExperimentKind::TheoryCheck => theory_check_experiment(cfg, seed, &dir, &mut m).map(|_| ()),
    };
    // Whatever was written stays listed, also on failure.
    m.write(&dir)?;
    result.map(|_| m)
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct GlobalGenRow {
    pub epoch: usize,
    pub train_loss: f64,
    pub test_loss: f64,
}

struct PolicyData {
    embedding: Vec<f64>,
    states: Tensor,
    returns: Vec<f64>,
}

/// Row-weighted mean squared error over a set of policies.
fn split_mse(net: &PeVFAParams, data: &[PolicyData], idx: &[usize]) -> Result<f64> {
    let mut total = 0.0;
    let mut rows = 0;
    for &i in idx {
        let d = &data[i];
        total += pevfa_mse(net, &d.embedding, &d.states, &d.returns)? * d.returns.len() as f64;
        rows += d.returns.len();
    }
    Ok(total / rows as f64)
}

/// PeVFA over raw parameters of synthetic walker policies, trained on one
/// part of the population and evaluated on the rest. Row 0 is the
/// untrained network.
pub fn global_gen(cfg: &ExperimentConfig, seed: u64) -> Result<Vec<GlobalGenRow>> {
    let g = &cfg.global;
    let seeds = SeedStream::new(seed);
    let env = cfg.env_config(seed);
    let pop = synth_policy_population(g.policies, &mut seeds.rng("policy-init"))?;
    let mut sampling = seeds.rng("sampling");
    let data = pop
        .iter()
        .map(|p| {
            let trajs = rollout(&env, p, g.trajectories, env.horizon, &mut sampling)?;
            let mut states = Vec::new();
            let mut returns = Vec::new();
            for t in &trajs {
                states.extend(t.states.iter().cloned());
                returns.extend(mc_returns(&t.rewards, g.gamma)?);
            }
            Ok(PolicyData {
                embedding: rpr_encode(p),
                states: Tensor::stack_rows(&states)?,
                returns,
            })
        })
        .collect::<Result<Vec<_>>>()?;

    let mut order: Vec<usize> = (0..data.len()).collect();
    order.shuffle(&mut seeds.rng("split"));
    let n_train = ((data.len() as f64 * g.train_fraction).round() as usize).clamp(1, data.len() - 1);
    let (train, test) = order.split_at(n_train);

    let embed_dim = data[0].embedding.len();
    let mut net = PeVFAParams::init(env.kind.obs_dim(), embed_dim, g.stream, &g.trunk, &mut seeds.rng("value-init"))?;
    let mut opt = AdamState::new(AdamConfig::with_lr(g.lr), &net);
    let mut rng = seeds.rng("critic");
    let mut rows_idx: Vec<(usize, usize)> = train
        .iter()
        .flat_map(|&p| (0..data[p].returns.len()).map(move |i| (p, i)))
        .collect();

    let mut out = Vec::with_capacity(g.epochs + 1);
    out.push(GlobalGenRow {
        epoch: 0,
        train_loss: split_mse(&net, &data, train)?,
        test_loss: split_mse(&net, &data, test)?,
    });
    for epoch in 1..=g.epochs {
        rows_idx.shuffle(&mut rng);
        for chunk in rows_idx.chunks(g.batch.max(1)) {
            let n = chunk.len();
            let xs = Tensor::from_fn(n, env.kind.obs_dim(), |r, c| data[chunk[r].0].states.get(chunk[r].1, c));
            let es = Tensor::from_fn(n, embed_dim, |r, c| data[chunk[r].0].embedding[c]);
            let ys = Tensor::matrix(n, 1, chunk.iter().map(|&(p, i)| data[p].returns[i]).collect())?;
            let mut tape = Tape::new();
            let b = net.bind(&mut tape);
            let x = tape.constant(xs);
            let e = tape.constant(es);
            let y = tape.constant(ys);
            let v = b.forward(&mut tape, x, e)?;
            let d = tape.sub(v, y)?;
            let sq = tape.square(d);
            let loss = tape.mean(sq);
            let grads = tape.backward(loss)?;
            opt.step(&mut net, &grads.collect(&tape, &b.vars()))?;
        }
        out.push(GlobalGenRow {
            epoch,
            train_loss: split_mse(&net, &data, train)?,
            test_loss: split_mse(&net, &data, test)?,
        });
    }
    Ok(out)
}

pub fn write_global_gen_csv(w: &mut impl Write, rows: &[GlobalGenRow]) -> Result<()> {
    writeln!(w, "{GLOBAL_GEN_HEADER}")?;
    for r in rows {
        writeln!(w, "{},{},{}", r.epoch, r.train_loss, r.test_loss)?;
    }
    Ok(())
}

pub fn global_gen_experiment(cfg: &ExperimentConfig, seed: u64, dir: &Path, m: &mut ArtifactManifest) -> Result<()> {
    let rows = global_gen(cfg, seed)?;
    let mut w = create(&dir.join(GLOBAL_GEN_LOG))?;
    write_global_gen_csv(&mut w, &rows)?;
    w.flush()?;
    m.add(GLOBAL_GEN_LOG, FileRole::TrainLog);
    Ok(())
}

fn checkpoint_name(iteration: usize) -> PathBuf {
    Path::new(CHECKPOINT_DIR).join(format!("iter_{iteration:05}.txt"))
}

fn write_checkpoint(t: &Trainer, dir: &Path, m: &mut ArtifactManifest) -> Result<()> {
    let ck = Checkpoint {
        iteration: t.iteration(),
        policy: t.policy.clone(),
        vfa: t.vfa.as_ref().map(|v| v.net.clone()),
        pevfa: t.pevfa.as_ref().map(|p| p.net.clone()),
        encoder: t.pevfa.as_ref().and_then(|p| p.repr.encoder.clone()),
    };
    let rel = checkpoint_name(ck.iteration);
    fs::create_dir_all(dir.join(CHECKPOINT_DIR))?;
    let mut w = create(&dir.join(&rel))?;
    ck.write(&mut w)?;
    w.flush()?;
    m.add(rel, FileRole::Checkpoints);
    Ok(())
}

/// Iterates a trainer to completion, streaming the log, writing
/// checkpoints and keeping policies for embedding dumps. `hook` sees the
/// trainer after each iteration together with the policy that was rolled
/// out in it.
fn drive(
    trainer: &mut Trainer,
    cfg: &ExperimentConfig,
    dir: &Path,
    m: &mut ArtifactManifest,
    mut hook: impl FnMut(&Trainer, &GaussianPolicy, &IterationLog) -> Result<()>,
) -> Result<Vec<IterationLog>> {
    let mut log = create(&dir.join(TRAIN_LOG))?;
    m.add(TRAIN_LOG, FileRole::TrainLog);
    write_log_header(&mut log)?;
    log.flush()?;
    let mut stored = None;
    if cfg.store_every > 0 && trainer.pevfa.is_some() {
        stored = Some(create(&dir.join(POLICIES_FILE))?);
        m.add(POLICIES_FILE, FileRole::Checkpoints);
    }
    let pairs = match &trainer.pevfa {
        Some(p) if p.repr.kind() == ReprKind::Spr => p.repr.config.spr_pairs,
        _ => 1,
    };
    let mut rows = Vec::with_capacity(cfg.train.iterations);
    while trainer.iteration() < cfg.train.iterations {
        let before = trainer.policy.clone();
        let row = trainer.iterate()?;
        write_log_row(&mut log, &row)?;
        log.flush()?;
        if let (Some(w), Some(p)) = (stored.as_mut(), trainer.pevfa.as_ref()) {
            if row.iteration % cfg.store_every == 0 {
                let rec = p.buffer.last().expect("record stored this iteration");
                StoredPolicy::from_record(rec, pairs).write(w)?;
                w.flush()?;
            }
        }
        hook(trainer, &before, &row)?;
        let done = trainer.iteration();
        if cfg.checkpoint_every > 0 && done % cfg.checkpoint_every == 0 && done < cfg.train.iterations {
            write_checkpoint(trainer, dir, m)?;
        }
        rows.push(row);
    }
    write_checkpoint(trainer, dir, m)?;
    Ok(rows)
}

pub fn train_experiment(cfg: &ExperimentConfig, seed: u64, dir: &Path, m: &mut ArtifactManifest) -> Result<()> {
    let mut t = Trainer::new(cfg.train.clone(), cfg.env_config(seed), cfg.algo, seed)?;
    drive(&mut t, cfg, dir, m, |_, _, _| Ok(()))?;
    Ok(())
}

/// Evenly strided probe states from a rollout.
fn probes(states: &[Vec<f64>], count: usize) -> Vec<Vec<f64>> {
    let n = states.len();
    let k = count.clamp(1, n);
    (0..k).map(|i| states[i * n / k].clone()).collect()
}

/// PPO with a VFA and a shadow PeVFA. Returns the log and the loss records
/// along the improvement path, with `f` the root-mean-square error against
/// Monte Carlo returns and `d` the mean symmetrized KL on probe states.
pub fn local_gen(cfg: &ExperimentConfig, seed: u64, dir: &Path, m: &mut ArtifactManifest) -> Result<(Vec<IterationLog>, Vec<LossRecord>)> {
    let mut t = Trainer::with_shadow(cfg.train.clone(), cfg.env_config(seed), seed)?;
    let episodes = cfg.train.steps_per_iter.div_ceil(t.env.horizon);
    let mut records = Vec::new();
    let mut prev: Option<(GaussianPolicy, Vec<Vec<f64>>, IterationLog)> = None;
    let rows = drive(&mut t, cfg, dir, m, |tr, pi, row| {
        if let Some((pi_prev, probe, prow)) = prev.take() {
            records.push(LossRecord {
                iteration: prow.iteration,
                f_pre: prow.pevfa_loss_pre.sqrt(),
                f_post: prow.pevfa_loss_post.sqrt(),
                f_next_pre: row.pevfa_loss_pre.sqrt(),
                d: policy_distance(&pi_prev, pi, &probe)?,
                value_gap: None,
                cross: None,
                oracle: OracleKind::MonteCarlo { samples: episodes },
            });
        }
        let rec = tr.pevfa.as_ref().and_then(|p| p.buffer.last()).expect("shadow PeVFA stores every policy");
        prev = Some((pi.clone(), probes(&rec.states, cfg.probe_states), row.clone()));
        Ok(())
    })?;
    Ok((rows, records))
}

pub fn local_gen_experiment(cfg: &ExperimentConfig, seed: u64, dir: &Path, m: &mut ArtifactManifest) -> Result<()> {
    let (_, records) = local_gen(cfg, seed, dir, m)?;
    let mut w = create(&dir.join(THEORY_LOG))?;
    write_theory_csv(&mut w, &records)?;
    w.flush()?;
    m.add(THEORY_LOG, FileRole::TheoryLog);
    Ok(())
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct TheorySummary {
    pub mdp: usize,
    pub iterations: usize,
    pub premise_held: usize,
    pub violations: usize,
    pub bound_violations: usize,
    /// Per-step bound violations when `L_t` is the sampled estimate.
    pub lhat_bound_violations: usize,
    pub non_contractions: usize,
}

/// Exact-oracle GPI on `mdps` random tabular MDPs, one theory CSV each.
pub fn theory_check_experiment(cfg: &ExperimentConfig, seed: u64, dir: &Path, m: &mut ArtifactManifest) -> Result<Vec<TheorySummary>> {
    let mut summary = Vec::with_capacity(cfg.mdps);
    for k in 0..cfg.mdps {
        let run = crate::theory_lab::run_tabular_gpi(&cfg.gpi, derive_seed(seed, "mdp", k as u64))?;
        let name = format!("theory_mdp{k}.csv");
        let mut w = create(&dir.join(&name))?;
        write_theory_csv(&mut w, &run.records)?;
        w.flush()?;
        m.add(name, FileRole::TheoryLog);
        let rows = theorem1_check(&run.records);
        let count = |f: &dyn Fn(&crate::theory_lab::BoundRow) -> bool, rows: &[crate::theory_lab::BoundRow]| {
            rows.iter().filter(|r| f(r)).count()
        };
        let (bounds, lhat) = if run.records.len() >= 2 {
            (
                count(&|b| b.holds == Some(false), &lemma2_track(&run.records, None)?),
                count(&|b| b.holds == Some(false), &lemma2_track(&run.records, Some(&run.lipschitz))?),
            )
        } else {
            (0, 0)
        };
        summary.push(TheorySummary {
            mdp: k,
            iterations: run.records.len(),
            premise_held: rows.iter().filter(|r| r.condition == Some(true)).count(),
            violations: rows.iter().filter(|r| r.violated()).count(),
            bound_violations: bounds,
            lhat_bound_violations: lhat,
            non_contractions: run
                .records
                .iter()
                .filter(|r| contraction_ratio(r.f_pre, r.f_post).non_contraction)
                .count(),
        });
    }
    let mut w = create(&dir.join(THEORY_SUMMARY))?;
    writeln!(w, "{THEORY_SUMMARY_HEADER}")?;
    for s in &summary {
        writeln!(
            w,
            "{},{},{},{},{},{},{}",
            s.mdp, s.iterations, s.premise_held, s.violations, s.bound_violations, s.lhat_bound_violations, s.non_contractions
        )?;
    }
    w.flush()?;
    m.add(THEORY_SUMMARY, FileRole::TheoryLog);
    Ok(summary)
}

/// Re-encodes every stored policy of a run with its final encoder and
/// writes `embeddings.csv` into the run directory.
pub fn dump_embeddings(run_dir: &Path) -> Result<PathBuf> {
    let mut m = ArtifactManifest::read(run_dir)?;
    let text = fs::read_to_string(run_dir.join(CONFIG_FILE))?;
    let cfg = ExperimentConfig::from_text(&text)?;
    let Some(repr_cfg) = cfg.train.repr.clone() else {
        return Err(Error::Config("run has no policy representation to dump".into()));
    };
    let last = m
        .with_role(FileRole::Checkpoints)
        .filter(|p| p.starts_with(CHECKPOINT_DIR))
        .max()
        .map(Path::to_path_buf)
        .ok_or_else(|| Error::Config(format!("no checkpoints in {}", run_dir.display())))?;
    let ck = Checkpoint::read(BufReader::new(File::open(run_dir.join(&last))?))?;
    let stored = match File::open(run_dir.join(POLICIES_FILE)) {
        Ok(f) => StoredPolicy::read_all(BufReader::new(f))?,
        Err(_) => Vec::new(),
    };
    if stored.is_empty() {
        return Err(Error::Config(format!("no stored policies in {}", run_dir.display())));
    }
    let repr_seed = match cfg.kind {
        ExperimentKind::LocalGen => derive_seed(m.seed, "shadow", 0),
        _ => m.seed,
    };
    let p = &ck.policy;
    let mut repr = Representation::new(
        repr_cfg,
        p.obs_dim(),
        p.act_dim(),
        &p.mean.sizes(),
        repr_seed,
        &mut SeedStream::new(repr_seed).rng("repr-init"),
    )?;
    repr.encoder = ck.encoder;
    let rows = stored
        .iter()
        .map(|s| {
            Ok(EmbeddingRow {
                policy_id: s.id,
                trial: m.seed,
                iteration: s.iteration,
                avg_return: s.avg_return,
                embedding: repr.embed(&s.to_record()?)?,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    let mut w = create(&run_dir.join(EMBEDDINGS_FILE))?;
    write_embeddings_csv(&mut w, &rows)?;
    w.flush()?;
    m.add(EMBEDDINGS_FILE, FileRole::Embeddings);
    m.write(run_dir)?;
    Ok(run_dir.join(EMBEDDINGS_FILE))
}
