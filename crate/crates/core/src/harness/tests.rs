use super::*;
use proptest::prelude::*;
use std::collections::BTreeMap;
use std::path::PathBuf;

use crate::nets::GaussianPolicy;
use crate::policy_repr::{Encoder, PolicyRecord, ReprConfig, ReprKind, ReprLoss, Representation};
use crate::rl_core::Algo;
use crate::seeding::SeedStream;

fn cfg(text: &str) -> Result<ExperimentConfig> {
    ExperimentConfig::from_text(text)
}

fn err_text<T: std::fmt::Debug>(r: Result<T>) -> String {
    r.unwrap_err().to_string()
}

#[test]
fn parses_comments_lists_and_defaults() {
    let c = cfg("# tiny run\nexperiment = train\nalgo = ppo-pevfa  # trailing\nrepr = spr\nrepr_loss = cl\npolicy_hidden = 8,8\nseeds = 2..4\n")
        .unwrap();
    assert_eq!(c.kind, ExperimentKind::Train);
    assert_eq!(c.algo, Algo::PpoPevfa);
    assert_eq!(c.train.policy_hidden, vec![8, 8]);
    assert_eq!(c.seeds, vec![2, 3, 4]);
    let r = c.train.repr.as_ref().unwrap();
    assert_eq!((r.kind, r.loss), (ReprKind::Spr, ReprLoss::Cl));
    assert_eq!(c.train.steps_per_iter, 2000);

    let plain = cfg("").unwrap();
    assert_eq!(plain.kind, ExperimentKind::Train);
    assert!(plain.train.repr.is_none());
    assert_eq!(plain.seeds, vec![0]);
}

#[test]
fn unknown_and_duplicate_keys_are_named() {
    assert!(err_text(cfg("iteratoins = 3")).contains("iteratoins"));
    assert!(err_text(cfg("clip = 0.2\nclip = 0.3")).contains("clip"));
    assert!(err_text(cfg("just words")).contains("key = value"));
    assert!(err_text(cfg("clip = wide")).contains("clip"));
}

#[test]
fn invalid_combinations_are_rejected() {
    assert!(err_text(cfg("algo = ppo\nrepr = opr")).contains("ppo-pevfa"));
    assert!(cfg("algo = ppo-pevfa\nrepr = rpr\nrepr_loss = cl").is_err());
    assert!(cfg("experiment = global-gen\npolicies = 9").is_err());
    assert!(cfg("experiment = global-gen\nenv = point_mass").is_err());
    assert!(cfg("experiment = local-gen\nrepr = opr").is_err());
    assert!(cfg("seeds = 5..2").is_err());
    assert!(cfg("seeds = ").is_err());
    assert!(cfg("clip = 1.5").is_err());
    assert!(cfg("experiment = bake").is_err());
}

#[test]
fn local_gen_defaults() {
    let c = cfg("experiment = local-gen").unwrap();
    assert_eq!(c.train.policy_hidden, vec![8, 8]);
    assert_eq!(c.train.repr.as_ref().unwrap().kind, ReprKind::Rpr);
    assert_eq!(c.algo, Algo::Ppo);
}

#[test]
fn seed_lists() {
    assert_eq!(parse_seeds("7").unwrap(), vec![7]);
    assert_eq!(parse_seeds("1, 5,9").unwrap(), vec![1, 5, 9]);
    assert_eq!(parse_seeds("3..3").unwrap(), vec![3]);
    assert!(parse_seeds("a..b").is_err());
}

proptest! {
    #[test]
    fn hash_ignores_key_order_and_output_dir(seed in 0u64..1000) {
        let keys = [("clip", "0.1"), ("iterations", "3"), ("algo", "ppo"), ("gamma", "0.9"), ("seeds", "1")];
        let mut order: Vec<usize> = (0..keys.len()).collect();
        let mut s = seed;
        for i in (1..order.len()).rev() {
            s = s.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
            order.swap(i, (s >> 33) as usize % (i + 1));
        }
        let text: String = order.iter().map(|&i| format!("{} = {}\n", keys[i].0, keys[i].1)).collect();
        let a = cfg(&text).unwrap();
        let b = cfg(&format!("{text}out = elsewhere/{seed}\n")).unwrap();
        let sorted: String = keys.iter().map(|(k, v)| format!("{k} = {v}\n")).collect();
        prop_assert_eq!(a.hash(), cfg(&sorted).unwrap().hash());
        prop_assert_eq!(a.hash(), b.hash());
        prop_assert_eq!(a.hash().len(), 64);
    }

    #[test]
    fn config_text_round_trips(iters in 1usize..50, clip in 0.01f64..0.9) {
        let c = cfg(&format!("iterations = {iters}\nclip = {clip}\nexperiment = train\n")).unwrap();
        let back = cfg(&c.to_text()).unwrap();
        prop_assert_eq!(back.hash(), c.hash());
        prop_assert_eq!(back.train, c.train);
    }
}

#[test]
fn hash_changes_with_values() {
    assert_ne!(cfg("clip = 0.1").unwrap().hash(), cfg("clip = 0.2").unwrap().hash());
    let mut e = BTreeMap::new();
    e.insert("a".to_owned(), "1".to_owned());
    assert_eq!(config_hash(&e), config_hash(&e.clone()));
}

#[test]
fn manifest_round_trips() {
    let mut m = ArtifactManifest::new("run-1".into(), "train", "ab".repeat(32), 4);
    m.add("train_log.csv", FileRole::TrainLog);
    m.add("checkpoints/iter_00002.txt", FileRole::Checkpoints);
    m.add("train_log.csv", FileRole::TrainLog);
    assert_eq!(m.files.len(), 2);
    let back: ArtifactManifest = m.to_string().parse().unwrap();
    assert_eq!(back, m);
    assert_eq!(back.with_role(FileRole::TrainLog).count(), 1);
    assert!("run_id = x\nfile = a.csv nonsense\nconfig_hash = y".parse::<ArtifactManifest>().is_err());
}

fn tiny_policy(seed: u64) -> GaussianPolicy {
    GaussianPolicy::init(6, &[3], 2, &mut SeedStream::new(seed).rng("p")).unwrap()
}

#[test]
fn checkpoint_round_trips_every_encoder() {
    for kind in [ReprKind::Opr, ReprKind::Spr, ReprKind::Rpr] {
        let policy = tiny_policy(1);
        let repr = Representation::new(
            ReprConfig::new(kind, ReprLoss::E2e),
            6,
            2,
            &policy.mean.sizes(),
            3,
            &mut SeedStream::new(3).rng("r"),
        )
        .unwrap();
        let ck = Checkpoint {
            iteration: 7,
            policy,
            vfa: Some(crate::nets::init_vfa(6, &[4], &mut SeedStream::new(2).rng("v")).unwrap()),
            pevfa: Some(crate::nets::PeVFAParams::init(6, 5, 4, &[3], &mut SeedStream::new(2).rng("q")).unwrap()),
            encoder: repr.encoder.clone(),
        };
        let mut buf = Vec::new();
        ck.write(&mut buf).unwrap();
        let back = Checkpoint::read(buf.as_slice()).unwrap();
        assert_eq!(back, ck);
        if kind == ReprKind::Opr {
            assert!(matches!(back.encoder, Some(Encoder::Opr(_))));
        }
    }
    assert!(Checkpoint::read("checkpoint 1\npolicy\n".as_bytes()).is_err());
}

#[test]
fn stored_policies_round_trip() {
    let policy = tiny_policy(5);
    let states: Vec<Vec<f64>> = (0..10).map(|i| vec![i as f64 * 0.1; 6]).collect();
    let actions: Vec<Vec<f64>> = (0..10).map(|i| vec![-(i as f64), 0.5]).collect();
    let rec = PolicyRecord::new(3, 3, policy, states.clone(), actions, vec![0.0; 10], -1.25).unwrap();
    let s = StoredPolicy::from_record(&rec, 4);
    assert_eq!(s.states.len(), 4);
    assert_eq!(s.states[1], states[2]);
    let mut buf = Vec::new();
    s.write(&mut buf).unwrap();
    StoredPolicy::from_record(&rec, 100).write(&mut buf).unwrap();
    let back = StoredPolicy::read_all(buf.as_slice()).unwrap();
    assert_eq!(back.len(), 2);
    assert_eq!(back[0], s);
    assert_eq!(back[1].states.len(), 10);
}

fn tmp() -> tempfile::TempDir {
    tempfile::tempdir().unwrap()
}

fn tiny_train(out: &std::path::Path, extra: &str) -> ExperimentConfig {
    cfg(&format!(
        "experiment = train\niterations = 3\nsteps_per_iter = 100\npolicy_hidden = 4\nvfa_hidden = 8\n\
         pevfa_stream = 8\npevfa_trunk = 8\nactor_epochs = 2\ncritic_epochs = 2\nminibatch = 50\n\
         historical_steps = 4\nstore_every = 1\ncheckpoint_every = 2\nout = {}\n{extra}",
        out.display()
    ))
    .unwrap()
}

const SMALL_OPR: &str = "algo = ppo-pevfa\nrepr = opr\nembed_dim = 4\nopr_hidden = 4\nopr_feature = 4\npost_hidden = 4\n";

#[test]
fn train_run_writes_listed_files_and_dumps() {
    let dir = tmp();
    let c = tiny_train(dir.path(), SMALL_OPR);
    let m = run_seed(&c, 1).unwrap();
    let run = dir.path().join(run_dir_name(&c, 1));
    assert_eq!(m, ArtifactManifest::read(&run).unwrap());
    assert_eq!(m.with_role(FileRole::TrainLog).count(), 1);
    for (p, _) in &m.files {
        assert!(run.join(p).is_file(), "{}", p.display());
    }
    let ckpts: Vec<PathBuf> = m.with_role(FileRole::Checkpoints).map(PathBuf::from).collect();
    assert!(ckpts.contains(&PathBuf::from("checkpoints/iter_00002.txt")));
    assert!(ckpts.contains(&PathBuf::from("checkpoints/iter_00003.txt")));
    let log = fs::read_to_string(run.join(TRAIN_LOG)).unwrap();
    assert_eq!(log.lines().count(), 4);

    let csv = dump_embeddings(&run).unwrap();
    let first = fs::read(&csv).unwrap();
    let text = String::from_utf8(first.clone()).unwrap();
    let lines: Vec<&str> = text.lines().collect();
    assert_eq!(lines.len(), 4);
    assert_eq!(lines[1].split(',').count(), 4 + 4);
    assert_eq!(fs::read(dump_embeddings(&run).unwrap()).unwrap(), first);
    assert_eq!(ArtifactManifest::read(&run).unwrap().with_role(FileRole::Embeddings).count(), 1);
}

#[test]
fn dump_rejects_runs_without_checkpoints_or_representation() {
    let dir = tmp();
    let c = tiny_train(dir.path(), "");
    run_seed(&c, 0).unwrap();
    let run = dir.path().join(run_dir_name(&c, 0));
    assert!(dump_embeddings(&run).is_err());
    assert!(dump_embeddings(&dir.path().join("missing")).is_err());

    let c = tiny_train(dir.path(), "algo = ppo-pevfa\nrepr = rpr\n");
    run_seed(&c, 0).unwrap();
    let run = dir.path().join(run_dir_name(&c, 0));
    for e in fs::read_dir(run.join(CHECKPOINT_DIR)).unwrap() {
        fs::remove_file(e.unwrap().path()).unwrap();
    }
    let mut m = ArtifactManifest::read(&run).unwrap();
    m.files.retain(|(p, _)| !p.starts_with(CHECKPOINT_DIR));
    m.write(&run).unwrap();
    assert!(err_text(dump_embeddings(&run)).contains("checkpoints"));
}

#[test]
fn seeds_run_in_parallel_like_in_sequence() {
    let a = tmp();
    let b = tmp();
    let mut ca = tiny_train(a.path(), "seeds = 0..2\n");
    ca.train.iterations = 2;
    let mut cb = ca.clone();
    cb.out = b.path().to_path_buf();
    let ma = run_config(&ca, 1).unwrap();
    let mb = run_config(&cb, 3).unwrap();
    assert_eq!(ma, mb);
    assert_eq!(ma.iter().map(|m| m.seed).collect::<Vec<_>>(), vec![0, 1, 2]);
    for s in 0..3 {
        let name = run_dir_name(&ca, s);
        assert_eq!(
            fs::read(a.path().join(&name).join(TRAIN_LOG)).unwrap(),
            fs::read(b.path().join(&name).join(TRAIN_LOG)).unwrap()
        );
    }
}

#[test]
fn global_gen_is_small_and_deterministic() {
    let c = cfg("experiment = global-gen\npolicies = 20\ntrajectories = 2\nepochs = 2\nbatch = 32\nstream = 8\ntrunk = 8\n").unwrap();
    let a = global_gen(&c, 4).unwrap();
    assert_eq!(a.len(), 3);
    assert_eq!(a[0].epoch, 0);
    assert!(a.iter().all(|r| r.train_loss.is_finite() && r.test_loss.is_finite()));
    assert_eq!(a, global_gen(&c, 4).unwrap());
    assert_ne!(a, global_gen(&c, 5).unwrap());
}

#[test]
fn local_gen_rows_and_theory_records() {
    let dir = tmp();
    let c = cfg(&format!(
        "experiment = local-gen\niterations = 4\nsteps_per_iter = 100\nvfa_hidden = 8\npevfa_stream = 8\n\
         pevfa_trunk = 8\nactor_epochs = 1\ncritic_epochs = 1\nminibatch = 50\nhistorical_steps = 3\n\
         probe_states = 16\nout = {}\n",
        dir.path().display()
    ))
    .unwrap();
    let m = run_seed(&c, 2).unwrap();
    let run = dir.path().join(run_dir_name(&c, 2));
    let log = fs::read_to_string(run.join(TRAIN_LOG)).unwrap();
    assert_eq!(log.lines().count(), 5);
    for line in log.lines().skip(1) {
        let cols: Vec<f64> = line.split(',').map(|x| x.parse().unwrap()).collect();
        assert!(cols[4..8].iter().all(|v| v.is_finite()), "{line}");
    }
    let theory = fs::read_to_string(run.join(THEORY_LOG)).unwrap();
    assert_eq!(theory.lines().count(), 4);
    assert!(theory.lines().nth(1).unwrap().ends_with("unavailable,unavailable"));
    assert_eq!(m.with_role(FileRole::TheoryLog).count(), 1);
    // The shadow keeps RPR embeddings of the 8-unit policy.
    let csv = fs::read_to_string(dump_embeddings(&run).unwrap()).unwrap();
    assert_eq!(csv.lines().count(), 1 + 2);
}

#[test]
fn theory_check_summary() {
    let dir = tmp();
    let c = cfg(&format!(
        "experiment = theory-check\nmdps = 2\niterations = 6\ntrain_steps = 10\nout = {}\n",
        dir.path().display()
    ))
    .unwrap();
    let m = run_seed(&c, 0).unwrap();
    assert_eq!(m.with_role(FileRole::TheoryLog).count(), 3);
    let summary = fs::read_to_string(dir.path().join(run_dir_name(&c, 0)).join(THEORY_SUMMARY)).unwrap();
    let lines: Vec<&str> = summary.lines().collect();
    assert_eq!(lines[0], THEORY_SUMMARY_HEADER);
    assert_eq!(lines.len(), 3);
    for l in &lines[1..] {
        let cols: Vec<&str> = l.split(',').collect();
        assert_eq!(cols[1], "6");
        assert_eq!(cols[3], "0");
        assert_eq!(cols[4], "0");
    }
}

#[test]
fn overrides_and_kind_conflicts() {
    let dir = tmp();
    let path = dir.path().join("c.txt");
    fs::write(&path, "experiment = train\niterations = 2\n").unwrap();
    let c = load_config(&path, &[("seeds".into(), "4".into()), ("experiment".into(), "train".into())]).unwrap();
    assert_eq!(c.seeds, vec![4]);
    assert!(load_config(&path, &[("experiment".into(), "global-gen".into())]).is_err());
    assert!(load_config(&dir.path().join("nope.txt"), &[]).is_err());
}
