use std::fs;
use std::path::Path;
use std::process::{Command, Output};

const TINY: &str = "iterations = 2
steps_per_iter = 100
policy_hidden = 4
vfa_hidden = 8
pevfa_stream = 8
pevfa_trunk = 8
actor_epochs = 1
critic_epochs = 1
minibatch = 50
historical_steps = 2
embed_dim = 4
opr_hidden = 4
opr_feature = 4
post_hidden = 4
store_every = 1
";

fn lab(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_pevfa-lab"))
        .args(args)
        .env("PEVFA_LAB_THREADS", "1")
        .output()
        .expect("binary runs")
}

fn write_config(dir: &Path, text: &str) -> String {
    let p = dir.join("run.cfg");
    fs::write(&p, text).unwrap();
    p.display().to_string()
}

fn stdout(o: &Output) -> String {
    String::from_utf8(o.stdout.clone()).unwrap()
}

fn stderr(o: &Output) -> String {
    String::from_utf8(o.stderr.clone()).unwrap()
}

#[test]
fn train_then_dump_embeddings() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), TINY);
    let out = dir.path().join("runs");
    let o = lab(&[
        "train", "--config", &cfg, "--seed", "3", "--out", out.to_str().unwrap(),
        "--algo", "ppo-pevfa", "--repr", "opr", "--repr-loss", "aux",
    ]);
    assert!(o.status.success(), "{}", stderr(&o));
    let line = stdout(&o);
    let (run_id, hash) = line.trim().split_once(' ').unwrap();
    assert!(run_id.starts_with("train-point_mass-ppo-pevfa-opr-aux-seed3-"));
    assert_eq!(hash.len(), 64);

    let run = out.join("train-point_mass-ppo-pevfa-opr-aux-seed3");
    let manifest = fs::read_to_string(run.join("manifest.txt")).unwrap();
    assert!(manifest.contains(hash));
    assert!(manifest.contains("file = train_log.csv train-log"));

    let d = lab(&["dump-embeddings", run.to_str().unwrap()]);
    assert!(d.status.success(), "{}", stderr(&d));
    let csv = fs::read_to_string(run.join("embeddings.csv")).unwrap();
    assert_eq!(csv.lines().next().unwrap(), "policy_id,trial,iteration,avg_return,dim_0,dim_1,dim_2,dim_3");
    assert_eq!(csv.lines().count(), 3);
}

#[test]
fn seed_ranges_make_one_directory_each() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "mdps = 1\niterations = 3\ntrain_steps = 5\n");
    let out = dir.path().join("runs");
    let o = lab(&["theory-check", "--config", &cfg, "--seeds", "4..5", "--out", out.to_str().unwrap()]);
    assert!(o.status.success(), "{}", stderr(&o));
    assert_eq!(stdout(&o).lines().count(), 2);
    for s in [4, 5] {
        assert!(out.join(format!("theory-check-seed{s}")).join("theory_summary.csv").is_file());
    }
}

#[test]
fn bad_configs_exit_nonzero_with_a_reason() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("runs");
    let out = out.to_str().unwrap();

    let cfg = write_config(dir.path(), "iteratoins = 4\n");
    let o = lab(&["train", "--config", &cfg, "--out", out]);
    assert!(!o.status.success());
    assert!(stderr(&o).contains("iteratoins"));

    let cfg = write_config(dir.path(), "experiment = train\n");
    let o = lab(&["global-gen", "--config", &cfg, "--out", out]);
    assert!(!o.status.success());
    assert!(stderr(&o).contains("train"));

    let cfg = write_config(dir.path(), TINY);
    let o = lab(&["train", "--config", &cfg, "--out", out, "--repr", "spr"]);
    assert!(!o.status.success());

    let o = lab(&["train", "--config", &cfg, "--seed", "1", "--seeds", "1..2"]);
    assert!(!o.status.success());

    let o = lab(&["dump-embeddings", dir.path().join("nothing").to_str().unwrap()]);
    assert!(!o.status.success());
}
