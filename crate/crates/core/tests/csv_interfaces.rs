//! The CSV files a run leaves behind, read back the way the plotting side
//! reads them.

use std::fs;
use std::path::Path;

use pevfa::harness::{dump_embeddings, run_config, run_dir_name, ExperimentConfig};
use pevfa::rl_core::ITERATION_LOG_HEADER;
use pevfa::theory_lab::THEORY_HEADER;

fn run(text: &str, out: &Path) -> (ExperimentConfig, std::path::PathBuf) {
    let cfg = ExperimentConfig::from_text(&format!("{text}\nseeds = 1\nout = {}\n", out.display())).unwrap();
    run_config(&cfg, 1).unwrap();
    let dir = out.join(run_dir_name(&cfg, 1));
    (cfg, dir)
}

/// Header and rows; every cell must parse as a float unless it is one of
/// the theory flags.
fn table(path: &Path) -> (String, Vec<Vec<String>>) {
    let text = fs::read_to_string(path).unwrap();
    let mut lines = text.lines();
    let header = lines.next().unwrap().to_owned();
    let width = header.split(',').count();
    let rows: Vec<Vec<String>> = lines.map(|l| l.split(',').map(str::to_owned).collect()).collect();
    for r in &rows {
        assert_eq!(r.len(), width, "{}", path.display());
        for c in r {
            let flag = matches!(c.as_str(), "true" | "false" | "unavailable");
            assert!(flag || c.parse::<f64>().is_ok(), "`{c}` in {}", path.display());
        }
    }
    (header, rows)
}

#[test]
fn train_log_has_one_row_per_iteration() {
    let dir = tempfile::tempdir().unwrap();
    let (cfg, run) = run(
        "algo = ppo-pevfa\nrepr = spr\nrepr_loss = cl\niterations = 3\nsteps_per_iter = 120\nhistorical_steps = 3\nspr_pairs = 16\nstore_every = 1",
        dir.path(),
    );
    let (header, rows) = table(&run.join("train_log.csv"));
    assert_eq!(header, ITERATION_LOG_HEADER);
    assert_eq!(rows.len(), cfg.train.iterations);
    for (i, r) in rows.iter().enumerate() {
        assert_eq!(r[0], i.to_string());
        // Contrastive training starts once two policies are stored.
        if i > 0 {
            assert!(r[8].parse::<f64>().unwrap().is_finite(), "representation loss is logged");
        }
    }

    let (header, rows) = table(&dump_embeddings(&run).unwrap());
    let dims = cfg.train.repr.as_ref().unwrap().embed_dim;
    let expected: Vec<String> = ["policy_id", "trial", "iteration", "avg_return"]
        .iter()
        .map(|s| s.to_string())
        .chain((0..dims).map(|i| format!("dim_{i}")))
        .collect();
    assert_eq!(header, expected.join(","));
    assert_eq!(rows.len(), 3);
    assert!(rows.iter().all(|r| r[1] == "1"));
}

#[test]
fn local_gen_writes_comparison_and_theory_tables() {
    let dir = tempfile::tempdir().unwrap();
    let (cfg, run) = run(
        "experiment = local-gen\niterations = 4\nsteps_per_iter = 100\nhistorical_steps = 3\nprobe_states = 8",
        dir.path(),
    );
    let (_, log) = table(&run.join("train_log.csv"));
    assert_eq!(log.len(), cfg.train.iterations);
    let (header, theory) = table(&run.join("theory.csv"));
    assert_eq!(header, THEORY_HEADER);
    // A record needs the loss of the following iteration.
    assert_eq!(theory.len(), cfg.train.iterations - 1);
    for r in &theory {
        let f_pre: f64 = r[1].parse().unwrap();
        let d: f64 = r[5].parse().unwrap();
        assert!(f_pre >= 0.0 && d >= 0.0);
    }
}

#[test]
fn global_gen_and_theory_check_tables() {
    let dir = tempfile::tempdir().unwrap();
    let (cfg, run_dir) = run(
        "experiment = global-gen\npolicies = 30\ntrajectories = 2\nepochs = 3\nstream = 8\ntrunk = 8",
        dir.path(),
    );
    let (header, rows) = table(&run_dir.join("global_gen.csv"));
    assert_eq!(header, "epoch,train_loss,test_loss");
    assert_eq!(rows.len(), cfg.global.epochs + 1);

    let (cfg, run_dir) = run("experiment = theory-check\nmdps = 2\niterations = 4\ntrain_steps = 5", dir.path());
    for k in 0..cfg.mdps {
        let (header, rows) = table(&run_dir.join(format!("theory_mdp{k}.csv")));
        assert_eq!(header, THEORY_HEADER);
        assert_eq!(rows.len(), 4);
        // Exact oracles fill in every column.
        assert!(rows.iter().all(|r| r.iter().all(|c| c != "unavailable" && c != "NaN")));
    }
    let (_, summary) = table(&run_dir.join("theory_summary.csv"));
    assert_eq!(summary.len(), cfg.mdps);
}
