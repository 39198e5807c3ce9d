//! Configuration, experiment presets, run directories and manifests.

mod checkpoint;
mod config;
mod experiments;
mod manifest;

use std::fs;
use std::path::Path;
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Mutex;

pub use checkpoint::{read_policy, write_policy, Checkpoint, StoredPolicy};
pub use config::{config_hash, parse_entries, parse_seeds, ExperimentConfig, ExperimentKind, GlobalGenConfig};
pub use experiments::{
    dump_embeddings, global_gen, global_gen_experiment, local_gen, local_gen_experiment, run_dir_name, run_seed,
    theory_check_experiment, train_experiment, write_global_gen_csv, GlobalGenRow, TheorySummary, CHECKPOINT_DIR,
    CONFIG_FILE, EMBEDDINGS_FILE, GLOBAL_GEN_HEADER, GLOBAL_GEN_LOG, POLICIES_FILE, THEORY_LOG, THEORY_SUMMARY,
    THEORY_SUMMARY_HEADER, TRAIN_LOG,
};
pub use manifest::{ArtifactManifest, FileRole, MANIFEST_FILE, TOOL_VERSION};

use crate::error::{Error, Result};

pub const THREADS_ENV: &str = "PEVFA_LAB_THREADS";

/// Parallel runs allowed: `PEVFA_LAB_THREADS` if set, else the core count.
pub fn thread_cap() -> Result<usize> {
    match std::env::var(THREADS_ENV) {
        Ok(v) => match v.trim().parse::<usize>() {
            Ok(n) if n > 0 => Ok(n),
            _ => Err(Error::Config(format!("{THREADS_ENV} must be a positive integer, got `{v}`"))),
        },
        Err(_) => Ok(std::thread::available_parallelism().map_or(1, |n| n.get())),
    }
}

/// Runs every seed, at most `threads` at a time. Each seed owns its run
/// directory, so runs never share a file. Manifests come back in seed order.
pub fn run_config(cfg: &ExperimentConfig, threads: usize) -> Result<Vec<ArtifactManifest>> {
    let n = cfg.seeds.len();
    let workers = threads.clamp(1, n);
    if workers == 1 {
        return cfg.seeds.iter().map(|&s| run_seed(cfg, s)).collect();
    }
    let next = AtomicUsize::new(0);
    let results: Mutex<Vec<Option<Result<ArtifactManifest>>>> = Mutex::new((0..n).map(|_| None).collect());
    std::thread::scope(|scope| {
        for _ in 0..workers {
            scope.spawn(|| loop {
                let i = next.fetch_add(1, Ordering::SeqCst);
                if i >= n {
                    break;
                }
                let r = run_seed(cfg, cfg.seeds[i]);
                results.lock().expect("no worker panics while holding the lock")[i] = Some(r);
            });
        }
    });
    results
        .into_inner()
        .expect("workers finished")
        .into_iter()
        .map(|r| r.expect("every seed ran"))
        .collect()
}

/// Reads a config file and applies command-line `overrides` on top. The
/// experiment kind may be restated but not changed.
pub fn load_config(path: &Path, overrides: &[(String, String)]) -> Result<ExperimentConfig> {
    let text = fs::read_to_string(path)
        .map_err(|e| Error::Config(format!("cannot read {}: {e}", path.display())))?;
    let mut entries = parse_entries(&text)?;
    for (k, v) in overrides {
        if k == "experiment" {
            if let Some(old) = entries.get(k) {
                if old != v {
                    return Err(Error::Config(format!("config file is a `{old}` experiment, not `{v}`")));
                }
            }
        }
        entries.insert(k.clone(), v.clone());
    }
    ExperimentConfig::from_entries(entries)
}

pub fn run_experiment(path: &Path, overrides: &[(String, String)]) -> Result<Vec<ArtifactManifest>> {
    let cfg = load_config(path, overrides)?;
    run_config(&cfg, thread_cap()?)
}

#[cfg(test)]
mod tests;
