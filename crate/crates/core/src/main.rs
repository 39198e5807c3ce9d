use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use pevfa::harness::{dump_embeddings, run_experiment, ExperimentKind};

#[derive(Parser)]
#[command(name = "pevfa-lab", version, about = "PeVFA experiments: generalization, training and theory checks")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Train and test a PeVFA on a population of synthetic walker policies.
    GlobalGen(RunArgs),
    /// PPO with a conventional critic and a shadow PeVFA.
    LocalGen(RunArgs),
    /// PPO or PPO-PeVFA training.
    Train(RunArgs),
    /// Exact-oracle checks on random tabular MDPs.
    TheoryCheck(RunArgs),
    /// Re-encode a run's stored policies with its final encoder.
    DumpEmbeddings {
        /// Run directory holding manifest.txt.
        run_dir: PathBuf,
    },
}

#[derive(Args)]
struct RunArgs {
    #[arg(long)]
    config: PathBuf,
    #[arg(long, conflicts_with = "seeds")]
    seed: Option<u64>,
    /// `N..M` (inclusive) or `a,b,c`.
    #[arg(long)]
    seeds: Option<String>,
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long)]
    algo: Option<String>,
    #[arg(long)]
    repr: Option<String>,
    #[arg(long = "repr-loss")]
    repr_loss: Option<String>,
}

impl RunArgs {
    fn overrides(&self, kind: ExperimentKind) -> Vec<(String, String)> {
        let mut o = vec![("experiment".to_owned(), kind.name().to_owned())];
        let mut put = |k: &str, v: Option<String>| {
            if let Some(v) = v {
                o.push((k.to_owned(), v));
            }
        };
        put("seeds", self.seed.map(|s| s.to_string()).or_else(|| self.seeds.clone()));
        put("out", self.out.as_ref().map(|p| p.display().to_string()));
        put("algo", self.algo.clone());
        put("repr", self.repr.clone());
        put("repr_loss", self.repr_loss.clone());
        o
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    let (kind, args) = match &cli.command {
        Command::GlobalGen(a) => (ExperimentKind::GlobalGen, a),
        Command::LocalGen(a) => (ExperimentKind::LocalGen, a),
        Command::Train(a) => (ExperimentKind::Train, a),
        Command::TheoryCheck(a) => (ExperimentKind::TheoryCheck, a),
        Command::DumpEmbeddings { run_dir } => {
            return match dump_embeddings(run_dir) {
                Ok(p) => {
                    println!("{}", p.display());
                    ExitCode::SUCCESS
                }
                Err(e) => {
                    eprintln!("pevfa-lab: {e}");
                    ExitCode::FAILURE
                }
            };
        }
    };
    match run_experiment(&args.config, &args.overrides(kind)) {
        Ok(manifests) => {
            for m in manifests {
                println!("{} {}", m.run_id, m.config_hash);
            }
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("pevfa-lab: {e}");
            ExitCode::FAILURE
        }
    }
}
