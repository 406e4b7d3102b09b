use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use srdc::harness::{self, ExperimentConfig};
use srdc::trainer::Variant;
use srdc::Error;

#[derive(Parser)]
#[command(name = "srdc", version, about = "Structurally regularized deep clustering for domain adaptation")]
struct Cli {
    /// Default root for run directories when neither --out nor the config sets one.
    #[arg(long, env = "SRDC_OUT", default_value = "runs", global = true)]
    out_root: PathBuf,

    #[command(subcommand)]
    command: Command,
}

#[derive(clap::Args)]
struct Common {
    #[arg(long)]
    config: PathBuf,
    #[arg(long)]
    out: Option<PathBuf>,
    /// Run a single trial seed instead of the config's list.
    #[arg(long)]
    seed: Option<u64>,
}

#[derive(Subcommand)]
enum Command {
    /// Write source.csv and target.csv for a synthetic config.
    GenData(Common),
    /// Train once per seed and aggregate target accuracy.
    Train {
        #[command(flatten)]
        common: Common,
        /// One of source_model, no_source_reg, no_feature_discrim, no_soft_selection, full.
        #[arg(long)]
        ablation: Option<Variant>,
    },
    /// Train all five ablation variants.
    Ablate(Common),
    /// 50/50 target split: SRDC versus the source model on held-out target data.
    Inductive(Common),
    /// Score a checkpoint on a labeled CSV and dump embeddings.
    Eval {
        #[arg(long)]
        checkpoint: PathBuf,
        #[arg(long)]
        data: PathBuf,
        /// Source CSV whose rows are added to the embedding dump.
        #[arg(long)]
        source: Option<PathBuf>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

fn exit_code(e: &Error) -> u8 {
    match e {
        Error::Io { .. } => 4,
        e if e.is_numerical() => 3,
        _ => 2,
    }
}

fn load(common: &Common, root: &Path) -> Result<(ExperimentConfig, PathBuf), Error> {
    let mut cfg = ExperimentConfig::load(&common.config)?;
    if let Some(s) = common.seed {
        cfg.seeds = vec![s];
    }
    let out = match (&common.out, &cfg.output_dir) {
        (Some(o), _) => o.clone(),
        (None, Some(o)) => o.clone(),
        (None, None) => {
            let stem = common.config.file_stem().map_or_else(|| "run".into(), |s| s.to_string_lossy().into_owned());
            root.join(stem)
        }
    };
    Ok((cfg, out))
}

fn run(cli: Cli) -> Result<(), Error> {
    let root = &cli.out_root;
    match cli.command {
        Command::GenData(c) => {
            let (cfg, out) = load(&c, root)?;
            let (s, t) = harness::gen_data(&cfg, &out, cfg.seeds[0])?;
            println!("wrote {} and {}", s.display(), t.display());
        }
        Command::Train { common, ablation } => {
            let (cfg, out) = load(&common, root)?;
            let agg = harness::train(&cfg, &out, ablation)?;
            for r in &agg.runs {
                match r.target_accuracy {
                    Some(a) => println!("seed {}: target accuracy {:.4} (epoch {})", r.seed, a, r.selected_epoch),
                    None => println!("seed {}: trained {} epochs (unlabeled target)", r.seed, r.epochs),
                }
            }
            if !agg.accuracies.is_empty() {
                println!("{}: {:.2} ± {:.2}", agg.variant, 100.0 * agg.mean, 100.0 * agg.std);
            }
            println!("results in {}", out.display());
        }
        Command::Ablate(c) => {
            let (cfg, out) = load(&c, root)?;
            let rows = harness::ablate(&cfg, &out)?;
            println!("{:<20} {:>8} {:>8}", "variant", "mean", "std");
            for r in rows {
                println!("{:<20} {:>8.2} {:>8.2}", r.variant.name(), 100.0 * r.mean, 100.0 * r.std);
            }
            println!("results in {}", out.display());
        }
        Command::Inductive(c) => {
            let (cfg, out) = load(&c, root)?;
            let r = harness::inductive(&cfg, &out)?;
            println!("{:<14} {:>10} {:>10}", "", "train", "test");
            println!("{:<14} {:>10.2} {:>10.2}", "srdc", 100.0 * r.srdc_train_acc, 100.0 * r.srdc_test_acc);
            println!(
                "{:<14} {:>10.2} {:>10.2}",
                "source_model",
                100.0 * r.source_only_train_acc,
                100.0 * r.source_only_test_acc
            );
            println!("results in {}", out.display());
        }
        Command::Eval {
            checkpoint,
            data,
            source,
            out,
        } => {
            let out = out.unwrap_or_else(|| root.join("eval"));
            let r = harness::eval(&checkpoint, &data, source.as_deref(), &out)?;
            println!("accuracy {:.4}, nmi {:.4} over {} rows", r.accuracy, r.nmi, r.support);
            println!("results in {}", out.display());
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_code(&e))
        }
    }
}
