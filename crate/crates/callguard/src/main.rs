//! Thin command-line entry point; all logic lives in the library.

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use callguard::cli::{
    cmd_evaluate, cmd_featurize, cmd_ingest, cmd_report, cmd_sweep, cmd_train, RunConfig,
};
use callguard::error::Error;

#[derive(Parser)]
#[command(
    name = "callguard",
    version,
    about = "Attack detection for LLM-agent tool-call sessions"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Normalize a raw trajectory file into the session format.
    Ingest {
        #[arg(long)]
        input: PathBuf,
        /// Dataset adapter to use.
        #[arg(long, value_parser = ["normalized", "ras_eval", "atbench"])]
        source: String,
        #[arg(long)]
        out: PathBuf,
        /// Skip records with hard parse errors instead of aborting.
        #[arg(long)]
        skip_bad: bool,
    },
    /// Featurize a normalized corpus into the tensor dump format.
    Featurize {
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        corpus: PathBuf,
        #[arg(long)]
        out: PathBuf,
        /// Feature mode override: metadata | content | combined.
        #[arg(long)]
        mode: Option<String>,
        /// Also dump the typed edge lists here.
        #[arg(long)]
        graphs_out: Option<PathBuf>,
    },
    /// Train one model artifact per configured seed.
    Train {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        mode: Option<String>,
        #[arg(long)]
        model: Option<String>,
        #[arg(long)]
        protocol: Option<String>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Evaluate saved artifacts on their recomputed test splits.
    Evaluate {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        out: Option<PathBuf>,
        /// Also dump ROC and PR curve points per seed.
        #[arg(long)]
        curves: bool,
    },
    /// Label-efficiency sweep (supervised vs SSL fine-tuning).
    Sweep {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Leakage-gap and per-attack-mode reports.
    Report {
        #[arg(long)]
        config: PathBuf,
        /// Task-disjoint vs random-split AUROC gap, metadata and content.
        #[arg(long)]
        leakage: bool,
        /// Per-attack-mode recall/AUROC table.
        #[arg(long)]
        per_mode: bool,
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

fn load_config(
    path: &PathBuf,
    seed: Option<u64>,
    mode: Option<String>,
    model: Option<String>,
    protocol: Option<String>,
    out: Option<PathBuf>,
) -> Result<RunConfig, Error> {
    let mut config = RunConfig::load(path)?;
    if let Some(seed) = seed {
        config.seeds = vec![seed];
    }
    if let Some(mode) = mode {
        config.feature_mode = mode;
    }
    if let Some(model) = model {
        config.model = model;
    }
    if let Some(protocol) = protocol {
        config.protocol = protocol;
    }
    if let Some(out) = out {
        config.out_dir = out;
    }
    Ok(config)
}

fn run(cli: Cli) -> Result<(), Error> {
    match cli.command {
        Command::Ingest {
            input,
            source,
            out,
            skip_bad,
        } => {
            let outcome = cmd_ingest(&input, &source, &out, skip_bad)?;
            println!(
                "wrote {} sessions to {} ({} skipped, {} bad)",
                outcome.written,
                out.display(),
                outcome.skipped,
                outcome.bad
            );
            println!("{}", serde_json::to_string_pretty(&outcome.stats)?);
        }
        Command::Featurize {
            config,
            corpus,
            out,
            mode,
            graphs_out,
        } => {
            let mut config = match config {
                Some(path) => RunConfig::load(&path)?,
                None => RunConfig::default(),
            };
            if let Some(mode) = mode {
                config.feature_mode = mode;
            }
            cmd_featurize(&config, &corpus, &out, graphs_out.as_deref())?;
            println!("featurized {} -> {}", corpus.display(), out.display());
        }
        Command::Train {
            config,
            seed,
            mode,
            model,
            protocol,
            out,
        } => {
            let config = load_config(&config, seed, mode, model, protocol, out)?;
            let manifest = cmd_train(&config)?;
            println!(
                "trained {} artifact(s) into {}",
                manifest.artifacts.len(),
                config.out_dir.display()
            );
            for (seed, report) in &manifest.metrics {
                println!(
                    "seed {seed}: test AUROC {}",
                    report
                        .auroc
                        .map_or("undefined".into(), |v| format!("{v:.4}"))
                );
            }
        }
        Command::Evaluate {
            config,
            seed,
            out,
            curves,
        } => {
            let config = load_config(&config, seed, None, None, None, out)?;
            let outcome = cmd_evaluate(&config, curves)?;
            for row in &outcome.aggregate {
                println!("{:<12} {:.4} ± {:.4}", row.metric, row.mean, row.sd);
            }
        }
        Command::Sweep { config, out } => {
            let config = load_config(&config, None, None, None, None, out)?;
            let cells = cmd_sweep(&config)?;
            println!(
                "{}",
                std::fs::read_to_string(config.out_dir.join("sweep.txt"))?
            );
            println!("{} cells written", cells.len());
        }
        Command::Report {
            config,
            leakage,
            per_mode,
            out,
        } => {
            let config = load_config(&config, None, None, None, None, out)?;
            if !leakage && !per_mode {
                return Err(Error::Config(
                    "report needs --leakage and/or --per-mode".into(),
                ));
            }
            cmd_report(&config, leakage, per_mode)?;
            for name in ["leakage.txt", "per_mode.txt"] {
                let path = config.out_dir.join(name);
                if path.exists() {
                    println!("{}", std::fs::read_to_string(path)?);
                }
            }
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
