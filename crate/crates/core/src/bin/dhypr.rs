use std::path::PathBuf;
use std::process::ExitCode;

use clap::{ArgAction, Parser, Subcommand};

use dhypr_core::cli::{self, RunConfig};

/// Hyperbolic digraph embedding: preprocessing, training, and export.
#[derive(Parser)]
#[command(name = "dhypr", version)]
struct Cli {
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Build and cache the k-order proximity stack plus graph statistics.
    Preprocess {
        /// Edge-list file (`src dst` per line).
        #[arg(long)]
        edges: PathBuf,
        /// Maximum proximity order K.
        #[arg(long, default_value_t = 2)]
        k: usize,
        /// Output directory.
        #[arg(long)]
        out: PathBuf,
    },
    /// Train the configured task end to end.
    Train {
        /// JSON run configuration.
        #[arg(long)]
        config: PathBuf,
        /// Output directory override.
        #[arg(long)]
        out: Option<PathBuf>,
        /// Seed override.
        #[arg(long)]
        seed: Option<u64>,
        /// Deterministic mode (single fixed reduction order).
        #[arg(long, default_value_t = true, action = ArgAction::Set)]
        deterministic: bool,
    },
    /// Recompute embeddings from a checkpoint and write TSV exports.
    Export {
        /// Checkpoint produced by `train`.
        #[arg(long)]
        checkpoint: PathBuf,
        /// Edge-list file of the graph the checkpoint was trained on.
        #[arg(long)]
        edges: PathBuf,
        /// Optional feature CSV.
        #[arg(long)]
        features: Option<PathBuf>,
        /// Optional label file (adds a label column to the projection).
        #[arg(long)]
        labels: Option<PathBuf>,
        /// Output directory.
        #[arg(long)]
        out: PathBuf,
    },
}

fn run(cli: Cli) -> dhypr_core::Result<()> {
    match cli.cmd {
        Cmd::Preprocess { edges, k, out } => {
            let stats = cli::cmd_preprocess(&edges, k, &out)?;
            println!(
                "nodes {}  edges {}  reciprocity {:.4}  avg_degree {:.2}  max_degree {}",
                stats.nodes, stats.edges, stats.reciprocity, stats.avg_degree, stats.max_degree
            );
        }
        Cmd::Train {
            config,
            out,
            seed,
            deterministic,
        } => {
            let mut cfg: RunConfig = RunConfig::from_path(&config)?;
            if let Some(out) = out {
                cfg.out_dir = out;
            }
            if let Some(seed) = seed {
                cfg.seed = seed;
            }
            cfg.deterministic = deterministic;
            let base = config.parent().map(PathBuf::from);
            let report = cli::cmd_train(cfg, base.as_deref())?;
            for (name, value) in &report.metrics {
                println!("test {name} {value}");
            }
            println!("best_epoch {}", report.best_epoch);
        }
        Cmd::Export {
            checkpoint,
            edges,
            features,
            labels,
            out,
        } => {
            cli::cmd_export(
                &checkpoint,
                &edges,
                features.as_deref(),
                labels.as_deref(),
                &out,
            )?;
            println!("wrote embeddings.tsv, mass.tsv, projection.tsv to {}", out.display());
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            let (code, body) = cli::error_envelope(&e);
            eprintln!("{body}");
            ExitCode::from(code as u8)
        }
    }
}
