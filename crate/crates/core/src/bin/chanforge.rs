//! Command-line front end for the channel generation and evaluation
//! pipeline. Artifacts chain through content-hash manifests; re-running a
//! command with the same config and seed reproduces its outputs bit for bit.

use std::path::{Path, PathBuf};

use clap::{Parser, Subcommand};

use chanforge_core::pipeline::{
    cmd_augment, cmd_distill, cmd_evaluate, cmd_generate, cmd_report, cmd_simulate,
    cmd_train_dm, cmd_train_receiver, ExperimentConfig, FrameProfile,
};

/// Environment variable prepended to relative output paths.
const OUT_ROOT_ENV: &str = "CHANFORGE_OUT_ROOT";

#[derive(Parser)]
#[command(name = "chanforge", version, about = "Scenario-conditioned channel generation and link evaluation")]
struct Cli {
    /// Experiment config (JSON). Defaults apply when omitted.
    #[arg(long, global = true)]
    config: Option<PathBuf>,

    /// Master seed override.
    #[arg(long, global = true)]
    seed: Option<u64>,

    /// Worker threads for generation (default 1 for strict reproducibility;
    /// results are identical for any value).
    #[arg(long, global = true, default_value_t = 1)]
    threads: usize,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Simulate the labeled channel dataset.
    Simulate {
        #[arg(long)]
        out: PathBuf,
    },
    /// Train the conditional diffusion model.
    TrainDm {
        #[arg(long)]
        dataset: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Distill the diffusion model into a one-step consistency model.
    Distill {
        #[arg(long)]
        model: PathBuf,
        #[arg(long)]
        dataset: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Generate scenario-specific channels from a trained model.
    Generate {
        #[arg(long)]
        model: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Build an augmented training dataset.
    Augment {
        #[arg(long)]
        base: PathBuf,
        /// Generated dataset (required for the generative methods).
        #[arg(long)]
        generated: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Train the superimposed-pilot neural receiver.
    TrainReceiver {
        #[arg(long)]
        channels: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Evaluate receivers over the SNR grid; optionally score a generated
    /// dataset against the test set.
    Evaluate {
        /// Trained receiver checkpoint; baselines always run.
        #[arg(long)]
        receiver: Option<PathBuf>,
        #[arg(long)]
        test: PathBuf,
        /// Dataset for the estimator's prior statistics (usually training).
        #[arg(long)]
        prior: PathBuf,
        #[arg(long)]
        generated: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Join metric CSVs into a comparison table, verifying hash chains.
    Report {
        /// Metric CSV files produced by `evaluate`.
        #[arg(long, num_args = 1..)]
        inputs: Vec<PathBuf>,
        #[arg(long)]
        out: PathBuf,
    },
}

fn resolve_out(path: PathBuf) -> PathBuf {
    if path.is_absolute() {
        return path;
    }
    match std::env::var_os(OUT_ROOT_ENV) {
        Some(root) => Path::new(&root).join(path),
        None => path,
    }
}

fn load_config(cli_config: &Option<PathBuf>, seed: Option<u64>) -> chanforge_core::Result<ExperimentConfig> {
    let mut cfg = match cli_config {
        Some(p) => ExperimentConfig::load(p)?,
        None => ExperimentConfig::default(),
    };
    if let Some(s) = seed {
        cfg.seed = s;
    }
    if cfg.profile == FrameProfile::Paper {
        eprintln!(
            "warning: paper profile selected; training at this scale takes far longer than desk scale"
        );
    }
    Ok(cfg)
}

fn run() -> chanforge_core::Result<()> {
    let cli = Cli::parse();
    let cfg = load_config(&cli.config, cli.seed)?;
    let written = match cli.command {
        Command::Simulate { out } => cmd_simulate(&cfg, &resolve_out(out))?,
        Command::TrainDm { dataset, out } => cmd_train_dm(&cfg, &dataset, &resolve_out(out))?,
        Command::Distill { model, dataset, out } => {
            cmd_distill(&cfg, &model, &dataset, &resolve_out(out))?
        }
        Command::Generate { model, out } => {
            cmd_generate(&cfg, &model, &resolve_out(out), cli.threads)?
        }
        Command::Augment { base, generated, out } => {
            cmd_augment(&cfg, &base, generated.as_deref(), &resolve_out(out))?
        }
        Command::TrainReceiver { channels, out } => {
            cmd_train_receiver(&cfg, &channels, &resolve_out(out))?
        }
        Command::Evaluate { receiver, test, prior, generated, out } => cmd_evaluate(
            &cfg,
            receiver.as_deref(),
            &test,
            &prior,
            generated.as_deref(),
            &resolve_out(out),
        )?,
        Command::Report { inputs, out } => cmd_report(&inputs, &resolve_out(out))?,
    };
    println!("{}", written.display());
    Ok(())
}

fn main() {
    if let Err(e) = run() {
        eprintln!("error: {e}");
        std::process::exit(1);
    }
}
