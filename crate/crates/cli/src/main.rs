mod commands;
mod config;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

/// Exit status of each failure class.
pub mod exit {
    pub const USAGE: u8 = 2;
    pub const CONFIG: u8 = 3;
    pub const DATA: u8 = 4;
    pub const NUMERICAL: u8 = 5;
    pub const OTHER: u8 = 1;
}

#[derive(Parser, Debug)]
#[command(name = "interflow", version, about = "Pretrain on frame interpolation, fine-tune for optical flow")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Args, Debug, Clone)]
pub struct Common {
    /// TOML configuration layered over the built-in defaults.
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long)]
    pub seed: Option<u64>,
    /// Threads preparing samples.
    #[arg(long)]
    pub workers: Option<usize>,
    /// Output directory.
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Write into a non-empty output directory.
    #[arg(long)]
    pub force: bool,
    /// Directory that relative manifest paths resolve against.
    #[arg(long, env = "INTERFLOW_DATA_ROOT")]
    pub data_root: Option<PathBuf>,
    /// Compute device; only `cpu` is available.
    #[arg(long, default_value = "cpu")]
    pub device: String,
}

#[derive(Args, Debug, Clone)]
pub struct TrainArgs {
    #[command(flatten)]
    pub common: Common,
    /// Override the schedule's epoch budget.
    #[arg(long)]
    pub epochs: Option<usize>,
    /// Continue from a training checkpoint.
    #[arg(long)]
    pub resume: Option<PathBuf>,
}

#[derive(Subcommand, Debug)]
pub enum Command {
    /// Write a synthetic corpus with ground-truth flow and a manifest.
    GenSynthetic {
        #[command(flatten)]
        common: Common,
    },
    /// Unsupervised interpolation pretraining.
    Pretrain(TrainArgs),
    /// Swap the head of a pretrained network and train on ground-truth flow.
    Finetune {
        #[command(flatten)]
        train: TrainArgs,
        /// Checkpoint to start from (overrides `init` in the config).
        #[arg(long)]
        init: Option<PathBuf>,
    },
    /// Flow training from a fresh initialization.
    Scratch(TrainArgs),
    /// PSNR/SSIM of an interpolation network against linear blending.
    EvalInterp {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        checkpoint: PathBuf,
    },
    /// EPE and Fl-all of a flow network on every ground-truth pair.
    EvalFlow {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        checkpoint: PathBuf,
    },
    /// Validation EPE against the number of fine-tuning pairs.
    Sweep {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        checkpoint: PathBuf,
        /// Comma-separated subset sizes.
        #[arg(long, value_delimiter = ',')]
        sizes: Option<Vec<usize>>,
        #[arg(long)]
        repeats: Option<usize>,
        #[arg(long)]
        epochs: Option<usize>,
    },
    /// Fine-tune from a pretrained checkpoint and from scratch on the same data.
    Compare {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        init: Option<PathBuf>,
        #[arg(long)]
        epochs: Option<usize>,
    },
    /// Interpolate a center frame or estimate flow for a frame sequence.
    Infer {
        #[arg(long)]
        checkpoint: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        force: bool,
        /// Input frames in temporal order.
        #[arg(required = true)]
        frames: Vec<PathBuf>,
    },
}

/// A command-line usage problem detected after parsing.
#[derive(Debug, thiserror::Error)]
#[error("{0}")]
pub struct UsageError(pub String);

fn exit_code(err: &anyhow::Error) -> u8 {
    if err.downcast_ref::<UsageError>().is_some() {
        return exit::USAGE;
    }
    for cause in err.chain() {
        if let Some(e) = cause.downcast_ref::<interflow::Error>() {
            use interflow::Error::*;
            return match e {
                Config(_) | State(_) => exit::CONFIG,
                Data(_) | Input(_) | Format { .. } | Io { .. } | Image(_) => exit::DATA,
                Numerical(_) => exit::NUMERICAL,
                Construction(_) | Shape(_) => exit::OTHER,
            };
        }
    }
    exit::OTHER
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let cli = Cli::parse();
    match commands::run(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            log::error!("{e:#}");
            ExitCode::from(exit_code(&e))
        }
    }
}
