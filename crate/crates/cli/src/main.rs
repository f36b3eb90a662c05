use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use gla_core::experiment::commands;
use gla_core::experiment::{ExperimentConfig, Suite};
use gla_core::GlaError;

#[derive(Parser)]
#[command(name = "gla", version, about = "Global-local attention fusion for multimodal detection")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Render the synthetic dataset described by a config.
    GenData {
        #[arg(long)]
        config: PathBuf,
        #[arg(long, default_value = "data")]
        out: PathBuf,
    },
    /// Train one model and write a checkpoint directory.
    Train {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        data: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Evaluate a checkpoint on the test split.
    Eval {
        #[arg(long)]
        ckpt: PathBuf,
        #[arg(long)]
        data: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Train and evaluate every arm of an ablation suite.
    Ablate {
        #[arg(long)]
        suite: String,
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        data: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Write attention heatmaps for selected frames.
    ExportAttn {
        #[arg(long)]
        ckpt: PathBuf,
        #[arg(long)]
        data: PathBuf,
        /// Comma-separated frame ids.
        #[arg(long)]
        frames: String,
        #[arg(long)]
        out: PathBuf,
    },
}

enum Failure {
    Validation(String),
    Runtime(String),
}

impl From<GlaError> for Failure {
    fn from(e: GlaError) -> Self {
        if e.is_validation() {
            Failure::Validation(e.to_string())
        } else {
            Failure::Runtime(e.to_string())
        }
    }
}

fn threads() -> Result<usize, Failure> {
    match std::env::var("GLA_THREADS") {
        Ok(v) => match v.trim().parse::<usize>() {
            Ok(n) if n >= 1 => Ok(n),
            _ => Err(Failure::Validation(format!("GLA_THREADS must be a positive integer, got '{v}'"))),
        },
        Err(_) => Ok(std::thread::available_parallelism().map_or(1, |n| n.get())),
    }
}

fn run(cli: Cli) -> Result<(), Failure> {
    match cli.command {
        Command::GenData { config, out } => {
            let cfg = ExperimentConfig::load(&config)?;
            let m = commands::gen_data(&cfg, &out)?;
            log::info!("wrote {} frames to {}", m.frame_count(), out.display());
        }
        Command::Train { config, data, out } => {
            let cfg = ExperimentConfig::load(&config)?;
            commands::train_cmd(&cfg, &data, &out)?;
        }
        Command::Eval { ckpt, data, out } => {
            commands::eval_cmd(&ckpt, &data, &out)?;
        }
        Command::Ablate {
            suite,
            config,
            data,
            out,
        } => {
            let suite: Suite = suite.parse().map_err(Failure::Validation)?;
            let cfg = ExperimentConfig::load(&config)?;
            let results = commands::ablate_cmd(suite, &cfg, &data, &out, threads()?)?;
            let failed: Vec<&str> = results
                .iter()
                .filter(|r| r.report.is_err())
                .map(|r| r.label.as_str())
                .collect();
            if !failed.is_empty() {
                return Err(Failure::Runtime(format!("arms failed: {}", failed.join(", "))));
            }
        }
        Command::ExportAttn { ckpt, data, frames, out } => {
            let frames = commands::parse_frames(&frames)?;
            let written = commands::export_cmd(&ckpt, &data, &frames, &out)?;
            log::info!("wrote {} heatmaps", written.len());
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Validation(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(1)
        }
        Err(Failure::Runtime(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(2)
        }
    }
}
