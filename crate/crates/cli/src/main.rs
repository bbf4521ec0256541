use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};

mod commands;
mod config;
mod context;

use config::{ProviderMode, StrategyChoice};
use context::Context;

/// Cross-lingual caption augmentation and retrieval evaluation.
#[derive(Debug, Parser)]
#[command(name = "xlcap", version)]
struct Cli {
    /// Run configuration (TOML or JSON).
    #[arg(long, short)]
    config: PathBuf,
    /// Output directory; created if missing.
    #[arg(long, short)]
    out: PathBuf,
    /// Override `provider.mode` from the config.
    #[arg(long, value_enum)]
    provider: Option<ProviderMode>,
    /// Override `provider.cache` from the config.
    #[arg(long)]
    cache: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Build the corpus and its splits.
    Ingest,
    /// Write only the split assignment.
    Split,
    /// Count vocabulary mentions per caption set.
    Mentions,
    /// Machine-translate the English training captions.
    Translate,
    /// Embed test images and evaluation captions through the provider.
    Embed,
    /// Produce an augmented caption dataset.
    Augment {
        #[arg(long, value_enum)]
        strategy: Option<StrategyChoice>,
    },
    /// Run an evaluation.
    Eval {
        #[arg(long, value_enum)]
        kind: EvalKind,
    },
    /// Collect the text reports into one file.
    Report,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum EvalKind {
    Retrieval,
    Recognition,
    Stats,
}

fn run(cli: Cli) -> anyhow::Result<()> {
    let mut ctx = Context::new(&cli.config, &cli.out)?;
    if let Some(mode) = cli.provider {
        ctx.config.provider.mode = mode;
    }
    if let Some(cache) = cli.cache {
        ctx.config.provider.cache = cache;
    }
    match cli.command {
        Command::Ingest => commands::ingest(&ctx),
        Command::Split => commands::split(&ctx),
        Command::Mentions => commands::mentions(&ctx),
        Command::Translate => commands::translate(&ctx),
        Command::Embed => commands::embed(&ctx),
        Command::Augment { strategy } => {
            let strategy = strategy
                .or(ctx.config.augment.strategy)
                .ok_or_else(|| anyhow::anyhow!("no strategy given on the command line or in augment.strategy"))?;
            commands::augment(&ctx, strategy)
        }
        Command::Eval { kind } => match kind {
            EvalKind::Retrieval => commands::eval_retrieval(&ctx),
            EvalKind::Recognition => commands::eval_recognition(&ctx),
            EvalKind::Stats => commands::eval_stats(&ctx),
        },
        Command::Report => commands::report(&ctx),
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}
