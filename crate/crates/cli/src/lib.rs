//! `lsr`: generate boxworld data, embed it, build roadmaps, plan, train the
//! action proposal network, and evaluate, all from files and seeds.

pub mod args;
mod commands;

use std::path::PathBuf;

use clap::{Parser, Subcommand};

pub use args::ConfigFile;
use args::*;

pub const EXIT_USAGE: u8 = 1;
pub const EXIT_THRESHOLD: u8 = 2;
pub const EXIT_IO: u8 = 3;

#[derive(Debug, Parser)]
#[command(name = "lsr", version, about = "Latent space roadmap experiments on a box-stacking world")]
pub struct Cli {
    /// TOML config with one table per subcommand; flags take precedence.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    Gen(GenArgs),
    Embed(EmbedArgs),
    Build(BuildArgs),
    Plan(PlanArgs),
    TrainApn(TrainApnArgs),
    Eval(EvalArgs),
    OptimizeEmbeddings(OptimizeArgs),
    Sweep(SweepArgs),
}

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("{0}")]
    Usage(String),
    #[error("threshold not met: {0}")]
    Threshold(String),
    #[error("{0}")]
    Io(String),
    #[error(transparent)]
    Core(lsr_core::Error),
}

impl From<lsr_core::Error> for CliError {
    fn from(e: lsr_core::Error) -> Self {
        match e {
            lsr_core::Error::Io { .. } | lsr_core::Error::Parse { .. } => CliError::Io(e.to_string()),
            other => CliError::Core(other),
        }
    }
}

impl CliError {
    pub fn exit_code(&self) -> u8 {
        match self {
            CliError::Usage(_) | CliError::Core(_) => EXIT_USAGE,
            CliError::Threshold(_) => EXIT_THRESHOLD,
            CliError::Io(_) => EXIT_IO,
        }
    }
}

pub fn run(cli: Cli) -> Result<(), CliError> {
    let cfg = match &cli.config {
        Some(path) => ConfigFile::load(path)?,
        None => ConfigFile::default(),
    };
    match cli.command {
        Command::Gen(a) => commands::gen(a.layer(cfg.gen)),
        Command::Embed(a) => commands::embed(a.layer(cfg.embed)),
        Command::Build(a) => commands::build(a.layer(cfg.build)),
        Command::Plan(a) => commands::plan(a.layer(cfg.plan)),
        Command::TrainApn(a) => commands::train_apn(a.layer(cfg.train_apn)),
        Command::Eval(a) => commands::eval(a.layer(cfg.eval)),
        Command::OptimizeEmbeddings(a) => commands::optimize(a.layer(cfg.optimize_embeddings)),
        Command::Sweep(a) => commands::sweep(a.layer(cfg.sweep)),
    }
}
