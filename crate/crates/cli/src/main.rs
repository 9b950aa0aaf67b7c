//! `imprecise`: synthesize data, train, evaluate, sweep and self-check.

mod commands;
mod config;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use imprecise::eval::Method;

pub const VERSION: &str = concat!(env!("CARGO_PKG_VERSION"), " (", env!("IMPRECISE_GIT_DESCRIBE"), ")");

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("configuration error: {0}")]
    Config(String),
    #[error(transparent)]
    Core(#[from] imprecise::Error),
    #[error("{0} check(s) failed")]
    ChecksFailed(usize),
}

impl CliError {
    /// 1: a check failed, 2: bad configuration, 3: bad or unreadable data,
    /// 4: numerical failure.
    pub fn exit_code(&self) -> u8 {
        use imprecise::Error as E;
        match self {
            CliError::ChecksFailed(_) => 1,
            CliError::Config(_) => 2,
            CliError::Core(e) => match e {
                E::InvalidParam(_) | E::EnumerationGuard { .. } => 2,
                E::Numeric { .. } => 4,
                _ => 3,
            },
        }
    }
}

#[derive(Debug, Parser)]
#[command(name = "imprecise", version = VERSION, about = "Event classifiers from imprecise timestamps")]
struct Cli {
    /// Worker threads for sessions, folds and sweep points.
    #[arg(long, global = true, default_value_t = 1)]
    workers: usize,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Args)]
struct Common {
    /// TOML run configuration.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Replaces every seed in the configuration.
    #[arg(long)]
    seed: Option<u64>,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Generate labeled sessions and inject timestamp noise.
    Synth {
        #[command(flatten)]
        common: Common,
        /// Output directory for session files.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Fit one method and write a model file plus a training log.
    Train {
        #[command(flatten)]
        common: Common,
        /// Dataset directory.
        #[arg(long)]
        data: Option<PathBuf>,
        #[arg(long, value_parser = parse_method)]
        method: Method,
        /// Model file to write.
        #[arg(long)]
        out: Option<PathBuf>,
        /// Write forward/backward tables and marginals per session into this directory.
        #[arg(long)]
        dump_tables: Option<PathBuf>,
    },
    /// Score a model against the true labels of a dataset.
    Eval {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        data: Option<PathBuf>,
        #[arg(long)]
        model: Option<PathBuf>,
        /// Decision threshold on p(y=1|x); defaults to the configured one.
        #[arg(long)]
        threshold: Option<f64>,
        /// Metrics CSV; printed to stdout when omitted.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Cross-validate every method over a noise grid.
    Sweep {
        #[command(flatten)]
        common: Common,
        /// Report CSV.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Run the oracle, gradient and invariant suites.
    Check {
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Smaller suites for a fast smoke test.
        #[arg(long)]
        quick: bool,
    },
}

fn parse_method(s: &str) -> Result<Method, String> {
    s.parse().map_err(|e: imprecise::Error| e.to_string())
}

fn run(cli: Cli) -> Result<(), CliError> {
    if cli.workers == 0 {
        return Err(CliError::Config("--workers must be at least 1".into()));
    }
    rayon::ThreadPoolBuilder::new()
        .num_threads(cli.workers)
        .build_global()
        .map_err(|e| CliError::Config(format!("thread pool: {e}")))?;
    match cli.command {
        Command::Synth { common, out } => commands::synth(&load(&common)?, out),
        Command::Train {
            common,
            data,
            method,
            out,
            dump_tables,
        } => commands::train(&load(&common)?, data, method, out, dump_tables),
        Command::Eval {
            common,
            data,
            model,
            threshold,
            out,
        } => commands::eval(&load(&common)?, data, model, threshold, out),
        Command::Sweep { common, out } => commands::sweep(&load(&common)?, out),
        Command::Check { seed, quick } => commands::check(seed, quick),
    }
}

fn load(common: &Common) -> Result<config::RunConfig, CliError> {
    let mut cfg = config::RunConfig::load(common.config.as_deref())?;
    if let Some(seed) = common.seed {
        cfg.override_seed(seed);
    }
    Ok(cfg)
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
