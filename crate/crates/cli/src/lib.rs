//! Command-line front end for the `delayrc` simulator.
//!
//! Every command resolves its configuration, echoes it to
//! `effective_config.txt` in the output directory and writes CSV (or JSONL)
//! artifacts next to it. Exit codes: 0 on success, 2 for configuration
//! errors, 3 for runtime and numerical failures.

pub mod commands;
pub mod config;

use std::path::PathBuf;

use clap::{Parser, Subcommand, ValueEnum};

pub use config::ExperimentConfig;

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("configuration error: {0}")]
    Config(String),
    #[error("{0}")]
    Runtime(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config(_) => 2,
            CliError::Runtime(_) => 3,
        }
    }
}

impl From<delayrc::Error> for CliError {
    fn from(e: delayrc::Error) -> Self {
        match e {
            delayrc::Error::Config(_) => CliError::Config(e.to_string()),
            other => CliError::Runtime(other.to_string()),
        }
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        CliError::Runtime(e.to_string())
    }
}

#[derive(Debug, Parser)]
#[command(name = "delayrc", version, about = "Delay-based reservoir computing experiments")]
pub struct Cli {
    /// Output directory.
    #[arg(long, global = true, env = "DELAYRC_OUT", default_value = "out")]
    pub out: PathBuf,

    /// Configuration file of `key = value` lines.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,

    /// Override one configuration key; may be repeated.
    #[arg(long = "set", value_name = "KEY=VALUE", global = true)]
    pub set: Vec<String>,

    /// Benchmark task (same as `--set task=...`).
    #[arg(long, global = true, value_enum)]
    pub task: Option<TaskArg>,

    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum TaskArg {
    SineSquare,
    Narma10,
    Vowels,
}

impl TaskArg {
    fn key(self) -> &'static str {
        match self {
            TaskArg::SineSquare => "sine-square",
            TaskArg::Narma10 => "narma10",
            TaskArg::Vowels => "vowels",
        }
    }
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Oscillator dynamics: cobweb, bifurcation, regime or DDE traces.
    Dynamics {
        #[command(subcommand)]
        which: DynamicsCommand,
    },
    /// Train and test a reservoir once with fixed parameters.
    Run,
    /// Search reservoir parameters and write the study log.
    Optimize {
        /// Total number of trials (`optimize.budget`).
        #[arg(long)]
        budget: Option<usize>,
        /// Trials evaluated in parallel (`optimize.width`).
        #[arg(long)]
        width: Option<usize>,
        /// Continue an existing `study.jsonl` in the output directory.
        #[arg(long)]
        resume: bool,
    },
    /// Sweep the delay-to-clock ratio with other parameters held.
    SweepDelay {
        /// Data seeds per grid point (`sweep.repeats`).
        #[arg(long)]
        repeats: Option<usize>,
    },
}

#[derive(Debug, Clone, Copy, Subcommand)]
pub enum DynamicsCommand {
    /// Cobweb path of the map from `dynamics.x0`.
    Cobweb,
    /// Fixed points and orbit samples across `dynamics.axis`.
    Bifurcation,
    /// Classify the asymptotic regime at `dynamics.gain`.
    Regime,
    /// Integrate the delay-differential loop equation.
    Dde,
}

/// Builds the ordered list of config assignments: file, `--set`, then flags.
pub fn collect_entries(cli: &Cli) -> Result<Vec<(String, String)>, CliError> {
    let mut entries = Vec::new();
    if let Some(path) = &cli.config {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::Config(format!("cannot read {}: {e}", path.display())))?;
        entries.extend(config::parse_config_text(&text)?);
    }
    for s in &cli.set {
        entries.push(config::parse_assignment(s)?);
    }
    if let Some(t) = cli.task {
        entries.push(("task".into(), t.key().into()));
    }
    match &cli.command {
        Command::Optimize { budget, width, .. } => {
            if let Some(b) = budget {
                entries.push(("optimize.budget".into(), b.to_string()));
            }
            if let Some(w) = width {
                entries.push(("optimize.width".into(), w.to_string()));
            }
        }
        Command::SweepDelay { repeats: Some(r) } => entries.push(("sweep.repeats".into(), r.to_string())),
        _ => {}
    }
    Ok(entries)
}

pub fn run(cli: &Cli) -> Result<(), CliError> {
    let cfg = ExperimentConfig::resolve(&collect_entries(cli)?)?;
    std::fs::create_dir_all(&cli.out)?;
    std::fs::write(cli.out.join("effective_config.txt"), cfg.canonical_text())?;
    match &cli.command {
        Command::Dynamics { which } => commands::dynamics(*which, &cfg, &cli.out),
        Command::Run => commands::run(&cfg, &cli.out),
        Command::Optimize { resume, .. } => commands::optimize(&cfg, &cli.out, *resume),
        Command::SweepDelay { .. } => commands::sweep_delay(&cfg, &cli.out),
    }
}
