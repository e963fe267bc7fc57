//! `cautious`: train reward ensembles, run k-of-N CFR and export metrics.
//!
//! Every subcommand reads the same `key = value` run manifest; flags override
//! individual manifest keys. Exit status is 0 on success, 2 for usage or
//! configuration errors and 3 for failures while running.

mod commands;
mod error;
mod manifest;
mod output;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};

use crate::error::CliError;

#[derive(Debug, Parser)]
#[command(name = "cautious", version, about = "Cautious policies from ensemble reward beliefs")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Train reward models on the familiar data and store their tables.
    TrainEnsemble(Common),
    /// Run k-of-N CFR for every k and repetition; write policies, logs and metrics.
    RunKofn(Common),
    /// Metrics of each member's greedy policy, with their mean and 95% interval.
    Baseline(Common),
    /// Discounted safety statistics of gridworld policies.
    GridworldStats(Common),
    /// Caution metrics of bandit policies.
    BanditMetrics(Common),
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum FormatArg {
    Csv,
    Json,
}

#[derive(Debug, Args)]
struct Common {
    /// Run manifest (`key = value` lines).
    #[arg(long)]
    manifest: Option<PathBuf>,
    #[arg(long, value_enum)]
    format: Option<FormatArg>,
    #[arg(long)]
    seed: Option<u64>,
    /// gridworld, ask_for_help, risk_reward, help_availability or perturbed_help.
    #[arg(long)]
    task: Option<String>,
    #[arg(long)]
    members: Option<usize>,
    /// Comma-separated k values.
    #[arg(long)]
    k: Option<String>,
    #[arg(long)]
    n: Option<usize>,
    #[arg(long)]
    iterations: Option<usize>,
    #[arg(long)]
    repetitions: Option<usize>,
    /// Draw belief samples with replacement.
    #[arg(long)]
    replacement: bool,
    #[arg(long)]
    ensemble_dir: Option<PathBuf>,
    #[arg(long)]
    output_dir: Option<PathBuf>,
    /// Any other manifest key, as KEY=VALUE.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    set: Vec<String>,
}

impl Common {
    fn overrides(&self) -> Result<Vec<(String, String)>, CliError> {
        let mut out: Vec<(String, String)> = Vec::new();
        let mut put = |k: &str, v: Option<String>| {
            if let Some(v) = v {
                out.push((k.to_string(), v));
            }
        };
        put("format", self.format.map(|f| match f {
            FormatArg::Csv => "csv".into(),
            FormatArg::Json => "json".into(),
        }));
        put("seed", self.seed.map(|x| x.to_string()));
        put("task", self.task.clone());
        put("members", self.members.map(|x| x.to_string()));
        put("k", self.k.clone());
        put("n", self.n.map(|x| x.to_string()));
        put("iterations", self.iterations.map(|x| x.to_string()));
        put("repetitions", self.repetitions.map(|x| x.to_string()));
        put("replacement", self.replacement.then(|| "true".to_string()));
        put("ensemble_dir", self.ensemble_dir.as_ref().map(|p| p.display().to_string()));
        put("output_dir", self.output_dir.as_ref().map(|p| p.display().to_string()));
        for s in &self.set {
            let (k, v) = s
                .split_once('=')
                .ok_or_else(|| CliError::Usage(format!("--set expects KEY=VALUE, got `{s}`")))?;
            out.push((k.trim().to_string(), v.trim().to_string()));
        }
        Ok(out)
    }
}

fn run(cli: Cli) -> Result<Vec<PathBuf>, CliError> {
    let (common, cmd): (&Common, fn(&manifest::RunManifest) -> Result<Vec<PathBuf>, CliError>) = match &cli.command {
        Command::TrainEnsemble(c) => (c, commands::train_ensemble),
        Command::RunKofn(c) => (c, commands::run_kofn),
        Command::Baseline(c) => (c, commands::baseline),
        Command::GridworldStats(c) => (c, commands::gridworld_stats),
        Command::BanditMetrics(c) => (c, commands::bandit_metrics),
    };
    let manifest = manifest::load(common.manifest.as_deref(), &common.overrides()?)?;
    cmd(&manifest)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(paths) => {
            for p in paths {
                println!("wrote {}", p.display());
            }
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
