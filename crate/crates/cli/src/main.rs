mod commands;
mod output;
mod report;

use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::Result;
use clap::{Parser, Subcommand};
use phasegraph::config::{parse_override, RunConfig};
use phasegraph::eval::{BaselineKind, Variant};

/// Thread-count override for the worker pool.
const THREADS_ENV: &str = "PHASEGRAPH_THREADS";

#[derive(Parser)]
#[command(name = "phasegraph", version, about = "EEG phase-connectivity graphs and subject classification")]
struct Cli {
    /// TOML run configuration; defaults apply to every missing key.
    #[arg(long, short, global = true)]
    config: Option<PathBuf>,

    /// Override a config key, e.g. `--set optim.lr=0.001`.
    #[arg(long = "set", value_name = "KEY=VALUE", global = true)]
    overrides: Vec<String>,

    /// Output directory (`output.dir`).
    #[arg(long, global = true)]
    out: Option<PathBuf>,

    /// Dataset root (`dataset.root`).
    #[arg(long, global = true)]
    data: Option<PathBuf>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Write the planted synthetic dataset.
    Synth {
        /// Destination; defaults to `dataset.root`, then `<out>/data`.
        #[arg(long)]
        dest: Option<PathBuf>,
    },
    /// Filter, normalise and window every recording.
    Preprocess,
    /// Per-window node features.
    Features,
    /// Per-window connectivity graphs.
    Graphs,
    /// Train one model on all subjects and save a checkpoint.
    Train {
        /// Defaults to the first of `eval.seeds`.
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Leave-one-subject-out evaluation over every seed.
    Loso,
    /// LOSO with one architectural or graph change.
    Ablate {
        #[arg(long)]
        variant: Variant,
    },
    /// LOSO for a flat-feature baseline.
    Baseline {
        #[arg(long)]
        kind: BaselineKind,
    },
    /// Group connectivity differences and band-power tests.
    Stats,
    /// Integrated Gradients and edge importance for a checkpoint.
    Explain,
    /// Merge finished runs into one summary next to the published numbers.
    Report,
}

fn resolve_config(cli: &Cli) -> Result<RunConfig> {
    let base = match &cli.config {
        Some(p) => RunConfig::load(p)?,
        None => RunConfig::default(),
    };
    let mut overrides = cli.overrides.iter().map(|s| parse_override(s)).collect::<phasegraph::Result<Vec<_>>>()?;
    if let Some(out) = &cli.out {
        overrides.push(("output.dir".into(), serde_json::Value::String(out.display().to_string())));
    }
    if let Some(data) = &cli.data {
        overrides.push(("dataset.root".into(), serde_json::Value::String(data.display().to_string())));
    }
    Ok(base.with_overrides(&overrides)?)
}

fn init_threads() -> Result<()> {
    if let Ok(v) = std::env::var(THREADS_ENV) {
        let n: usize = v.parse().map_err(|_| anyhow::anyhow!("{THREADS_ENV} must be a positive integer, got {v:?}"))?;
        rayon::ThreadPoolBuilder::new().num_threads(n).build_global()?;
    }
    Ok(())
}

fn run(cli: Cli) -> Result<()> {
    init_threads()?;
    let cfg = resolve_config(&cli)?;
    match cli.command {
        Command::Synth { dest } => commands::synth(&cfg, dest),
        Command::Preprocess => commands::preprocess(&cfg),
        Command::Features => commands::features(&cfg),
        Command::Graphs => commands::graphs(&cfg),
        Command::Train { seed } => commands::train(&cfg, seed),
        Command::Loso => commands::loso(&cfg, Variant::Full, "loso"),
        Command::Ablate { variant } => commands::loso(&cfg, variant, &format!("ablate/{variant}")),
        Command::Baseline { kind } => commands::baseline(&cfg, kind),
        Command::Stats => commands::stats(&cfg),
        Command::Explain => commands::explain(&cfg),
        Command::Report => report::report(&cfg),
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            let chain: Vec<String> = e.chain().map(|c| c.to_string()).collect();
            eprintln!("error: {}", chain.join(": "));
            ExitCode::FAILURE
        }
    }
}
