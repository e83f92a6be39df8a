use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::{Context, Result};
use clap::{Parser, Subcommand};
use stragglers_core::experiment::{run_experiment, summarize, ExperimentConfig};

/// Training-dynamics experiments on class-manifold geometry and stragglers.
#[derive(Debug, Parser)]
#[command(name = "stragglers", version, about)]
struct Cli {
    /// Worker threads for independent runs (default: all cores).
    #[arg(long, global = true, value_name = "N")]
    threads: Option<usize>,

    /// Single-threaded execution; outputs are bitwise reproducible.
    #[arg(long, global = true)]
    deterministic: bool,

    /// Overrides `run.seed_root` of the config.
    #[arg(long, global = true, value_name = "K")]
    seed_root: Option<u64>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Runs the experiment described by a TOML config.
    Run {
        config: PathBuf,
        /// Overrides `run.output_dir`.
        #[arg(long, value_name = "DIR")]
        output_dir: Option<PathBuf>,
    },
    /// Aggregates the manifests found under a directory.
    Summarize { dir: PathBuf },
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match execute(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}

fn execute(cli: Cli) -> Result<()> {
    let threads = if cli.deterministic { Some(1) } else { cli.threads };
    if let Some(n) = threads {
        rayon::ThreadPoolBuilder::new()
            .num_threads(n.max(1))
            .build_global()
            .context("configuring the worker pool")?;
    }
    match cli.command {
        Command::Run { config, output_dir } => {
            let mut cfg = ExperimentConfig::load(&config).with_context(|| format!("loading {}", config.display()))?;
            if let Some(k) = cli.seed_root {
                cfg.run.seed_root = k;
            }
            if let Some(dir) = output_dir {
                cfg.run.output_dir = dir;
            }
            let outcome = run_experiment(&cfg)?;
            for w in &outcome.manifest.warnings {
                eprintln!("warning: {w}");
            }
            println!("{}", outcome.dir.display());
        }
        Command::Summarize { dir } => {
            let (text, _) = summarize(&dir)?;
            print!("{text}");
        }
    }
    Ok(())
}
