use std::path::PathBuf;

use anyhow::{Context, Result};
use clap::{Parser, Subcommand};

mod commands;
mod config;
mod envelope;

use config::RunConfig;

/// Thread count for dense linear algebra; unset means one thread, which keeps
/// results bit-reproducible.
const THREADS_ENV: &str = "HAMCYCLE_THREADS";

#[derive(Parser)]
#[command(name = "hamcycle", version, about = "Hamiltonian-cycle ensembles on grids")]
struct Cli {
    /// Also write the JSON result envelope to this file.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    #[command(subcommand)]
    cmd: Command,
}

#[derive(Subcommand)]
enum Command {
    #[command(flatten)]
    Run(RunConfig),
    /// Re-execute a stored run configuration or result envelope.
    Replay { path: PathBuf },
}

fn load_config(path: &PathBuf) -> Result<RunConfig> {
    let text = std::fs::read_to_string(path)
        .with_context(|| format!("reading {}", path.display()))?;
    let mut v: serde_json::Value = serde_json::from_str(&text)?;
    if let Some(c) = v.get_mut("config") {
        v = c.take();
    }
    serde_json::from_value(v).context("not a run configuration")
}

fn main() -> Result<()> {
    let cli = Cli::parse();
    let threads = match std::env::var(THREADS_ENV) {
        Ok(s) => s.parse().with_context(|| format!("{THREADS_ENV}={s:?}"))?,
        Err(_) => 1,
    };
    hamcycle::linalg::set_threads(threads);
    let cfg = match cli.cmd {
        Command::Run(c) => c,
        Command::Replay { path } => load_config(&path)?,
    };
    let env = commands::execute(&cfg).with_context(|| format!("{} failed", cfg.name()))?;
    for w in &env.warnings {
        eprintln!("warning: {w}");
    }
    if let Some(p) = &cli.out {
        env.write(p)?;
    }
    println!("{}", serde_json::to_string_pretty(&env)?);
    Ok(())
}
