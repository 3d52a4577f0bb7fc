mod config;
mod run;

use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Instant;

use anyhow::{Context, Result};
use clap::Parser;
use serde::Serialize;
use sha2::{Digest, Sha256};

use config::{ExperimentConfig, Kind};
use run::Status;

/// Equilibrium mean-variance policies under CKLS stochastic volatility.
#[derive(Debug, Parser)]
#[command(name = "mvbsde", version)]
struct Cli {
    /// Experiment to run.
    kind: Kind,
    /// TOML or JSON config; a previous run's manifest.json also works.
    #[arg(long)]
    config: PathBuf,
    /// Parent directory for the run's output directory.
    #[arg(long, default_value = "out")]
    out: PathBuf,
    /// Overrides the config seed.
    #[arg(long)]
    seed: Option<u64>,
    /// Worker threads; results do not depend on it.
    #[arg(long)]
    threads: Option<usize>,
}

#[derive(Serialize)]
struct Manifest<'a> {
    config: &'a ExperimentConfig,
    seed: u64,
    version: &'static str,
    started_at: String,
    wall_time_s: f64,
}

fn output_dir(out: &Path, kind: Kind, canonical: &str) -> PathBuf {
    let digest = Sha256::digest(canonical.as_bytes());
    let hex: String = digest.iter().take(6).map(|b| format!("{b:02x}")).collect();
    out.join(format!("{kind}-{hex}"))
}

fn execute(cli: &Cli) -> Result<Status> {
    if let Some(n) = cli.threads {
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .context("configuring the thread pool")?;
    }
    let started_at = chrono::Utc::now().to_rfc3339();
    let clock = Instant::now();
    let cfg = config::load(&cli.config)?.resolve(cli.kind, cli.seed)?;
    let dir = output_dir(&cli.out, cli.kind, &cfg.canonical_json()?);
    std::fs::create_dir_all(&dir).with_context(|| format!("creating {}", dir.display()))?;

    let status = run::run(cli.kind, &cfg, &dir)?;

    let manifest = Manifest {
        config: &cfg,
        seed: cfg.seed,
        version: env!("CARGO_PKG_VERSION"),
        started_at,
        wall_time_s: clock.elapsed().as_secs_f64(),
    };
    let mut file = std::fs::File::create(dir.join("manifest.json"))?;
    serde_json::to_writer_pretty(&mut file, &manifest)?;
    writeln!(file)?;
    println!("{}", dir.display());
    Ok(status)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match execute(&cli) {
        Ok(Status::Done) => ExitCode::SUCCESS,
        Ok(Status::ValidationFailed) => ExitCode::from(1),
        Ok(Status::NotConverged) => ExitCode::from(2),
        Err(err) => {
            eprintln!("error: {err:#}");
            match err.downcast_ref::<mvbsde::Error>() {
                Some(mvbsde::Error::NotConverged { .. }) => ExitCode::from(2),
                _ => ExitCode::from(1),
            }
        }
    }
}
