use std::path::PathBuf;
use std::process::ExitCode;
use std::time::Instant;

use clap::{Parser, Subcommand};
use sha2::{Digest, Sha256};

mod commands;
mod config;

use config::ExperimentConfig;

pub const EXIT_VALIDATION: u8 = 2;
pub const EXIT_DIVERGENCE: u8 = 3;
pub const EXIT_CHECK_FAILED: u8 = 4;

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("config: {0}")]
    Config(String),
    #[error("io: {0}")]
    Io(String),
    #[error(transparent)]
    Core(#[from] scatterwave::Error),
}

impl CliError {
    fn exit_code(&self) -> u8 {
        match self {
            CliError::Core(scatterwave::Error::Divergence { .. }) => EXIT_DIVERGENCE,
            _ => EXIT_VALIDATION,
        }
    }
}

#[derive(Debug, Parser)]
#[command(name = "scatterwave", about = "Wave scattering outside a ball: free and exterior evolution, Radon transforms, scattering data")]
struct Cli {
    #[command(subcommand)]
    command: Command,
    /// Experiment configuration (`key = value` lines).
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Output directory, overriding `output.dir`.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Worker threads.
    #[arg(long, global = true)]
    threads: Option<usize>,
    /// Lattice spacing, overriding `grid.h`.
    #[arg(long, global = true)]
    h: Option<f64>,
    /// Final time, overriding `times.t_final`.
    #[arg(long = "t-final", global = true)]
    t_final: Option<f64>,
    /// Write a JSON run summary to this path.
    #[arg(long = "json-summary", global = true)]
    json_summary: Option<PathBuf>,
}

#[derive(Debug, Clone, Copy, Subcommand)]
enum Command {
    /// Kirchhoff snapshots of the free evolution and a Huygens audit.
    FreeEvolve,
    /// Leapfrog evolution outside the obstacle.
    ExteriorEvolve,
    /// Radon transforms of the data along the 26 cube directions.
    Radon,
    /// Radiation field of the free evolution of the data.
    Radiation,
    /// Scattering-data construction.
    Scatter,
    /// The acceptance battery.
    Verify,
}

impl Command {
    fn name(self) -> &'static str {
        match self {
            Command::FreeEvolve => "free-evolve",
            Command::ExteriorEvolve => "exterior-evolve",
            Command::Radon => "radon",
            Command::Radiation => "radiation",
            Command::Scatter => "scatter",
            Command::Verify => "verify",
        }
    }
}

fn load_config(cli: &Cli) -> Result<ExperimentConfig, CliError> {
    let mut cfg = match &cli.config {
        Some(path) => {
            let text = std::fs::read_to_string(path)
                .map_err(|e| CliError::Config(format!("cannot read {}: {e}", path.display())))?;
            ExperimentConfig::parse(&text)?
        }
        None => ExperimentConfig::default(),
    };
    if let Some(h) = cli.h {
        cfg.h = h;
    }
    if let Some(t) = cli.t_final {
        cfg.t_final = t;
        cfg.snapshots.retain(|&s| s <= t);
    }
    if let Some(out) = &cli.out {
        cfg.output_dir = out.clone();
    }
    cfg.validate()?;
    Ok(cfg)
}

fn run(cli: &Cli, cfg: &ExperimentConfig) -> Result<commands::RunOutcome, CliError> {
    if let Some(n) = cli.threads {
        rayon::ThreadPoolBuilder::new()
            .num_threads(n.max(1))
            .build_global()
            .map_err(|e| CliError::Config(format!("--threads: {e}")))?;
    }
    match cli.command {
        Command::FreeEvolve => commands::free_evolve(cfg),
        Command::ExteriorEvolve => commands::exterior_evolve(cfg),
        Command::Radon => commands::radon_table(cfg),
        Command::Radiation => commands::radiation(cfg),
        Command::Scatter => commands::scatter(cfg),
        Command::Verify => commands::verify(cfg),
    }
}

fn write_summary(path: &PathBuf, summary: &serde_json::Value) -> Result<(), CliError> {
    let text = serde_json::to_string_pretty(summary).map_err(|e| CliError::Io(e.to_string()))?;
    std::fs::write(path, text + "\n").map_err(|e| CliError::Io(format!("{}: {e}", path.display())))
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let start = Instant::now();
    let cfg = load_config(&cli);
    let hash = cfg.as_ref().ok().map(|c| format!("{:x}", Sha256::digest(c.serialize().as_bytes())));
    let result = cfg.and_then(|cfg| run(&cli, &cfg));
    let (code, passed, failed, outputs, error) = match &result {
        Ok(run) => {
            let failed = run.rows.iter().filter(|r| !r.pass).count();
            let code = if run.failed { EXIT_CHECK_FAILED } else { 0 };
            (code, run.rows.len() - failed, failed, run.outputs.clone(), None)
        }
        Err(e) => {
            eprintln!("error: {e}");
            (e.exit_code(), 0, 0, Vec::new(), Some(e.to_string()))
        }
    };
    if let Ok(run) = &result {
        for row in run.rows.iter().filter(|r| !r.pass) {
            eprintln!("failed: {} [{}] = {:e} (threshold {:e})", row.check, row.window_or_region, row.value, row.threshold);
        }
    }
    if let Some(path) = &cli.json_summary {
        let summary = serde_json::json!({
            "command": cli.command.name(),
            "config_sha256": hash,
            "wall_seconds": start.elapsed().as_secs_f64(),
            "checks_passed": passed,
            "checks_failed": failed,
            "exit_code": code,
            "error": error,
            "outputs": outputs.iter().map(|p| p.display().to_string()).collect::<Vec<_>>(),
        });
        if let Err(e) = write_summary(path, &summary) {
            eprintln!("error: {e}");
            return ExitCode::from(EXIT_VALIDATION);
        }
    }
    ExitCode::from(code)
}
