use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use log::error;

use plap_cli::{parse_config, run_experiment, ExperimentKind};

/// Solver and verification harness for the parabolic p-Laplacian system with convection.
///
/// Set PLAP_THREADS to cap the number of worker threads.
#[derive(Parser)]
#[command(name = "plap", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Single forward run.
    Run { config: PathBuf },
    /// Ladder in nu and mu, or an extinction sweep.
    Sweep { config: PathBuf },
    /// Forward run plus duality residuals of the dual problem.
    DualCheck { config: PathBuf },
    /// Finite-difference run against the sine-Galerkin solver.
    Galerkin { config: PathBuf },
    /// Discrete Sobolev constant.
    Gamma { config: PathBuf },
}

impl Command {
    fn config(&self) -> &PathBuf {
        match self {
            Command::Run { config }
            | Command::Sweep { config }
            | Command::DualCheck { config }
            | Command::Galerkin { config }
            | Command::Gamma { config } => config,
        }
    }

    fn accepts(&self, kind: ExperimentKind) -> bool {
        matches!(
            (self, kind),
            (Command::Run { .. }, ExperimentKind::Run)
                | (Command::Sweep { .. }, ExperimentKind::Ladder | ExperimentKind::ExtinctionSweep)
                | (Command::DualCheck { .. }, ExperimentKind::DualCheck)
                | (Command::Galerkin { .. }, ExperimentKind::GalerkinCompare)
                | (Command::Gamma { .. }, ExperimentKind::Gamma)
        )
    }
}

fn configure_threads() -> Result<(), String> {
    let Ok(value) = std::env::var("PLAP_THREADS") else {
        return Ok(());
    };
    let threads: usize = value
        .trim()
        .parse()
        .ok()
        .filter(|&n| n > 0)
        .ok_or_else(|| format!("PLAP_THREADS must be a positive integer, got `{value}`"))?;
    rayon::ThreadPoolBuilder::new()
        .num_threads(threads)
        .build_global()
        .map_err(|e| e.to_string())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    if let Err(message) = configure_threads() {
        error!("{message}");
        return ExitCode::from(2);
    }
    let path = cli.command.config();
    let text = match std::fs::read_to_string(path) {
        Ok(t) => t,
        Err(e) => {
            error!("cannot read {}: {e}", path.display());
            return ExitCode::from(2);
        }
    };
    let cfg = match parse_config(&text) {
        Ok(cfg) => cfg,
        Err(e) => {
            error!("{}: {e}", path.display());
            return ExitCode::from(2);
        }
    };
    if !cli.command.accepts(cfg.kind) {
        error!("experiment kind `{}` does not belong to this subcommand", cfg.kind.name());
        return ExitCode::from(2);
    }
    match run_experiment(&cfg) {
        Ok(outcome) => {
            for job in &outcome.jobs {
                match &job.error {
                    None => println!("ok     {} ({})", job.name, job.dir.display()),
                    Some(e) => println!("FAILED {} ({}): {e}", job.name, job.dir.display()),
                }
            }
            if outcome.failed() == 0 {
                ExitCode::SUCCESS
            } else {
                ExitCode::FAILURE
            }
        }
        Err(e) => {
            error!("cannot write outputs: {e}");
            ExitCode::FAILURE
        }
    }
}
