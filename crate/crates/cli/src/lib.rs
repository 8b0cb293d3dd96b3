//! Experiment runner for compressive classification: parses sweep
//! configurations, computes bound and Monte Carlo curves, and writes CSV,
//! report, plot and replay files.

use std::path::PathBuf;

pub mod config;
pub mod experiment;
pub mod plot;
pub mod replay;

pub use config::{parse_config, ExperimentConfig};
pub use experiment::{run_experiment, verify_replay, RunOutcome};

/// Environment variable overriding the worker count.
pub const WORKERS_ENV: &str = "CCLASS_WORKERS";

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error(transparent)]
    Core(#[from] cclass_core::Error),
    #[error("{}: {source}", path.display())]
    Io { path: PathBuf, source: std::io::Error },
    #[error("csv output: {0}")]
    Csv(#[from] csv::Error),
    #[error("replay: {0}")]
    Replay(String),
    #[error("{0}")]
    Usage(String),
}

/// Worker count from an explicit value, else from [`WORKERS_ENV`]; `None`
/// leaves the choice to rayon.
pub fn resolve_workers(explicit: Option<usize>, env_value: Option<&str>) -> Result<Option<usize>, CliError> {
    let n = match (explicit, env_value) {
        (Some(n), _) => n,
        (None, Some(v)) => v
            .trim()
            .parse()
            .map_err(|_| CliError::Usage(format!("{WORKERS_ENV} must be a positive integer, got `{v}`")))?,
        (None, None) => return Ok(None),
    };
    if n == 0 {
        return Err(CliError::Usage("worker count must be at least 1".into()));
    }
    Ok(Some(n))
}

pub fn thread_pool(workers: Option<usize>) -> Result<rayon::ThreadPool, CliError> {
    let mut builder = rayon::ThreadPoolBuilder::new();
    if let Some(n) = workers {
        builder = builder.num_threads(n);
    }
    builder
        .build()
        .map_err(|e| CliError::Usage(format!("cannot start worker pool: {e}")))
}
