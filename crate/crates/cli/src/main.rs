use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use cclass_cli::{experiment, parse_config, resolve_workers, run_experiment, thread_pool, verify_replay, CliError, WORKERS_ENV};
use cclass_core::UnionBoundVariant;
use clap::{Parser, Subcommand};

#[derive(Parser)]
#[command(name = "cclass", version, about = "Error bounds and simulations for compressive classification of Gaussian mixtures")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Sweep the noise grid for every M and write CSVs, report, plot and replay file.
    Run {
        #[arg(long)]
        config: PathBuf,
        /// Monte Carlo trials per grid point (0 skips simulation).
        #[arg(long)]
        trials: Option<u64>,
        #[arg(long)]
        seed: Option<u64>,
        /// Worker threads; overrides CCLASS_WORKERS.
        #[arg(long)]
        workers: Option<usize>,
        /// `printed` or `standard`.
        #[arg(long)]
        union_bound: Option<UnionBoundVariant>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Print closed-form predictions without computing curves.
    Predict {
        #[arg(long)]
        config: PathBuf,
    },
    /// Recompute the curves in a replay file and compare them with the CSVs beside it.
    Verify {
        #[arg(long)]
        replay: PathBuf,
        /// Directory holding the CSVs; defaults to the replay file's directory.
        #[arg(long)]
        dir: Option<PathBuf>,
        #[arg(long)]
        workers: Option<usize>,
    },
}

fn read(path: &Path) -> Result<String, CliError> {
    fs::read_to_string(path).map_err(|source| CliError::Io {
        path: path.to_path_buf(),
        source,
    })
}

fn workers(explicit: Option<usize>) -> Result<Option<usize>, CliError> {
    resolve_workers(explicit, std::env::var(WORKERS_ENV).ok().as_deref())
}

fn execute(cli: Cli) -> Result<ExitCode, CliError> {
    match cli.command {
        Command::Run {
            config,
            trials,
            seed,
            workers: explicit,
            union_bound,
            out,
        } => {
            let mut cfg = parse_config(&read(&config)?).map_err(|e| CliError::Usage(format!("{}: {e}", config.display())))?;
            if let Some(t) = trials {
                cfg.trials = t;
            }
            if let Some(s) = seed {
                cfg.seed = s;
            }
            if let Some(v) = union_bound {
                cfg.union_bound = v;
            }
            if let Some(dir) = out {
                cfg.output_dir = dir;
            }
            let pool = thread_pool(workers(explicit)?)?;
            let outcome = pool.install(|| run_experiment(cfg))?;
            for path in &outcome.files {
                println!("wrote {}", path.display());
            }
            let failures = outcome.failures();
            if failures == 0 {
                println!("all checks passed");
                Ok(ExitCode::SUCCESS)
            } else {
                for f in outcome.results.iter().flat_map(|r| &r.findings).filter(|f| f.is_failure()) {
                    eprintln!("{}", f.message);
                }
                eprintln!("{failures} check(s) failed; see report.txt");
                Ok(ExitCode::from(2))
            }
        }
        Command::Predict { config } => {
            let cfg = parse_config(&read(&config)?).map_err(|e| CliError::Usage(format!("{}: {e}", config.display())))?;
            print!("{}", experiment::render_predictions(cfg)?);
            Ok(ExitCode::SUCCESS)
        }
        Command::Verify { replay, dir, workers: explicit } => {
            let text = read(&replay)?;
            let dir = dir.unwrap_or_else(|| replay.parent().map(Path::to_path_buf).unwrap_or_default());
            let pool = thread_pool(workers(explicit)?)?;
            let outcome = pool.install(|| verify_replay(&text, &dir))?;
            for name in &outcome.matched {
                println!("identical {name}");
            }
            for name in &outcome.mismatched {
                println!("DIFFERS {name}");
            }
            Ok(if outcome.mismatched.is_empty() { ExitCode::SUCCESS } else { ExitCode::from(2) })
        }
    }
}

fn main() -> ExitCode {
    match execute(Cli::parse()) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}
