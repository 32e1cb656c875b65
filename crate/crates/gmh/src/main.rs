//! Command-line experiment harness.
//!
//! Exit codes: 0 success, 2 configuration error, 3 runtime failure.
//! Logging is controlled by the `GMH_LOG` environment variable
//! (`error`, `info`, `debug`).

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use gmh::config::{ExperimentConfig, SAMPLER_KINDS};
use gmh::error::Error;
use gmh::experiment::{run_experiment, summarize_traces, tune_particles_for_config};

#[derive(Parser)]
#[command(name = "gmh", about = "Generalized Metropolis-Hastings experiment harness", version)]
struct Cli {
    /// Worker threads for multi-chain experiments (default: all cores).
    #[arg(long, global = true)]
    threads: Option<usize>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run an experiment described by a config file.
    Run {
        /// Path to the experiment config.
        #[arg(long)]
        config: PathBuf,
        /// Override the config's seed.
        #[arg(long)]
        seed: Option<u64>,
        /// Override the config's output directory.
        #[arg(long)]
        output: Option<PathBuf>,
    },
    /// Summarize existing trace CSV files.
    Summarize {
        /// Trace files produced by `run`.
        #[arg(required = true)]
        traces: Vec<PathBuf>,
        /// Directory for summary.csv / summary.json (default: current).
        #[arg(long, default_value = ".")]
        output: PathBuf,
    },
    /// Search for the smallest particle count meeting the estimator
    /// variance band.
    TuneParticles {
        /// Path to a pseudo-marginal experiment config.
        #[arg(long)]
        config: PathBuf,
        /// Override the config's seed.
        #[arg(long)]
        seed: Option<u64>,
        /// Estimator replicates per candidate count.
        #[arg(long, default_value_t = 25)]
        replicates: usize,
    },
    /// List available sampler kinds.
    ListSamplers,
}

fn load_config(
    path: &PathBuf,
    seed: Option<u64>,
    output: Option<PathBuf>,
) -> gmh::Result<ExperimentConfig> {
    let mut cfg = ExperimentConfig::from_path(path)?;
    if let Some(seed) = seed {
        cfg.seed = seed;
    }
    if let Some(output) = output {
        cfg.output_dir = output;
    }
    Ok(cfg)
}

fn dispatch(cli: Cli) -> gmh::Result<()> {
    if let Some(threads) = cli.threads {
        if threads == 0 {
            return Err(Error::Config("--threads must be ≥ 1".into()));
        }
        rayon::ThreadPoolBuilder::new()
            .num_threads(threads)
            .build_global()
            .map_err(|e| Error::Config(format!("thread pool setup failed: {e}")))?;
    }
    match cli.command {
        Command::Run {
            config,
            seed,
            output,
        } => {
            let cfg = load_config(&config, seed, output)?;
            let out = run_experiment(&cfg)?;
            for path in &out.trace_paths {
                println!("trace: {}", path.display());
            }
            println!("summary: {}", out.summary_csv.display());
            println!("summary: {}", out.summary_json.display());
        }
        Command::Summarize { traces, output } => {
            let (csv, json) = summarize_traces(&traces, &output)?;
            println!("summary: {}", csv.display());
            println!("summary: {}", json.display());
        }
        Command::TuneParticles {
            config,
            seed,
            replicates,
        } => {
            let cfg = load_config(&config, seed, None)?;
            let n = tune_particles_for_config(&cfg, replicates)?;
            println!("particles: {n}");
        }
        Command::ListSamplers => {
            for (kind, description) in SAMPLER_KINDS {
                println!("{kind:22} {description}");
            }
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::new().filter("GMH_LOG")).init();
    let cli = Cli::parse();
    match dispatch(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(err @ Error::Config(_)) => {
            eprintln!("configuration error: {err}");
            ExitCode::from(2)
        }
        Err(err) => {
            eprintln!("error: {err}");
            ExitCode::from(3)
        }
    }
}
