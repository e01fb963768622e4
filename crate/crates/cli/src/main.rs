use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use workload_forge_cli::commands::{self, MockArgs, SUMMARY_HEADER};
use workload_forge_cli::{CliError, ModelKind, PipelineConfig};

const THREADS_ENV: &str = "WORKLOAD_FORGE_THREADS";

/// Synthetic job-record generation: mock data, ingestion, training,
/// sampling and evaluation.
#[derive(Parser, Debug)]
#[command(name = "workload-forge", version, about)]
struct Cli {
    /// JSON config file; flags override it, it overrides built-in defaults
    #[arg(long, global = true)]
    config: Option<PathBuf>,

    /// Work directory holding the split, model artifacts and reports
    #[arg(long, global = true)]
    workdir: Option<PathBuf>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Write a seeded mock job table (or a raw trace with --raw)
    Mock {
        #[arg(long, value_parser = clap::value_parser!(u64).range(1..))]
        n: Option<u64>,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        out: PathBuf,
        /// Emit an ingestible raw trace plus its site catalog
        #[arg(long)]
        raw: bool,
        /// Catalog path for --raw (default: <out stem>.sites.json)
        #[arg(long, requires = "raw")]
        catalog: Option<PathBuf>,
    },
    /// Filter, derive and split a trace into train.csv / test.csv
    Ingest {
        /// Raw trace (CSV or JSON lines) or a job-table CSV
        #[arg(long)]
        trace: Option<PathBuf>,
        #[arg(long)]
        catalog: Option<PathBuf>,
        /// Split seed
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Fit the encoder and train a generator on train.csv
    Train {
        #[arg(long, value_enum)]
        model: Option<ModelKind>,
        /// Diffusion optimizer steps
        #[arg(long)]
        steps: Option<usize>,
        /// Diffusion initialization and batching seed
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Sample synthetic rows from a trained generator
    Generate {
        #[arg(long, value_enum)]
        model: Option<ModelKind>,
        #[arg(long, value_parser = clap::value_parser!(u64).range(1..))]
        n: Option<u64>,
        #[arg(long)]
        seed: Option<u64>,
        /// Output CSV (default: <workdir>/synth.csv)
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Score synthetic rows against the split and write report.json
    Evaluate {
        /// Synthetic table (default: <workdir>/synth.csv)
        #[arg(long)]
        synth: Option<PathBuf>,
        /// Report path (default: <workdir>/report.json)
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

fn configure_threads() -> Result<(), CliError> {
    let Ok(raw) = std::env::var(THREADS_ENV) else {
        return Ok(());
    };
    let n: usize = raw
        .trim()
        .parse()
        .ok()
        .filter(|n| *n > 0)
        .ok_or_else(|| CliError::Usage(format!("{THREADS_ENV} must be a positive integer, got `{raw}`")))?;
    rayon::ThreadPoolBuilder::new()
        .num_threads(n)
        .build_global()
        .map_err(|e| CliError::Runtime(format!("thread pool: {e}")))
}

fn run(cli: Cli) -> Result<(), CliError> {
    configure_threads()?;
    let mut cfg = PipelineConfig::load(cli.config.as_deref())?;
    if let Some(w) = cli.workdir {
        cfg.workdir = w;
    }
    match cli.command {
        Command::Mock { n, seed, out, raw, catalog } => {
            if let Some(n) = n {
                cfg.mock.n = n as usize;
            }
            if let Some(s) = seed {
                cfg.mock.seed = s;
            }
            cfg.validate()?;
            commands::cmd_mock(&cfg, &MockArgs { out, raw, catalog })
        }
        Command::Ingest { trace, catalog, seed } => {
            if trace.is_some() {
                cfg.trace = trace;
            }
            if catalog.is_some() {
                cfg.catalog = catalog;
            }
            if let Some(s) = seed {
                cfg.split_seed = s;
            }
            cfg.validate()?;
            commands::cmd_ingest(&cfg).map(|_| ())
        }
        Command::Train { model, steps, seed } => {
            if let Some(m) = model {
                cfg.model = m;
            }
            if let Some(s) = steps {
                cfg.ddpm.steps = s;
            }
            if let Some(s) = seed {
                cfg.ddpm.seed = s;
            }
            cfg.validate()?;
            commands::cmd_train(&cfg)
        }
        Command::Generate { model, n, seed, out } => {
            if let Some(m) = model {
                cfg.model = m;
            }
            if let Some(n) = n {
                cfg.generate_n = Some(n as usize);
            }
            if let Some(s) = seed {
                cfg.generate_seed = s;
            }
            cfg.validate()?;
            commands::cmd_generate(&cfg, out.as_deref()).map(|_| ())
        }
        Command::Evaluate { synth, out } => {
            cfg.validate()?;
            let row = commands::cmd_evaluate(&cfg, synth.as_deref(), out.as_deref())?;
            println!("{SUMMARY_HEADER}");
            println!("{row}");
            Ok(())
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
