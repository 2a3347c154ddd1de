//! `mct`: run, validate and plot semi-supervised experiments over two views.

mod config;
mod plot;
mod run;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use config::LoadedConfig;
use plot::{Axis, CurveSpec};

/// Exit status classes.
#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("config error: {0}")]
    Config(String),
    #[error("data error: {0}")]
    Data(String),
    #[error("numeric failure: {0}")]
    Numeric(String),
}

impl CliError {
    fn code(&self) -> u8 {
        match self {
            CliError::Config(_) => 2,
            CliError::Data(_) => 3,
            CliError::Numeric(_) => 4,
        }
    }
}

impl From<mct_core::Error> for CliError {
    fn from(e: mct_core::Error) -> Self {
        use mct_core::Error as E;
        match e {
            E::Config(_) => CliError::Config(e.to_string()),
            E::NumericDomain(_) | E::DegenerateProduct | E::NonFiniteH { .. } | E::StaleTrace { .. } => {
                CliError::Numeric(e.to_string())
            }
            _ => CliError::Data(e.to_string()),
        }
    }
}

#[derive(Debug, Parser)]
#[command(name = "mct", version, about = "Co-training and meta co-training over frozen embedding views")]
struct Cli {
    /// Upper bound on worker threads.
    #[arg(long, global = true)]
    jobs: Option<usize>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Run the experiment a config describes.
    Run { config: PathBuf },
    /// Check a config without running it.
    Validate { config: PathBuf },
    /// Extract curves from one or more metrics files.
    Plot {
        #[arg(required = true)]
        metrics: Vec<PathBuf>,
        /// `model:metric` or `model:metric:split`; repeatable.
        #[arg(long = "curve")]
        curves: Vec<CurveSpec>,
        #[arg(long, value_enum, default_value = "step")]
        x: Axis,
        #[arg(long, default_value = ".")]
        out_dir: PathBuf,
    },
}

fn seed_override() -> Result<Option<u64>, CliError> {
    match std::env::var("MCT_SEED") {
        Ok(s) => s
            .trim()
            .parse()
            .map(Some)
            .map_err(|_| CliError::Config(format!("MCT_SEED={s:?} is not an unsigned integer"))),
        Err(_) => Ok(None),
    }
}

fn load(path: &std::path::Path) -> Result<config::Resolved, CliError> {
    let mut loaded = LoadedConfig::read(path)?;
    if let Some(seed) = seed_override()? {
        loaded.override_seeds(seed);
    }
    loaded.validate()
}

fn dispatch(cli: Cli) -> Result<(), CliError> {
    if let Some(jobs) = cli.jobs {
        if jobs == 0 {
            return Err(CliError::Config("--jobs must be positive".to_string()));
        }
        rayon::ThreadPoolBuilder::new()
            .num_threads(jobs)
            .build_global()
            .map_err(|e| CliError::Config(e.to_string()))?;
    }
    match cli.command {
        Command::Validate { config } => {
            let r = load(&config)?;
            println!("{}: ok ({}, output {})", config.display(), r.method.name(), r.output_dir.display());
        }
        Command::Run { config } => {
            let r = load(&config)?;
            let dir = run::run(&r)?;
            println!("{} finished; artifacts in {}", r.method.name(), dir.display());
        }
        Command::Plot {
            metrics,
            curves,
            x,
            out_dir,
        } => {
            for path in plot::emit(&metrics, &curves, x, &out_dir)? {
                println!("{}", path.display());
            }
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match dispatch(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("mct: {e}");
            ExitCode::from(e.code())
        }
    }
}
