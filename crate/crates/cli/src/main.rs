use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Instant;

use clap::{Parser, Subcommand};
use mmimo_iot::harness::{self, ExperimentConfig};
use mmimo_iot::mc::{Workers, WORKERS_ENV};
use mmimo_iot::Error;

const EXIT_VALIDATION: u8 = 2;
const EXIT_RUNTIME: u8 = 3;

/// Massive MIMO URLLC and mMTC experiments.
///
/// Settings are applied in this order, later ones winning: config file or
/// packaged recipe, `--set` overrides, then `--seed`, `--trials` and
/// `--workers`. The MMIMO_WORKERS environment variable overrides the worker
/// count of every run.
#[derive(Parser)]
#[command(name = "mmimo", version, after_help = format!("Worker override: {WORKERS_ENV}=<n>"))]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(clap::Args)]
struct RunOpts {
    /// Dotted-path override, e.g. `frame.payload_bits=100`. Repeatable.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    set: Vec<String>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    trials: Option<u64>,
    /// Worker threads, or `auto`.
    #[arg(long)]
    workers: Option<String>,
    /// Write the CSV here instead of stdout.
    #[arg(long, value_name = "FILE")]
    out: Option<PathBuf>,
    /// Also write a JSON mirror (with wall time) to this file.
    #[arg(long, value_name = "FILE")]
    json: Option<PathBuf>,
}

#[derive(Subcommand)]
enum Command {
    /// Run the experiment described by a TOML config.
    Run {
        config: PathBuf,
        #[command(flatten)]
        opts: RunOpts,
    },
    /// Run a packaged recipe.
    Recipe {
        name: String,
        #[command(flatten)]
        opts: RunOpts,
        /// Print the recipe's TOML instead of running it.
        #[arg(long)]
        show: bool,
    },
    /// List the packaged recipes.
    ListRecipes,
    /// Check a config without running it.
    Validate {
        config: PathBuf,
        #[arg(long = "set", value_name = "KEY=VALUE")]
        set: Vec<String>,
    },
}

enum Failure {
    Validation(String),
    Runtime(String),
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        match e {
            Error::InvalidConfig { .. } => Failure::Validation(e.to_string()),
            other => Failure::Runtime(other.to_string()),
        }
    }
}

fn load(path: &Path) -> Result<ExperimentConfig, Failure> {
    let text = std::fs::read_to_string(path).map_err(|e| Failure::Validation(format!("{}: {e}", path.display())))?;
    ExperimentConfig::from_toml_str(&text).map_err(Failure::from)
}

fn apply(base: ExperimentConfig, opts: &RunOpts) -> Result<ExperimentConfig, Failure> {
    let mut sets = opts.set.clone();
    if let Some(s) = opts.seed {
        sets.push(format!("seed={s}"));
    }
    if let Some(t) = opts.trials {
        sets.push(format!("trials={t}"));
    }
    let mut cfg = base.with_overrides(&sets)?;
    if let Some(w) = &opts.workers {
        cfg.workers = match w.as_str() {
            "auto" => Workers::Auto,
            n => match n.parse::<usize>() {
                Ok(n) if n > 0 => Workers::Fixed(n),
                _ => return Err(Failure::Validation(format!("invalid configuration: workers: expected \"auto\" or a positive integer, got {n:?}"))),
            },
        };
    }
    cfg.validate()?;
    Ok(cfg)
}

fn execute(cfg: &ExperimentConfig, opts: &RunOpts) -> Result<(), Failure> {
    let start = Instant::now();
    let table = harness::run(cfg)?;
    let wall = start.elapsed().as_secs_f64();
    let csv = table.to_csv();
    match &opts.out {
        Some(p) => std::fs::write(p, csv).map_err(|e| Failure::Runtime(format!("{}: {e}", p.display())))?,
        None => print!("{csv}"),
    }
    if let Some(p) = &opts.json {
        std::fs::write(p, table.to_json(Some(wall))).map_err(|e| Failure::Runtime(format!("{}: {e}", p.display())))?;
    }
    eprintln!("{}: {} rows in {wall:.2} s", cfg.experiment.name(), table.rows.len());
    Ok(())
}

fn dispatch(cli: Cli) -> Result<(), Failure> {
    match cli.command {
        Command::Run { config, opts } => {
            let cfg = apply(load(&config)?, &opts)?;
            execute(&cfg, &opts)
        }
        Command::Recipe { name, opts, show } => {
            let r = harness::recipe(&name).ok_or_else(|| {
                Failure::Validation(format!("unknown recipe `{name}` (available: {})", harness::recipe_names().join(", ")))
            })?;
            let cfg = apply(r.config, &opts)?;
            if show {
                print!("{}", cfg.to_toml_string());
                return Ok(());
            }
            execute(&cfg, &opts)
        }
        Command::ListRecipes => {
            for r in harness::recipes() {
                println!("{:<20} {}", r.name, r.summary);
            }
            Ok(())
        }
        Command::Validate { config, set } => {
            let cfg = load(&config)?.with_overrides(&set)?;
            cfg.validate()?;
            println!("ok {} {}", cfg.experiment.name(), cfg.hash());
            Ok(())
        }
    }
}

fn main() -> ExitCode {
    match dispatch(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Validation(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(EXIT_VALIDATION)
        }
        Err(Failure::Runtime(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(EXIT_RUNTIME)
        }
    }
}
