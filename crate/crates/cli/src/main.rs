mod commands;
mod config;
mod error;
mod io;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use config::{Method, RunConfig};
use error::{CliError, CliResult};

#[derive(Debug, Parser)]
#[command(name = "mulan", version, about = "Blind off-grid echo retrieval")]
struct Cli {
    #[command(subcommand)]
    command: Command,
    /// TOML run configuration; built-in defaults are used when omitted.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Overrides the scenario seed.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Overrides the output directory.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Overrides the solver method.
    #[arg(long, global = true, value_enum)]
    method: Option<Method>,
    /// Worker threads (defaults to all cores).
    #[arg(long, global = true)]
    jobs: Option<usize>,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Generate measurements and ground-truth echoes.
    Simulate,
    /// Estimate echoes from a measurement file.
    Solve {
        /// Measurement file; defaults to the one in the output directory.
        #[arg(long)]
        input: Option<PathBuf>,
    },
    /// Score results against ground truth.
    Eval {
        #[arg(long, num_args = 1.., required = true)]
        truth: Vec<PathBuf>,
        #[arg(long, num_args = 1.., required = true)]
        result: Vec<PathBuf>,
    },
    /// Run the configured parameter sweep, resuming completed cells.
    Bench,
}

fn load_config(cli: &Cli) -> CliResult<RunConfig> {
    let mut cfg = match &cli.config {
        Some(path) => RunConfig::load(path)?,
        None => RunConfig::default(),
    };
    if let Some(seed) = cli.seed {
        cfg.scenario.seed = seed;
        if let Some(sweep) = cfg.sweep.as_mut() {
            sweep.base_seed = seed;
        }
    }
    if let Some(out) = &cli.out {
        cfg.output.dir = out.clone();
    }
    if let Some(method) = cli.method {
        cfg.solver.method = method;
    }
    Ok(cfg)
}

fn run(cli: Cli) -> CliResult<()> {
    if let Some(jobs) = cli.jobs {
        if jobs == 0 {
            return Err(CliError::Usage("--jobs must be at least 1".into()));
        }
        rayon::ThreadPoolBuilder::new()
            .num_threads(jobs)
            .build_global()
            .map_err(|e| CliError::Usage(e.to_string()))?;
    }
    let cfg = load_config(&cli)?;
    match &cli.command {
        Command::Simulate => {
            for path in commands::simulate(&cfg)? {
                println!("wrote {}", path.display());
            }
        }
        Command::Solve { input } => {
            let res = commands::solve(&cfg, input.as_deref())?;
            println!(
                "{}: cost {:.3e}, {} iterations, {:.2}s -> {}",
                res.method,
                res.cost,
                res.iterations,
                res.wall_time_s,
                cfg.out_path(&cfg.output.result).display()
            );
        }
        Command::Eval { truth, result } => {
            println!("{}", commands::eval(&cfg, truth, result)?);
        }
        Command::Bench => {
            let cells = commands::bench(&cfg, |c| {
                println!(
                    "K={} M={} F={}: location {:.2}, weight {:.2}",
                    c.k, c.m, c.f, c.location_rate, c.weight_rate
                );
            })?;
            println!("{} cells -> {}", cells.len(), cfg.output.dir.display());
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
