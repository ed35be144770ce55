use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};
use emsfem::exec::Threading;
use emsfem::harness::selftest::run_selftest;
use emsfem::harness::suite::export_basis;
use emsfem::harness::{run_reference, run_single, run_suite, ExperimentConfig, SuiteOptions};

/// Edge multiscale FEM with exponential Euler time stepping.
#[derive(Parser)]
#[command(name = "emsfem", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct CellArgs {
    /// Coarse exponent q (H = 2^-q); defaults to the first in the config.
    #[arg(long)]
    coarse: Option<u32>,
    /// Edge level; defaults to the first in the config.
    #[arg(long)]
    level: Option<u32>,
}

#[derive(Subcommand)]
enum Command {
    /// One multiscale run with max-norm and energy traces.
    Run {
        config: PathBuf,
        #[command(flatten)]
        cell: CellArgs,
        #[arg(long)]
        sequential: bool,
    },
    /// Full (H, level) sweep against the cached reference.
    Converge {
        config: PathBuf,
        /// Run cells one after another.
        #[arg(long)]
        sequential: bool,
    },
    /// Compute the fine reference and populate the cache.
    Reference { config: PathBuf },
    /// Export the PU function and basis columns of one coarse node.
    Basis {
        config: PathBuf,
        #[arg(long)]
        node: usize,
        #[command(flatten)]
        cell: CellArgs,
    },
    /// Built-in property checks.
    Selftest {
        #[arg(long, default_value_t = 7)]
        seed: u64,
    },
}

fn load(path: &PathBuf) -> Result<ExperimentConfig> {
    ExperimentConfig::load(path).with_context(|| format!("loading {}", path.display()))
}

fn pick(cfg: &ExperimentConfig, cell: &CellArgs) -> (u32, u32) {
    (cell.coarse.unwrap_or(cfg.mesh.coarse_exponents[0]), cell.level.unwrap_or(cfg.mesh.levels[0]))
}

fn threading(sequential: bool) -> Threading {
    if sequential {
        Threading::Sequential
    } else {
        Threading::Parallel
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    match real_main() {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}

fn real_main() -> Result<ExitCode> {
    let cli = Cli::parse();
    match cli.command {
        Command::Run { config, cell, sequential } => {
            let cfg = load(&config)?;
            let (q, l) = pick(&cfg, &cell);
            let (run, files) = run_single(&cfg, q, l, threading(sequential))?;
            println!("H = 2^-{q}, level {l}: dims {:?}, pruned {:?}, {:.2}s", run.dims, run.pruned, run.wall_seconds);
            if let Some(last) = run.trace.last() {
                println!("final max norm {:?}", last.max_norm);
            }
            let max = run.trace.iter().flat_map(|p| p.max_norm.iter().copied()).fold(0.0f64, f64::max);
            println!("max norm over the run {max:.6}");
            for f in files {
                println!("wrote {}", f.display());
            }
        }
        Command::Converge { config, sequential } => {
            let cfg = load(&config)?;
            let opts = SuiteOptions { cell_threading: threading(sequential), ..SuiteOptions::default() };
            let out = run_suite(&cfg, &opts)?;
            println!("reference {} ({})", out.reference_key, if out.reference_cached { "cached" } else { "computed" });
            print!("{}", out.report.table_csv());
            for f in &out.artifacts {
                println!("wrote {}", f.display());
            }
            if let Some(r) = out.report.rows.iter().find(|r| r.error.is_some()) {
                eprintln!("some cells failed, first: {}", r.error.as_deref().unwrap_or_default());
                return Ok(ExitCode::FAILURE);
            }
        }
        Command::Reference { config } => {
            let cfg = load(&config)?;
            let (r, hit, path) = run_reference(&cfg)?;
            println!(
                "reference at t = {} {} ({:.2}s)",
                r.t,
                if hit { "loaded from cache" } else { "computed" },
                r.wall_seconds
            );
            println!("wrote {}", path.display());
        }
        Command::Basis { config, node, cell } => {
            let cfg = load(&config)?;
            let (q, l) = pick(&cfg, &cell);
            let (count, path) = export_basis(&cfg, q, l, node)?;
            println!("node {node}: {count} basis functions");
            println!("wrote {}", path.display());
        }
        Command::Selftest { seed } => {
            let checks = run_selftest(seed);
            let mut ok = true;
            for c in &checks {
                println!("[{}] {} ({})", if c.passed { "pass" } else { "FAIL" }, c.name, c.detail);
                ok &= c.passed;
            }
            if !ok {
                bail!("selftest failed");
            }
        }
    }
    Ok(ExitCode::SUCCESS)
}
