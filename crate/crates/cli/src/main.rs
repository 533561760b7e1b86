use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::{bail, Result};
use clap::{Parser, Subcommand};
use srsm_cli::{
    cmd_doe, cmd_init, cmd_report, cmd_resume, cmd_run, cmd_sobol, summary, RunOptions, DEFAULT_DOE_DESIGNS,
};
use srsm_core::sensitivity::{Aggregation, DEFAULT_BASE_SAMPLES};

#[derive(Parser)]
#[command(
    name = "srsm-opt",
    version,
    about = "Sequential RBF response-surface design optimization"
)]
struct Cli {
    /// Only print results and errors.
    #[arg(long, global = true)]
    quiet: bool,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Write template configs for the four preset problems.
    Init {
        #[arg(default_value = ".")]
        dir: PathBuf,
    },
    /// Run (or continue) an optimization.
    Run {
        #[arg(long, conflicts_with = "resume", required_unless_present = "resume")]
        config: Option<PathBuf>,
        /// Continue the run in this directory.
        #[arg(long)]
        resume: Option<PathBuf>,
        #[arg(long)]
        seed: Option<u64>,
        /// Concurrent evaluations (0 = all cores).
        #[arg(long)]
        parallelism: Option<usize>,
        /// Run directory (default: $SRSM_OPT_DIR/<name> or runs/<name>).
        #[arg(long)]
        output: Option<PathBuf>,
        /// Return after this many iterations; the run stays resumable.
        #[arg(long)]
        stop_after: Option<u32>,
    },
    /// Continue the run in a directory.
    Resume {
        dir: PathBuf,
        #[arg(long)]
        parallelism: Option<usize>,
        #[arg(long)]
        stop_after: Option<u32>,
    },
    /// Calibrate the displacement weights by a DOE study.
    Doe {
        #[arg(long)]
        config: PathBuf,
        #[arg(short, long, default_value_t = DEFAULT_DOE_DESIGNS)]
        n: usize,
        /// Derived config path (default: <config>.doe.json).
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Summarize a run directory and check its integrity.
    Report { dir: PathBuf },
    /// Sobol indices on the final metamodels of a run.
    Sobol {
        dir: PathBuf,
        #[arg(long, default_value_t = DEFAULT_BASE_SAMPLES)]
        n_base: usize,
        #[arg(long)]
        seed: Option<u64>,
        /// `variance_weighted` or `weighted`.
        #[arg(long, default_value = "variance_weighted")]
        aggregation: Aggregation,
    },
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let level = if cli.quiet { "warn" } else { "info" };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level))
        .format_timestamp(None)
        .init();
    match dispatch(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}

fn dispatch(command: Command) -> Result<()> {
    match command {
        Command::Init { dir } => {
            for p in cmd_init(&dir)? {
                println!("{}", p.display());
            }
        }
        Command::Run {
            config,
            resume,
            seed,
            parallelism,
            output,
            stop_after,
        } => {
            let opts = RunOptions {
                seed,
                parallelism,
                stop_after,
                output,
            };
            match (config, resume) {
                (Some(c), None) => {
                    let (dir, result) = cmd_run(&c, &opts)?;
                    println!("run directory: {}", dir.display());
                    println!("{}", summary(&result));
                }
                (None, Some(d)) => println!("{}", summary(&cmd_resume(&d, &opts)?)),
                _ => bail!("give exactly one of --config and --resume"),
            }
        }
        Command::Resume {
            dir,
            parallelism,
            stop_after,
        } => {
            let opts = RunOptions {
                parallelism,
                stop_after,
                ..RunOptions::default()
            };
            println!("{}", summary(&cmd_resume(&dir, &opts)?));
        }
        Command::Doe { config, n, out } => {
            let (cal, path) = cmd_doe(&config, n, out.as_deref())?;
            println!(
                "designs requested: {} (evaluated successfully: {})",
                cal.n_requested, cal.n_used
            );
            println!("mean |d_subsidence| = {:.6e}", cal.mean_abs_subsidence);
            println!("mean |d_expulsion|  = {:.6e}", cal.mean_abs_expulsion);
            println!("w1 = {}", cal.w1);
            println!("w2 = {}", cal.w2);
            println!("derived config: {}", path.display());
        }
        Command::Report { dir } => print!("{}", cmd_report(&dir)?),
        Command::Sobol {
            dir,
            n_base,
            seed,
            aggregation,
        } => {
            let (results, ranking) = cmd_sobol(&dir, n_base, seed, aggregation)?;
            for r in results.iter().filter(|r| r.constant_function) {
                println!("note: `{}` is constant on the final region", r.objective);
            }
            for r in &results {
                let neg = r.negative_flags();
                if !neg.is_empty() {
                    println!(
                        "note: `{}` has small negative estimates for {}",
                        r.objective,
                        neg.join(", ")
                    );
                }
            }
            println!("{:<6}{:<28}{:>10}", "rank", "variable", "score");
            for (i, (v, s)) in ranking.iter().enumerate() {
                println!("{:<6}{:<28}{:>10.4}", i + 1, v, s);
            }
        }
    }
    Ok(())
}
