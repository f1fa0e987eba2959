//! Command-line driver for group-testing experiments.
//!
//! Data goes to the file named by `--out`; progress and diagnostics go to
//! standard error, so output files stay clean when commands are chained.

mod grid;
mod validate;

use std::fs;
use std::path::PathBuf;

use anyhow::{bail, Context, Result};
use clap::{Parser, Subcommand, ValueEnum};
use serde::Serialize;

use pooltest::harness::{
    run_replicated, sweep, write_sweep_csv, ExperimentConfig, ReplicatedResult,
};

/// Environment variable consulted for the default worker count.
const THREADS_ENV: &str = "POOLTEST_THREADS";

#[derive(Parser)]
#[command(
    name = "pooltest",
    version,
    about = "Group-testing experiments with active pool design"
)]
struct Cli {
    /// Worker threads for replicate-level parallelism (default: the
    /// POOLTEST_THREADS variable, else all cores).
    #[arg(long, global = true)]
    threads: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Copy, Clone, PartialEq, Eq, ValueEnum)]
enum Format {
    Csv,
    Json,
}

#[derive(Subcommand)]
enum Command {
    /// Run one replicated experiment config and write the full results
    /// (aggregates, mean trajectory, per-trial dumps) as JSON.
    Trial {
        /// Experiment config file (single values only, no grids).
        #[arg(long)]
        config: PathBuf,
        /// Output file.
        #[arg(long)]
        out: PathBuf,
        /// Override the config's seed.
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long, value_enum, default_value = "json")]
        format: Format,
    },
    /// Expand a grid config and write one aggregated row per grid point.
    Sweep {
        /// Grid config file: any field may be an array of alternatives.
        #[arg(long)]
        config: PathBuf,
        /// Output file.
        #[arg(long)]
        out: PathBuf,
        /// Override every grid point's seed.
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long, value_enum, default_value = "csv")]
        format: Format,
    },
    /// Compare BP marginals to exhaustive enumeration on random small
    /// instances and print deviation statistics.
    ValidateBp {
        #[arg(long, default_value_t = 100)]
        instances: usize,
        #[arg(long, default_value_t = 7)]
        seed: u64,
    },
    /// Print the susceptibility accuracy table (BP versus exact values
    /// at enumeration scale).
    ValidateChi {
        /// Independent realizations per table row.
        #[arg(long, default_value_t = 20)]
        realizations: usize,
        #[arg(long, default_value_t = 7)]
        seed: u64,
    },
    /// Check the analytic identities of the selection criterion.
    Selftest,
}

#[derive(Serialize)]
struct TrialReport<'a> {
    config: &'a ExperimentConfig,
    result: &'a ReplicatedResult,
}

fn main() {
    let cli = Cli::parse();
    if let Err(e) = run(cli) {
        eprintln!("error: {e:#}");
        std::process::exit(1);
    }
}

fn run(cli: Cli) -> Result<()> {
    init_threads(cli.threads)?;
    match cli.command {
        Command::Trial {
            config,
            out,
            seed,
            format,
        } => {
            if format == Format::Csv {
                bail!("trial output is a trajectory dump; only --format json is supported");
            }
            let text = fs::read_to_string(&config)
                .with_context(|| format!("reading {}", config.display()))?;
            let mut experiment: ExperimentConfig =
                serde_json::from_str(&text).context("parsing experiment config")?;
            if let Some(seed) = seed {
                experiment.seed = seed;
            }
            experiment.validate()?;
            eprintln!(
                "trial: strategy={} N={} M={}+{} replications={}",
                experiment.strategy.name(),
                experiment.n_patients,
                experiment.m_initial,
                experiment.m_adaptive,
                experiment.replications
            );
            let result = run_replicated(&experiment)?;
            eprintln!(
                "done: mean_tp={} mean_fp={} bp_failures={}",
                fmt_opt(result.mean_tp),
                fmt_opt(result.mean_fp),
                result.bp_failures
            );
            let report = TrialReport {
                config: &experiment,
                result: &result,
            };
            write_output(&out, &serde_json::to_string_pretty(&report)?)
        }
        Command::Sweep {
            config,
            out,
            seed,
            format,
        } => {
            let text = fs::read_to_string(&config)
                .with_context(|| format!("reading {}", config.display()))?;
            let grid_file: grid::GridFile =
                serde_json::from_str(&text).context("parsing grid config")?;
            let mut configs = grid_file.expand()?;
            if let Some(seed) = seed {
                for c in &mut configs {
                    c.seed = seed;
                }
            }
            eprintln!("sweep: {} grid points", configs.len());
            let mut rows = Vec::with_capacity(configs.len());
            for (idx, config) in configs.iter().enumerate() {
                let row = sweep(std::slice::from_ref(config)).pop().unwrap();
                match (&row.metrics, &row.error) {
                    (Some(m), _) => eprintln!(
                        "[{}/{}] {} rho={} p_tp={} p_fp={}: mean_tp={} mean_fp={} bp_failures={}",
                        idx + 1,
                        configs.len(),
                        config.strategy.name(),
                        config.rho,
                        config.noise.p_tp(),
                        config.noise.p_fp(),
                        fmt_opt(m.mean_tp),
                        fmt_opt(m.mean_fp),
                        m.bp_failures
                    ),
                    (None, Some(e)) => eprintln!(
                        "[{}/{}] {} failed: {e}",
                        idx + 1,
                        configs.len(),
                        config.strategy.name()
                    ),
                    (None, None) => unreachable!("row without metrics or error"),
                }
                rows.push(row);
            }
            match format {
                Format::Csv => {
                    let mut buf = Vec::new();
                    write_sweep_csv(&rows, &mut buf)?;
                    write_output(&out, std::str::from_utf8(&buf)?)
                }
                Format::Json => write_output(&out, &serde_json::to_string_pretty(&rows)?),
            }
        }
        Command::ValidateBp { instances, seed } => validate::validate_bp(instances, seed),
        Command::ValidateChi { realizations, seed } => validate::validate_chi(realizations, seed),
        Command::Selftest => validate::selftest(),
    }
}

fn init_threads(cli_threads: Option<usize>) -> Result<()> {
    let threads = match cli_threads {
        Some(t) => Some(t),
        None => match std::env::var(THREADS_ENV) {
            Ok(v) => Some(
                v.parse::<usize>()
                    .with_context(|| format!("parsing {THREADS_ENV}={v}"))?,
            ),
            Err(_) => None,
        },
    };
    if let Some(threads) = threads {
        anyhow::ensure!(threads > 0, "thread count must be positive");
        rayon::ThreadPoolBuilder::new()
            .num_threads(threads)
            .build_global()
            .context("initializing worker pool")?;
    }
    Ok(())
}

fn write_output(path: &PathBuf, contents: &str) -> Result<()> {
    let mut text = contents.to_string();
    if !text.ends_with('\n') {
        text.push('\n');
    }
    fs::write(path, text).with_context(|| format!("writing {}", path.display()))?;
    eprintln!("wrote {}", path.display());
    Ok(())
}

fn fmt_opt(v: Option<f64>) -> String {
    v.map(|x| format!("{x:.4}")).unwrap_or_else(|| "n/a".into())
}
