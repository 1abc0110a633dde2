//! Batch pipeline for GP surrogate modeling of crash injury metrics.
//!
//! Typical session:
//! ```text
//! injury-surrogate export --fixture
//! injury-surrogate fit --metric a_t1_max --cases 1-25
//! injury-surrogate check --metric a_t1_max --results new-runs.csv
//! injury-surrogate augment --metric a_t1_max --results new-runs.csv --augment-all
//! injury-surrogate stats
//! ```
//!
//! Exit codes: 0 success, 2 usage or data problem, 3 accuracy gate failed.

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

mod commands;
mod config;
mod report;
mod svg;

use commands::Failure;
use config::RunConfig;

#[derive(Parser)]
#[command(
    name = "injury-surrogate",
    version,
    about = "GP surrogate pipeline for crash injury metrics: fit, refine, summarize"
)]
struct Cli {
    /// Flat key=value config file; command-line flags win.
    #[arg(long, global = true, value_name = "FILE")]
    config: Option<PathBuf>,

    /// Metric to operate on: hic15, a_t1_max, or both.
    #[arg(long, global = true, value_name = "METRIC")]
    metric: Option<String>,

    /// Seed for every random draw (fit restarts, sampling, pools).
    #[arg(long, global = true, value_name = "N")]
    seed: Option<u64>,

    /// Directory for every artifact the pipeline writes.
    #[arg(long, global = true, value_name = "DIR")]
    out: Option<PathBuf>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Write the bundled 27-run campaign as the ledger.
    Export {
        /// Export the embedded campaign.
        #[arg(long)]
        fixture: bool,
    },
    /// Validate an external campaign CSV and adopt it as the ledger.
    Ingest {
        /// CSV with header case,torso_angle_deg,dring_z,hic15,a_t1_max.
        file: PathBuf,
    },
    /// Fit one GP model per selected metric and report the fit.
    Fit {
        /// Train on the bundled campaign instead of the ledger.
        #[arg(long)]
        fixture: bool,
        /// Train from this ledger CSV instead of the default.
        #[arg(long, value_name = "FILE", conflicts_with = "fixture")]
        ledger: Option<PathBuf>,
        /// Case selection like `7` or `1-25`; repeat to add ranges.
        #[arg(long, value_name = "RANGE")]
        cases: Vec<String>,
    },
    /// Rank candidates by posterior variance and write the pending manifest.
    Propose {
        /// Model file (default: the fitted model in the output directory).
        #[arg(long, value_name = "FILE")]
        model: Option<PathBuf>,
        /// How many points to propose.
        #[arg(long, value_name = "N")]
        k: Option<usize>,
    },
    /// Grade predictions against fresh simulation results.
    Check {
        /// Results CSV in ledger schema covering the tested points.
        #[arg(long, value_name = "FILE")]
        results: PathBuf,
        /// Pending manifest; every listed point must appear in the results.
        #[arg(long, value_name = "FILE")]
        pending: Option<PathBuf>,
        #[arg(long, value_name = "FILE")]
        model: Option<PathBuf>,
        /// Accuracy gate in percent (strict less-than).
        #[arg(long, value_name = "PCT")]
        threshold_pct: Option<f64>,
    },
    /// Absorb results through the accuracy gate, refit, and extend the ledger.
    Augment {
        /// Results CSV in ledger schema.
        #[arg(long, value_name = "FILE")]
        results: PathBuf,
        #[arg(long, value_name = "FILE")]
        model: Option<PathBuf>,
        /// Campaign ledger to extend (default: the one in the output directory).
        #[arg(long, value_name = "FILE")]
        ledger: Option<PathBuf>,
        /// Absorb every tested run, not only the failing ones.
        #[arg(long)]
        augment_all: bool,
    },
    /// Sample the input distribution and summarize each metric.
    Stats {
        #[arg(long, value_name = "FILE")]
        model: Option<PathBuf>,
        /// Sample count override.
        #[arg(long, value_name = "N")]
        lhs_n: Option<usize>,
    },
}

fn build_config(cli: &Cli) -> Result<RunConfig, String> {
    let mut cfg = RunConfig::default();
    if let Some(path) = &cli.config {
        cfg.apply_file(path)?;
    }
    cfg.apply_flags(cli.metric.as_deref(), cli.seed, cli.out.clone())?;
    Ok(cfg)
}

fn run(cli: &Cli) -> commands::CmdResult {
    let cfg = build_config(cli).map_err(Failure::Data)?;
    match &cli.command {
        Command::Export { fixture } => commands::cmd_export(&cfg, *fixture),
        Command::Ingest { file } => commands::cmd_ingest(&cfg, file),
        Command::Fit {
            fixture,
            ledger,
            cases,
        } => commands::cmd_fit(&cfg, *fixture, ledger.as_deref(), cases),
        Command::Propose { model, k } => commands::cmd_propose(&cfg, model.as_deref(), *k),
        Command::Check {
            results,
            pending,
            model,
            threshold_pct,
        } => commands::cmd_check(
            &cfg,
            results,
            pending.as_deref(),
            model.as_deref(),
            *threshold_pct,
        ),
        Command::Augment {
            results,
            model,
            ledger,
            augment_all,
        } => commands::cmd_augment(&cfg, results, model.as_deref(), ledger.as_deref(), *augment_all),
        Command::Stats { model, lhs_n } => commands::cmd_stats(&cfg, model.as_deref(), *lhs_n),
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn"))
        .format_timestamp(None)
        .init();

    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = match e.kind() {
                clap::error::ErrorKind::DisplayHelp | clap::error::ErrorKind::DisplayVersion => 0,
                _ => 2,
            };
            // Render through clap so help keeps its formatting.
            let _ = e.print();
            return ExitCode::from(code);
        }
    };

    match run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Data(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(2)
        }
        Err(Failure::Gate(msg)) => {
            eprintln!("{msg}");
            ExitCode::from(3)
        }
    }
}
