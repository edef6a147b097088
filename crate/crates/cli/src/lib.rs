//! Command line, file formats and scenario presets for the dispatch
//! simulator. The numerical model lives in `gridopt-core`.

pub mod commands;
pub mod config;
pub mod csvio;
pub mod summary;

use clap::{Parser, Subcommand};
use std::path::PathBuf;

/// Exit codes: 0 success, 1 usage error, 2 validation failure, 3 runtime
/// failure.
#[derive(Debug)]
pub enum AppError {
    Usage(anyhow::Error),
    Validation(anyhow::Error),
    Runtime(anyhow::Error),
}

impl AppError {
    pub fn usage(e: impl Into<anyhow::Error>) -> Self {
        AppError::Usage(e.into())
    }

    pub fn validation(e: impl Into<anyhow::Error>) -> Self {
        AppError::Validation(e.into())
    }

    pub fn runtime(e: impl Into<anyhow::Error>) -> Self {
        AppError::Runtime(e.into())
    }

    pub fn exit_code(&self) -> i32 {
        match self {
            AppError::Usage(_) => 1,
            AppError::Validation(_) => 2,
            AppError::Runtime(_) => 3,
        }
    }

    pub fn message(&self) -> String {
        match self {
            AppError::Usage(e) | AppError::Validation(e) | AppError::Runtime(e) => format!("{e:#}"),
        }
    }
}

impl From<anyhow::Error> for AppError {
    fn from(e: anyhow::Error) -> Self {
        AppError::Runtime(e)
    }
}

pub type AppResult<T> = Result<T, AppError>;

#[derive(Parser, Debug)]
#[command(
    name = "gridopt",
    about = "Multi-region renewable electricity dispatch simulator and portfolio optimizer",
    version,
    disable_help_subcommand = true
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Subcommand, Debug)]
pub enum Command {
    /// Check a scenario file against the schema and all invariants.
    Validate {
        /// Scenario file (or name under GRIDOPT_CONFIG_DIR).
        scenario: String,
        /// Also load every trace and profile file.
        #[arg(long)]
        check_traces: bool,
    },
    /// Simulate a fixed portfolio chronologically and report costs.
    Simulate {
        scenario: String,
        /// Portfolio TOML file.
        portfolio: PathBuf,
        /// Write the summary JSON here instead of stdout.
        #[arg(long)]
        out: Option<PathBuf>,
        /// Dump the per-interval balance ledger to this CSV.
        #[arg(long)]
        dispatch_csv: Option<PathBuf>,
        /// Ledger window as half-open interval indices, e.g. 0:48.
        #[arg(long, value_parser = parse_window)]
        window: Option<(usize, usize)>,
        /// Calendar years excluded from accounting at the start.
        #[arg(long, default_value_t = 0)]
        burn_in_years: u32,
    },
    /// Search portfolio space with Differential Evolution.
    Optimize {
        scenario: String,
        /// Override the scenario's optimizer seed.
        #[arg(long)]
        seed: Option<u64>,
        /// Worker threads for population evaluation (default: all cores).
        #[arg(long)]
        threads: Option<usize>,
        /// Checkpoint file: resumed when present, rewritten every generation.
        #[arg(long)]
        checkpoint: Option<PathBuf>,
        #[arg(long)]
        out: Option<PathBuf>,
        /// Override the scenario's generation budget.
        #[arg(long)]
        generations: Option<usize>,
        #[arg(long, default_value_t = 0)]
        burn_in_years: u32,
        /// Write best-total-per-generation history CSV.
        #[arg(long)]
        history: Option<PathBuf>,
        /// Suppress progress output.
        #[arg(long)]
        quiet: bool,
    },
    /// Re-evaluate LCOE under ±25% single-parameter cost scaling.
    Sensitivity {
        scenario: String,
        portfolio: PathBuf,
        /// Number of multipliers covering [0.75, 1.25].
        #[arg(long, default_value_t = 3)]
        steps: usize,
        /// Comma-separated parameter labels (default: all).
        #[arg(long, value_delimiter = ',')]
        parameters: Option<Vec<String>>,
        #[arg(long)]
        out: Option<PathBuf>,
        /// Re-optimize the portfolio for every scaled cost table instead of
        /// holding it fixed.
        #[arg(long)]
        reoptimize: bool,
    },
    /// Pretty-print a summary JSON; optionally verify a dispatch ledger.
    Report {
        summary: PathBuf,
        /// Dispatch CSV to spot-check the balance identity on.
        #[arg(long)]
        dispatch: Option<PathBuf>,
    },
    /// List shipped scenario presets or write one out.
    Preset {
        /// Preset name (omit to list).
        name: Option<String>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

fn parse_window(s: &str) -> Result<(usize, usize), String> {
    let (a, b) = s
        .split_once(':')
        .ok_or_else(|| "expected FROM:TO".to_string())?;
    let from = a.parse().map_err(|_| format!("bad window start '{a}'"))?;
    let to = b.parse().map_err(|_| format!("bad window end '{b}'"))?;
    Ok((from, to))
}

/// Parses arguments and runs; returns the process exit code.
pub fn run_cli<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            use clap::error::ErrorKind;
            let code = match e.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => 0,
                _ => 1,
            };
            let _ = e.print();
            return code;
        }
    };
    match dispatch(cli) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {}", e.message());
            e.exit_code()
        }
    }
}

fn dispatch(cli: Cli) -> AppResult<()> {
    match cli.command {
        Command::Validate {
            scenario,
            check_traces,
        } => commands::cmd_validate(&scenario, check_traces),
        Command::Simulate {
            scenario,
            portfolio,
            out,
            dispatch_csv,
            window,
            burn_in_years,
        } => commands::cmd_simulate(&commands::SimulateArgs {
            scenario,
            portfolio,
            out,
            dispatch_csv,
            window,
            burn_in_years,
        }),
        Command::Optimize {
            scenario,
            seed,
            threads,
            checkpoint,
            out,
            generations,
            burn_in_years,
            history,
            quiet,
        } => commands::cmd_optimize(&commands::OptimizeArgs {
            scenario,
            seed,
            threads,
            checkpoint,
            out,
            generations,
            burn_in_years,
            history,
            quiet,
        }),
        Command::Sensitivity {
            scenario,
            portfolio,
            steps,
            parameters,
            out,
            reoptimize,
        } => commands::cmd_sensitivity(&commands::SensitivityArgs {
            scenario,
            portfolio,
            steps,
            parameters,
            out,
            reoptimize,
        }),
        Command::Report { summary, dispatch } => {
            commands::cmd_report(&summary, dispatch.as_deref())
        }
        Command::Preset { name, out } => commands::cmd_preset(name.as_deref(), out.as_deref()),
    }
}
