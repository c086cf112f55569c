//! Batch front end: load a run configuration, execute one of the
//! simulate / audit / difflimit / compare commands, write CSV artifacts
//! and a human-readable report.
//!
//! Exit codes: 0 success, 1 runtime termination (blow-up, negativity,
//! Newton failure), 2 configuration error, 3 assumption-audit failure.

// Validation uses `!(x > 0.0)` so NaN is rejected along with nonpositive
// values.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use thiserror::Error;

mod artifacts;
mod commands;
mod config;
mod report;

use commands::{cmd_audit, cmd_compare, cmd_difflimit, cmd_simulate, resolve_out_dir};
use config::load_config;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("{0}")]
    Config(String),
    #[error("{0}")]
    Runtime(String),
    #[error("assumption audit failed")]
    AuditFailed,
}

impl CliError {
    fn exit_code(&self) -> u8 {
        match self {
            CliError::Runtime(_) => 1,
            CliError::Config(_) => 2,
            CliError::AuditFailed => 3,
        }
    }
}

#[derive(Parser)]
#[command(
    name = "nrd",
    version,
    about = "Reaction-diffusion systems with nonlocal and local diffusion: simulate, audit, rescaling studies, comparisons"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct CommonArgs {
    /// Run configuration (TOML).
    #[arg(long)]
    config: PathBuf,
    /// Output directory (falls back to [output].dir, then $NRD_OUT_DIR,
    /// then ./nrd-out).
    #[arg(long)]
    out: Option<PathBuf>,
    /// Worker threads for operator application (default: all cores).
    /// Results are bitwise independent of this setting.
    #[arg(long)]
    threads: Option<usize>,
    /// Config override as dotted.key=value; repeatable.
    #[arg(long = "override", value_name = "KEY=VALUE")]
    overrides: Vec<String>,
}

#[derive(Subcommand)]
enum Command {
    /// Integrate the configured system and write snapshots + diagnostics.
    Simulate(CommonArgs),
    /// Run the structural-hypothesis checkers on the configured reaction.
    Audit(CommonArgs),
    /// Kernel-rescaling convergence study against the matched local system.
    Difflimit(CommonArgs),
    /// Run two configurations side by side and compare smoothness.
    Compare {
        #[command(flatten)]
        common: CommonArgs,
        /// Second run configuration.
        #[arg(long = "config-b")]
        config_b: PathBuf,
    },
}

fn init_threads(threads: Option<usize>) {
    if let Some(n) = threads {
        // Ignore the error from double initialization; the pool size only
        // affects scheduling, never results.
        let _ = rayon::ThreadPoolBuilder::new()
            .num_threads(n.max(1))
            .build_global();
    }
}

fn dispatch(cli: Cli) -> Result<(), CliError> {
    match cli.command {
        Command::Simulate(args) => {
            init_threads(args.threads);
            let loaded = load_config(&args.config, &args.overrides)?;
            let out = resolve_out_dir(args.out.clone(), &loaded);
            cmd_simulate(&loaded, &out)
        }
        Command::Audit(args) => {
            init_threads(args.threads);
            let loaded = load_config(&args.config, &args.overrides)?;
            let out = resolve_out_dir(args.out.clone(), &loaded);
            cmd_audit(&loaded, &out)
        }
        Command::Difflimit(args) => {
            init_threads(args.threads);
            let loaded = load_config(&args.config, &args.overrides)?;
            let out = resolve_out_dir(args.out.clone(), &loaded);
            cmd_difflimit(&loaded, &out)
        }
        Command::Compare { common, config_b } => {
            init_threads(common.threads);
            let loaded_a = load_config(&common.config, &common.overrides)?;
            let loaded_b = load_config(&config_b, &common.overrides)?;
            let out = resolve_out_dir(common.out.clone(), &loaded_a);
            cmd_compare(&loaded_a, &loaded_b, &out)
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match dispatch(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
