//! `oscid`: simulate noise-driven oscillators and identify `(eps, alpha, d)`
//! from their records.
//!
//! Exit codes: 0 success, 2 configuration error, 3 data error, 4 numerical
//! failure.

mod commands;
mod config;
mod error;
mod output;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use oscid_core::ident::Method;
use oscid_core::Theta;

use config::{parse_seeds, parse_theta, Mode, Overrides, RunConfig, SeedList};
use error::CliResult;

#[derive(Parser)]
#[command(name = "oscid", version, about = "Output-only identification of noise-driven Van der Pol oscillators")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Write one `time,value` record per seed.
    Simulate {
        #[command(flatten)]
        common: Common,
    },
    /// Fit one record, or each segment of it.
    Identify {
        input: PathBuf,
        #[command(flatten)]
        common: Common,
    },
    /// Simulate and fit over a parameter axis with every method.
    Sweep {
        #[command(flatten)]
        common: Common,
    },
    /// Run both optimizers from the same start on the same estimates.
    Compare {
        input: PathBuf,
        #[command(flatten)]
        common: Common,
    },
    /// Deterministic versus random contribution per segment.
    Report {
        input: PathBuf,
        /// `epsilon,alpha,d`; each segment is identified first when absent.
        #[arg(long, value_parser = parse_theta, allow_hyphen_values = true)]
        theta: Option<Theta>,
        #[command(flatten)]
        common: Common,
    },
}

#[derive(Args)]
struct Common {
    /// TOML run configuration, or a `run.json` sidecar from an earlier run.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Output directory.
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long, conflicts_with = "seeds")]
    seed: Option<u64>,
    /// `a..b` (end exclusive) or a comma-separated list.
    #[arg(long, value_parser = parse_seeds)]
    seeds: Option<SeedList>,
    #[arg(long)]
    method: Option<Method>,
    /// Window length in seconds.
    #[arg(long)]
    segment: Option<f64>,
    #[arg(long)]
    jobs: Option<usize>,
    /// Overwrite existing outputs.
    #[arg(long)]
    force: bool,
}

impl Common {
    fn resolve(&self, mode: Mode, theta: Option<Theta>) -> CliResult<RunConfig> {
        let mut cfg = match &self.config {
            Some(p) => output::load_config(p)?,
            None => RunConfig::default(),
        };
        cfg.apply(&Overrides {
            out: self.out.clone(),
            seed: self.seed,
            seeds: self.seeds.clone().map(|s| s.0),
            method: self.method,
            segment: self.segment,
            jobs: self.jobs,
            theta,
        });
        cfg.validate(mode)?;
        Ok(cfg)
    }
}

fn run(cli: Cli) -> CliResult<()> {
    match cli.command {
        Command::Simulate { common } => {
            let cfg = common.resolve(Mode::Simulate, None)?;
            commands::simulate(&cfg, common.force)
        }
        Command::Identify { input, common } => {
            let cfg = common.resolve(Mode::Identify, None)?;
            commands::identify(&cfg, &input, common.force)
        }
        Command::Sweep { common } => {
            let cfg = common.resolve(Mode::Sweep, None)?;
            commands::sweep(&cfg, common.force)
        }
        Command::Compare { input, common } => {
            let cfg = common.resolve(Mode::Compare, None)?;
            commands::compare(&cfg, &input, common.force)
        }
        Command::Report { input, theta, common } => {
            let cfg = common.resolve(Mode::Report, theta)?;
            commands::report(&cfg, &input, common.force)
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            let json = serde_json::to_string(&serde_json::json!({ "error": e.to_json() }))
                .unwrap_or_else(|_| format!("{{\"error\":\"{}\"}}", e.kind()));
            eprintln!("{json}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
