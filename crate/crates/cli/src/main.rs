//! `percept`: validate inputs, compute report files, generate fixtures.
//!
//! Exit codes: 0 success, 2 bad config or inputs, 3 computation refused,
//! 4 I/O failure.

mod config;
mod error;
mod inputs;
mod output;
mod reports;
mod synthcmd;

use std::path::PathBuf;

use clap::{Parser, Subcommand, ValueEnum};
use percept_core::metrics::{ErrorFilter, SdNorm};
use percept_core::stats::Pooling;
use percept_core::teaming::{TeamMode, TieRule};

use crate::config::RunConfig;
use crate::error::CliError;
use crate::output::OutputWriter;
use crate::reports::{run_report, validation_report, ReportFlags, Which};

#[derive(Parser)]
#[command(name = "percept", version, about = "Perception gap reports over prediction and annotation CSVs")]
struct Cli {
    #[command(subcommand)]
    command: Command,
    /// Run config (population config for `synth gen`).
    #[arg(long, global = true, value_name = "PATH")]
    config: Option<PathBuf>,
    /// Output directory; overrides the config's `out_dir`.
    #[arg(long, global = true, value_name = "DIR")]
    out: Option<PathBuf>,
    /// Overrides the config's seed.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Overrides the config's significance level.
    #[arg(long, global = true)]
    alpha: Option<f64>,
}

#[derive(Clone, Copy, ValueEnum)]
enum ErrorFilterArg {
    Both,
    Row,
    Either,
}

#[derive(Clone, Copy, ValueEnum)]
enum SdNormArg {
    L1,
    L2,
}

#[derive(Clone, Copy, ValueEnum)]
enum PoolingArg {
    Cells,
    Pairs,
}

#[derive(Clone, Copy, ValueEnum)]
enum ModeArg {
    Oracle,
    Swap,
}

#[derive(Subcommand)]
enum Command {
    /// Parse and align every configured input; write validation.json.
    Validate,
    /// Write report files and a manifest into the output directory.
    Report {
        #[arg(value_enum)]
        which: Which,
        /// Which errors select samples for error-confusion matrices.
        #[arg(long, value_enum, default_value = "both")]
        error_filter: ErrorFilterArg,
        /// Distance between machine and human label distributions.
        #[arg(long, value_enum, default_value = "l1")]
        sd_norm: SdNormArg,
        /// How matrix families pool into the diagonal test.
        #[arg(long, value_enum, default_value = "cells")]
        pooling: PoolingArg,
        /// Majority-vote tie handling: `lowest` or `random:<seed>`.
        #[arg(long, default_value = "lowest")]
        tie: String,
        /// Teaming composition rule.
        #[arg(long, value_enum, default_value = "swap")]
        mode: ModeArg,
        /// Swap threshold; omitted, swap mode selects one over the grid.
        #[arg(long)]
        eta: Option<f64>,
    },
    /// Synthetic populations.
    Synth {
        #[command(subcommand)]
        action: SynthAction,
    },
}

#[derive(Subcommand)]
enum SynthAction {
    /// Generate ingest-format CSV files from a population config.
    Gen,
}

fn parse_tie(s: &str) -> Result<TieRule, CliError> {
    if s == "lowest" {
        return Ok(TieRule::LowestAnnotator);
    }
    if let Some(seed) = s.strip_prefix("random:") {
        return seed
            .parse::<u64>()
            .map(TieRule::Random)
            .map_err(|e| CliError::Validation(format!("--tie random seed: {e}")));
    }
    Err(CliError::Validation(format!(
        "--tie must be `lowest` or `random:<seed>`, got '{s}'"
    )))
}

fn require<T>(v: Option<T>, what: &str) -> Result<T, CliError> {
    v.ok_or_else(|| CliError::Validation(format!("{what} is required")))
}

/// Config plus the CLI overrides, reduced to the effective knob values.
fn effective(
    cli: &Cli,
) -> Result<(RunConfig, Vec<u8>, u64, f64, PathBuf), CliError> {
    let config_path = require(cli.config.as_ref(), "--config")?;
    let (cfg, bytes) = RunConfig::load(config_path)?;
    let seed = cli.seed.unwrap_or(cfg.seed);
    let alpha = cli.alpha.unwrap_or(cfg.alpha);
    if !(alpha > 0.0 && alpha < 1.0) {
        return Err(CliError::Validation(format!(
            "alpha must lie in (0, 1), got {alpha}"
        )));
    }
    let out = match &cli.out {
        Some(dir) => dir.clone(),
        None => cfg.resolve(require(cfg.out_dir.as_ref(), "--out (or config `out_dir`)")?),
    };
    Ok((cfg, bytes, seed, alpha, out))
}

fn run(cli: &Cli) -> Result<(), CliError> {
    match &cli.command {
        Command::Validate => {
            let (cfg, _, _, _, out) = effective(cli)?;
            let loaded = inputs::load(&cfg)?;
            let mut writer = OutputWriter::new(&out)?;
            writer.write_json("validation.json", &validation_report(&loaded))
        }
        Command::Report {
            which,
            error_filter,
            sd_norm,
            pooling,
            tie,
            mode,
            eta,
        } => {
            let (cfg, bytes, seed, alpha, out) = effective(cli)?;
            if let Some(e) = eta {
                if !(0.0..=1.0).contains(e) {
                    return Err(CliError::Validation(format!(
                        "--eta must lie in [0, 1], got {e}"
                    )));
                }
            }
            let flags = ReportFlags {
                error_filter: match error_filter {
                    ErrorFilterArg::Both => ErrorFilter::Both,
                    ErrorFilterArg::Row => ErrorFilter::Row,
                    ErrorFilterArg::Either => ErrorFilter::Either,
                },
                sd_norm: match sd_norm {
                    SdNormArg::L1 => SdNorm::L1,
                    SdNormArg::L2 => SdNorm::L2,
                },
                pooling: match pooling {
                    PoolingArg::Cells => Pooling::Cells,
                    PoolingArg::Pairs => Pooling::Pairs,
                },
                tie: parse_tie(tie)?,
                tie_label: tie.clone(),
                mode: match mode {
                    ModeArg::Oracle => TeamMode::Oracle,
                    ModeArg::Swap => TeamMode::Swap,
                },
                eta: *eta,
            };
            let mut writer = OutputWriter::new(&out)?;
            run_report(&cfg, &bytes, *which, &flags, seed, alpha, &mut writer)
        }
        Command::Synth { action: SynthAction::Gen } => {
            let config = require(cli.config.as_ref(), "--config")?;
            let out = require(cli.out.as_ref(), "--out")?;
            synthcmd::run(config, cli.seed, out)
        }
    }
}

fn main() {
    let cli = Cli::parse();
    if let Err(e) = run(&cli) {
        eprintln!("error: {}", e.message());
        std::process::exit(e.exit_code());
    }
}
