//! `imc`: design, analyze, spectrum and simulate subcommands over a single
//! JSON config. Exit codes: 0 success, 2 validation failure, 3 numerical
//! failure.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

mod commands;
mod config;

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use imc_core::imcassembly::ASSEMBLY_CHECK_SEED;
use imc_core::Error;
use serde_json::json;

use crate::commands::Outcome;
use crate::config::ToolkitConfig;

#[derive(Parser)]
#[command(name = "imc", version, about = "Multi-harmonic IMC controller toolkit")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Synthesize the filter and controller; writes controller.json and design_report.json.
    Design(Args),
    /// Sensitivity sweep, H∞ estimate and small-gain margin.
    Analyze(Args),
    /// Ideal and perturbed closed-loop spectra in a rectangle.
    Spectrum(Args),
    /// Sampled-data rejection experiment with per-harmonic residuals.
    Simulate(Args),
}

#[derive(clap::Args)]
struct Args {
    #[arg(long)]
    config: PathBuf,
    /// Controller file; defaults to <out>/controller.json.
    #[arg(long)]
    controller: Option<PathBuf>,
    /// Output directory; overrides the config's output_dir.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Seed for randomized self-checks.
    #[arg(long, default_value_t = ASSEMBLY_CHECK_SEED)]
    seed: u64,
}

const EXIT_VALIDATION: u8 = 2;
const EXIT_NUMERICAL: u8 = 3;

fn exit_code(e: &Error) -> u8 {
    if e.is_validation() {
        EXIT_VALIDATION
    } else {
        EXIT_NUMERICAL
    }
}

fn kind(e: &Error) -> String {
    let debug = format!("{e:?}");
    debug
        .split(|c: char| !c.is_alphanumeric())
        .next()
        .unwrap_or_default()
        .to_string()
}

fn hint(e: &Error) -> Option<&'static str> {
    match e {
        Error::GridTooCoarse { .. } => Some("halve analysis.region.step or move the region edges"),
        Error::CausalityViolation { .. } => Some("raise design.relative_degree to at least beta - alpha"),
        Error::UnstableSimulation { .. } => Some("inspect the partial trace in the output directory"),
        _ => None,
    }
}

fn report_error(out: Option<&Path>, e: &Error, extra: Option<serde_json::Value>) -> ExitCode {
    let code = exit_code(e);
    let mut v = json!({
        "error": kind(e),
        "message": e.to_string(),
        "exit_code": code,
    });
    if let Some(h) = hint(e) {
        v["hint"] = json!(h);
    }
    if let Some(x) = extra {
        v["details"] = x;
    }
    let text = serde_json::to_string_pretty(&v).unwrap_or_default();
    eprintln!("{text}");
    if let Some(dir) = out {
        let _ = std::fs::write(dir.join("error.json"), &text);
    }
    ExitCode::from(code)
}

fn run(args: &Args, cmd: &Command) -> ExitCode {
    let cfg = match ToolkitConfig::load(&args.config) {
        Ok(c) => c,
        Err(e) => return report_error(None, &e, None),
    };
    let out = args.out.clone().unwrap_or_else(|| cfg.output_dir.clone());
    if let Err(e) = std::fs::create_dir_all(&out) {
        return report_error(None, &Error::from(e), None);
    }
    if let Err(e) = cfg.to_json().and_then(|t| Ok(std::fs::write(out.join("config.resolved.json"), t)?)) {
        return report_error(Some(&out), &e, None);
    }
    let controller_path = args.controller.clone().unwrap_or_else(|| out.join("controller.json"));
    let result: imc_core::Result<Outcome> = match cmd {
        Command::Design(_) => commands::design(&cfg, &out, args.seed),
        other => match commands::load_controller(&controller_path) {
            Err(e) => Err(e),
            Ok(c) => match other {
                Command::Analyze(_) => commands::analyze(&cfg, &c, &out),
                Command::Spectrum(_) => commands::spectrum(&cfg, &c, &out),
                Command::Simulate(_) => match commands::simulate(&cfg, &c, &out) {
                    Ok((_, Some(e))) => {
                        let details = json!({ "partial_trace": out.join("trace.csv") });
                        return report_error(Some(&out), &e, Some(details));
                    }
                    Ok((outcome, None)) => Ok(outcome),
                    Err(e) => Err(e),
                },
                Command::Design(_) => unreachable!(),
            },
        },
    };
    match result {
        Ok(outcome) => {
            println!("{}", serde_json::to_string_pretty(&outcome.report).unwrap_or_default());
            if outcome.pass {
                ExitCode::SUCCESS
            } else {
                ExitCode::from(EXIT_NUMERICAL)
            }
        }
        Err(e) => report_error(Some(&out), &e, None),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let args = match &cli.command {
        Command::Design(a) | Command::Analyze(a) | Command::Spectrum(a) | Command::Simulate(a) => a,
    };
    run(args, &cli.command)
}
