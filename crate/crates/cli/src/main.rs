//! `unwarp`: batch front end for generating synthetic suites, rectifying
//! images, evaluating results and analysing iteration policies.
//!
//! Exit codes: 0 on success, 1 when any image failed, 2 on usage or
//! configuration errors.

mod common;
mod evaluate;
mod generate;
mod rectify;
mod report;
mod stop;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use common::{CliError, Outcome};

#[derive(Parser, Debug)]
#[command(name = "unwarp", version, about = "Cascaded document rectification toolkit")]
struct Cli {
    #[command(flatten)]
    global: GlobalArgs,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Debug, Clone)]
pub struct GlobalArgs {
    /// key=value configuration file.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Override one configuration key, e.g. `--set tau=0.95`.
    #[arg(long = "set", value_name = "KEY=VALUE", global = true)]
    overrides: Vec<String>,
    /// Worker threads (also UNWARP_WORKERS).
    #[arg(long, global = true)]
    workers: Option<usize>,
    /// Seed for every randomized step.
    #[arg(long, global = true)]
    seed: Option<u64>,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Write a synthetic suite with exact ground truth.
    Generate(generate::GenerateArgs),
    /// Rectify images or a suite.
    Rectify(rectify::RectifyArgs),
    /// Score rectified images against ground truth.
    Evaluate(evaluate::EvaluateArgs),
    /// Compare fixed iteration counts with the adaptive policy.
    StopAnalysis(stop::StopArgs),
    /// Print the effective configuration.
    DumpConfig(DumpArgs),
}

#[derive(Args, Debug)]
struct DumpArgs {
    /// Write to a file instead of stdout.
    #[arg(long)]
    out: Option<PathBuf>,
}

fn run(cli: Cli) -> Result<Outcome, CliError> {
    let cfg = common::resolve_config(&cli.global)?;
    common::init_pool(&cfg)?;
    match cli.command {
        Command::Generate(a) => generate::run(&a, &cfg),
        Command::Rectify(a) => rectify::run(&a, &cfg),
        Command::Evaluate(a) => evaluate::run(&a, &cfg),
        Command::StopAnalysis(a) => stop::run(&a, &cfg),
        Command::DumpConfig(a) => {
            let text = cfg.to_kv();
            match a.out {
                Some(p) => std::fs::write(&p, text).map_err(|e| CliError::Failure(format!("{}: {e}", p.display())))?,
                None => print!("{text}"),
            }
            Ok(Outcome::Success)
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(Outcome::Success) => ExitCode::SUCCESS,
        Ok(Outcome::Partial) => ExitCode::from(1),
        Err(e) => {
            eprintln!("unwarp: {e}");
            ExitCode::from(e.code())
        }
    }
}
