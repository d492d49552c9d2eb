use std::path::PathBuf;

use unwarp_core::config::RunConfig;
use unwarp_core::synth::{make_suite, write_suite, Difficulty};

use crate::common::{failure, output_dir, usage, CliError, Outcome};

#[derive(clap::Args, Debug)]
pub struct GenerateArgs {
    /// Number of samples.
    #[arg(long)]
    pub n: usize,
    /// affine-only, +smooth, +fine, +crop or +background.
    #[arg(long, value_parser = |s: &str| s.parse::<Difficulty>().map_err(|e| e.to_string()))]
    pub difficulty: Difficulty,
    /// Suite directory.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

pub fn run(a: &GenerateArgs, cfg: &RunConfig) -> Result<Outcome, CliError> {
    if a.n == 0 {
        return Err(usage("--n must be at least 1"));
    }
    let out = output_dir(&a.out, cfg)?;
    let suite = make_suite(a.n, cfg.seed, a.difficulty).map_err(failure)?;
    write_suite(&out, &suite).map_err(failure)?;
    println!("generated {} samples", suite.len());
    Ok(Outcome::Success)
}
