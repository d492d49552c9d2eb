use std::fmt;
use std::path::{Path, PathBuf};

use unwarp_core::config::RunConfig;
use unwarp_core::geom::RasterImage;
use unwarp_core::pipeline::{CommandPredictor, FilePredictor, GridPredictor, IdentityPredictor, OraclePredictor};
use unwarp_core::synth::{load_sample, read_manifest, SyntheticSample, MANIFEST_NAME};

use crate::GlobalArgs;

pub const WORKERS_ENV: &str = "UNWARP_WORKERS";

#[derive(Debug)]
pub enum CliError {
    Usage(String),
    Failure(String),
}

impl CliError {
    pub fn code(&self) -> u8 {
        match self {
            CliError::Usage(_) => 2,
            CliError::Failure(_) => 1,
        }
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CliError::Usage(m) | CliError::Failure(m) => f.write_str(m),
        }
    }
}

pub fn usage(e: impl fmt::Display) -> CliError {
    CliError::Usage(e.to_string())
}

pub fn failure(e: impl fmt::Display) -> CliError {
    CliError::Failure(e.to_string())
}

/// How a command finished when it did not hit a fatal error.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Outcome {
    Success,
    Partial,
}

impl Outcome {
    pub fn from_failures(n: usize) -> Self {
        if n == 0 {
            Outcome::Success
        } else {
            Outcome::Partial
        }
    }
}

/// Defaults, then the config file, then `--set` overrides, then dedicated flags.
pub fn resolve_config(g: &GlobalArgs) -> Result<RunConfig, CliError> {
    let mut cfg = match &g.config {
        Some(p) => RunConfig::load(p).map_err(usage)?,
        None => RunConfig::default(),
    };
    for kv in &g.overrides {
        let (k, v) = kv
            .split_once('=')
            .ok_or_else(|| usage(format!("--set expects KEY=VALUE, got {kv:?}")))?;
        cfg.set(k, v).map_err(usage)?;
    }
    if let Ok(v) = std::env::var(WORKERS_ENV) {
        let n: usize = v
            .trim()
            .parse()
            .map_err(|_| usage(format!("{WORKERS_ENV}={v:?} is not a worker count")))?;
        cfg.workers = Some(n);
    }
    if let Some(n) = g.workers {
        cfg.workers = Some(n);
    }
    if let Some(s) = g.seed {
        cfg.seed = s;
    }
    cfg.validate().map_err(usage)?;
    Ok(cfg)
}

pub fn init_pool(cfg: &RunConfig) -> Result<(), CliError> {
    let mut b = rayon::ThreadPoolBuilder::new();
    if let Some(n) = cfg.workers {
        b = b.num_threads(n);
    }
    // A second initialization in the same process (tests) keeps the first pool.
    let _ = b.build_global();
    Ok(())
}

/// One input image, optionally with its synthetic ground truth.
pub struct InputItem {
    pub id: String,
    pub image: Result<RasterImage, String>,
    pub truth: Option<Result<SyntheticSample, String>>,
}

pub fn is_suite(p: &Path) -> bool {
    p.join(MANIFEST_NAME).is_file()
}

/// Expands suite directories and PNG paths into ids, in argument order.
pub fn list_inputs(paths: &[PathBuf]) -> Result<Vec<(String, PathBuf, bool)>, CliError> {
    let mut out = Vec::new();
    for p in paths {
        if is_suite(p) {
            for (id, dir) in read_manifest(p).map_err(usage)? {
                out.push((id, dir, true));
            }
        } else if p.is_file() {
            let id = p
                .file_stem()
                .map(|s| s.to_string_lossy().into_owned())
                .unwrap_or_else(|| "image".into());
            out.push((id, p.clone(), false));
        } else {
            return Err(usage(format!("input {} is neither a suite directory nor a file", p.display())));
        }
    }
    let mut seen = std::collections::HashSet::new();
    for (id, _, _) in &out {
        if !seen.insert(id.clone()) {
            return Err(usage(format!("duplicate image id {id:?}")));
        }
    }
    Ok(out)
}

pub fn load_input(id: &str, path: &Path, suite: bool, want_truth: bool) -> InputItem {
    if suite {
        let sample = load_sample(path).map_err(|e| e.to_string());
        let image = sample.as_ref().map(|s| s.distorted.clone()).map_err(Clone::clone);
        InputItem {
            id: id.into(),
            image,
            truth: want_truth.then_some(sample),
        }
    } else {
        InputItem {
            id: id.into(),
            image: RasterImage::load_png(path).map_err(|e| e.to_string()),
            truth: None,
        }
    }
}

/// Predictor choice shared by rectify and stop-analysis.
#[derive(clap::Args, Debug, Clone)]
#[group(required = true, multiple = false)]
pub struct PredictorArgs {
    /// Ground-truth oracles (suite inputs only).
    #[arg(long)]
    pub oracle: bool,
    /// Predict no deformation at every stage.
    #[arg(long)]
    pub identity: bool,
    /// Replay stored grids from DIR/<id>/{L,C,F/<n>}.dmap.
    #[arg(long, value_name = "DIR")]
    pub grids: Option<PathBuf>,
    /// External predictor: CMD <png> <stage tag>, DMAP1 on stdout.
    #[arg(long, value_name = "CMD")]
    pub predictor_cmd: Option<String>,
}

pub enum PredictorSource {
    Oracle,
    Shared(Box<dyn GridPredictor>),
}

impl PredictorArgs {
    pub fn source(&self) -> PredictorSource {
        if self.oracle {
            PredictorSource::Oracle
        } else if let Some(d) = &self.grids {
            PredictorSource::Shared(Box::new(FilePredictor::new(d)))
        } else if let Some(c) = &self.predictor_cmd {
            let mut parts = c.split_whitespace().map(String::from);
            let program = parts.next().unwrap_or_default();
            PredictorSource::Shared(Box::new(CommandPredictor {
                program,
                args: parts.collect(),
            }))
        } else {
            PredictorSource::Shared(Box::new(IdentityPredictor))
        }
    }
}

pub fn oracle_for(item: &InputItem) -> Result<OraclePredictor, String> {
    match &item.truth {
        Some(Ok(s)) => OraclePredictor::new(s).map_err(|e| e.to_string()),
        Some(Err(e)) => Err(e.clone()),
        None => Err(format!("{}: --oracle needs a suite input with ground truth", item.id)),
    }
}

pub fn ensure_dir(p: &Path) -> Result<(), CliError> {
    std::fs::create_dir_all(p).map_err(|e| failure(format!("{}: {e}", p.display())))
}

pub fn write_text(p: &Path, text: &str) -> Result<(), CliError> {
    std::fs::write(p, text).map_err(|e| failure(format!("{}: {e}", p.display())))
}

/// Failure list written next to batch outputs.
pub fn failures_tsv(failures: &[(String, String)]) -> String {
    let mut s = String::from("id\terror\n");
    for (id, e) in failures {
        s.push_str(id);
        s.push('\t');
        s.push_str(&e.replace(['\t', '\n'], " "));
        s.push('\n');
    }
    s
}

pub fn output_dir(flag: &Option<PathBuf>, cfg: &RunConfig) -> Result<PathBuf, CliError> {
    flag.clone()
        .or_else(|| cfg.output_dir.clone())
        .ok_or_else(|| usage("an output directory is required (--out or output_dir=)"))
}
