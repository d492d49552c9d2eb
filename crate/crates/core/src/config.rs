//! Run configuration stored as `key=value` lines.
//!
//! Unknown keys are errors, missing keys keep their defaults, and blank lines
//! or lines starting with `#` are ignored. Floats are written in the shortest
//! form that parses back to the same value, so dump, load and dump again is
//! byte-identical.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use crate::affine_fit::MarginConfig;
use crate::error::{Error, Result};
use crate::metrics::{LossWeights, MSSIM_WEIGHTS};
use crate::pipeline::{IterationPolicy, PipelineConfig};

/// Which metric families an evaluation computes.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct MetricToggles {
    pub mssim: bool,
    pub ld: bool,
    pub ad: bool,
    pub aad: bool,
    pub ocr: bool,
}

impl Default for MetricToggles {
    fn default() -> Self {
        Self {
            mssim: true,
            ld: true,
            ad: true,
            aad: true,
            ocr: true,
        }
    }
}

const METRIC_NAMES: [&str; 5] = ["mssim", "ld", "ad", "aad", "ocr"];

impl MetricToggles {
    fn flags(&self) -> [bool; 5] {
        [self.mssim, self.ld, self.ad, self.aad, self.ocr]
    }

    fn parse(v: &str) -> Result<Self> {
        let mut t = MetricToggles {
            mssim: false,
            ld: false,
            ad: false,
            aad: false,
            ocr: false,
        };
        for name in v.split(',').map(str::trim).filter(|s| !s.is_empty()) {
            match name {
                "mssim" => t.mssim = true,
                "ld" => t.ld = true,
                "ad" => t.ad = true,
                "aad" => t.aad = true,
                "ocr" => t.ocr = true,
                other => return Err(Error::InvalidParameter(format!("unknown metric {other:?}"))),
            }
        }
        Ok(t)
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct RunConfig {
    pub pipeline: PipelineConfig,
    pub loss: LossWeights,
    pub mssim_weights: [f64; 5],
    pub metrics: MetricToggles,
    /// Worker threads; `None` uses every logical core.
    pub workers: Option<usize>,
    pub input_dir: Option<PathBuf>,
    pub output_dir: Option<PathBuf>,
    pub seed: u64,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            pipeline: PipelineConfig::default(),
            loss: LossWeights::default(),
            mssim_weights: MSSIM_WEIGHTS,
            metrics: MetricToggles::default(),
            workers: None,
            input_dir: None,
            output_dir: None,
            seed: 0,
        }
    }
}

fn num<T: std::str::FromStr>(key: &str, v: &str) -> Result<T> {
    v.parse()
        .map_err(|_| Error::InvalidParameter(format!("{key}: cannot parse {v:?}")))
}

fn path_or_none(v: &str) -> Option<PathBuf> {
    (!v.is_empty()).then(|| PathBuf::from(v))
}

impl RunConfig {
    pub fn to_kv(&self) -> String {
        let p = &self.pipeline;
        let mut s = String::from("# unwarp run configuration\n");
        let mut kv = |k: &str, v: String| {
            let _ = writeln!(s, "{k}={v}");
        };
        kv("work_h", p.work_h.to_string());
        kv("work_w", p.work_w.to_string());
        kv("grid_h", p.grid_h.to_string());
        kv("grid_w", p.grid_w.to_string());
        kv("margin", p.margin.value().to_string());
        kv("fit_kind", p.fit_kind.to_string());
        kv("max_iterations", p.stopping.max_iterations.to_string());
        kv("theta_thresh", p.stopping.theta_thresh.to_string());
        kv("tau", p.stopping.tau.to_string());
        kv("policy", p.policy.to_string());
        kv(
            "output_size",
            p.output_size.map_or("auto".into(), |(h, w)| format!("{h}x{w}")),
        );
        kv("fill", p.fill.to_string());
        kv("samples_per_line", p.samples_per_line.to_string());
        kv("loss_alpha", self.loss.alpha.to_string());
        kv("loss_beta", self.loss.beta.to_string());
        kv("loss_gamma", self.loss.gamma.to_string());
        kv("loss_lambda", self.loss.lambda.to_string());
        kv(
            "mssim_weights",
            self.mssim_weights.iter().map(f64::to_string).collect::<Vec<_>>().join(","),
        );
        kv(
            "metrics",
            METRIC_NAMES
                .iter()
                .zip(self.metrics.flags())
                .filter(|(_, on)| *on)
                .map(|(n, _)| *n)
                .collect::<Vec<_>>()
                .join(","),
        );
        kv("workers", self.workers.map_or("auto".into(), |n| n.to_string()));
        kv(
            "input_dir",
            self.input_dir.as_ref().map_or(String::new(), |d| d.display().to_string()),
        );
        kv(
            "output_dir",
            self.output_dir.as_ref().map_or(String::new(), |d| d.display().to_string()),
        );
        kv("seed", self.seed.to_string());
        s
    }

    /// Applies one `key=value` setting.
    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        let v = value.trim();
        let p = &mut self.pipeline;
        match key.trim() {
            "work_h" => p.work_h = num(key, v)?,
            "work_w" => p.work_w = num(key, v)?,
            "grid_h" => p.grid_h = num(key, v)?,
            "grid_w" => p.grid_w = num(key, v)?,
            "margin" => p.margin = MarginConfig::new(num(key, v)?)?,
            "fit_kind" => p.fit_kind = v.parse()?,
            "max_iterations" => p.stopping.max_iterations = num(key, v)?,
            "theta_thresh" => p.stopping.theta_thresh = num(key, v)?,
            "tau" => p.stopping.tau = num(key, v)?,
            "policy" => p.policy = v.parse::<IterationPolicy>()?,
            "output_size" => {
                p.output_size = if v == "auto" {
                    None
                } else {
                    let (h, w) = v
                        .split_once('x')
                        .ok_or_else(|| Error::InvalidParameter(format!("output_size: expected HxW or auto, got {v:?}")))?;
                    Some((num(key, h)?, num(key, w)?))
                }
            }
            "fill" => p.fill = num(key, v)?,
            "samples_per_line" => p.samples_per_line = num(key, v)?,
            "loss_alpha" => self.loss.alpha = num(key, v)?,
            "loss_beta" => self.loss.beta = num(key, v)?,
            "loss_gamma" => self.loss.gamma = num(key, v)?,
            "loss_lambda" => self.loss.lambda = num(key, v)?,
            "mssim_weights" => {
                let w: Vec<f64> = v.split(',').map(|x| num(key, x.trim())).collect::<Result<_>>()?;
                self.mssim_weights = w
                    .try_into()
                    .map_err(|_| Error::InvalidParameter("mssim_weights: expected 5 values".into()))?;
            }
            "metrics" => self.metrics = MetricToggles::parse(v)?,
            "workers" => self.workers = if v == "auto" { None } else { Some(num(key, v)?) },
            "input_dir" => self.input_dir = path_or_none(v),
            "output_dir" => self.output_dir = path_or_none(v),
            "seed" => self.seed = num(key, v)?,
            other => return Err(Error::InvalidParameter(format!("unknown config key {other:?}"))),
        }
        Ok(())
    }

    /// Defaults overridden by every setting in `text`.
    pub fn from_kv(text: &str) -> Result<Self> {
        let mut cfg = RunConfig::default();
        for (n, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let (k, v) = line
                .split_once('=')
                .ok_or_else(|| Error::BadFormat(format!("config line {}: expected key=value", n + 1)))?;
            cfg.set(k, v)?;
        }
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        self.pipeline.validate()?;
        self.loss.validate()?;
        if self.workers == Some(0) {
            return Err(Error::InvalidParameter("workers must be at least 1".into()));
        }
        if self.mssim_weights.iter().any(|w| !(w.is_finite() && *w >= 0.0)) {
            return Err(Error::InvalidParameter("mssim_weights must be finite and >= 0".into()));
        }
        Ok(())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_kv(&text)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        std::fs::write(path, self.to_kv()).map_err(|e| Error::io(path, e))
    }
}
