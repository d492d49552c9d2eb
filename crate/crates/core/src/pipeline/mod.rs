//! The three-stage rectification cascade.
//!
//! Stage 1 localizes the document and fits a global transform `A` that maps it
//! into a canonical view `O_0`. Stage 2 predicts a coarse backward grid on
//! `O_0`; pulling it back through `A⁻¹` gives the first map `D_1`, addressed in
//! input coordinates. Stage 3 repeatedly predicts a residual grid on the
//! current render and chains it onto the map. Every intermediate and the final
//! output are rendered from the original input through a single map.

mod oracle;
mod predictor;

pub use oracle::{invert_map_at, oracle_predictors, OraclePredictor};
pub use predictor::{
    file_predictor, CommandPredictor, FilePredictor, FnPredictor, GridPredictor, IdentityPredictor, PredictRequest,
    Stage, GRID_EXTENSION,
};

use std::fmt;
use std::str::FromStr;
use std::time::{Duration, Instant};

use crate::affine_fit::{stage1_transform, FitKind, MarginConfig};
use crate::error::{Error, Result};
use crate::geom::{BackwardMap, GlobalTransform, Grid2D, RasterImage};
use crate::lines::{adaptive_stop, LineDetector, StoppingConfig, StoppingTrace, DEFAULT_SAMPLES_PER_LINE};
use crate::warp::{compose_maps, compose_transform_into_map, resize, warp_by_map, warp_transform, SampleOptions};

/// How many refinement iterations to run.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum IterationPolicy {
    Adaptive,
    Fixed(usize),
}

impl fmt::Display for IterationPolicy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            IterationPolicy::Adaptive => f.write_str("adaptive"),
            IterationPolicy::Fixed(k) => write!(f, "{k}"),
        }
    }
}

impl FromStr for IterationPolicy {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "adaptive" | "A" => Ok(IterationPolicy::Adaptive),
            _ => s
                .strip_prefix("fixed:")
                .unwrap_or(s)
                .parse()
                .map(IterationPolicy::Fixed)
                .map_err(|_| Error::InvalidParameter(format!("iteration policy {s:?} is neither 'adaptive' nor a count"))),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct PipelineConfig {
    pub work_h: usize,
    pub work_w: usize,
    pub grid_h: usize,
    pub grid_w: usize,
    pub margin: MarginConfig,
    pub fit_kind: FitKind,
    pub stopping: StoppingConfig,
    pub policy: IterationPolicy,
    /// Final output size; `None` keeps the working aspect at the input's pixel count.
    pub output_size: Option<(usize, usize)>,
    /// Intensity for samples that fall outside the input.
    pub fill: f32,
    pub samples_per_line: usize,
    /// Keep every intermediate render `O_n` in the trace.
    pub retain_outputs: bool,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        Self {
            work_h: 712,
            work_w: 488,
            grid_h: 45,
            grid_w: 31,
            margin: MarginConfig::default(),
            fit_kind: FitKind::Affine,
            stopping: StoppingConfig::default(),
            policy: IterationPolicy::Adaptive,
            output_size: None,
            fill: 1.0,
            samples_per_line: DEFAULT_SAMPLES_PER_LINE,
            retain_outputs: false,
        }
    }
}

impl PipelineConfig {
    pub fn validate(&self) -> Result<()> {
        self.stopping.validate()?;
        if self.work_h < 2 || self.work_w < 2 {
            return Err(Error::DimensionTooSmall {
                what: "working size",
                min: 2,
                got: self.work_h.min(self.work_w),
            });
        }
        if self.grid_h < 2 || self.grid_w < 2 {
            return Err(Error::DimensionTooSmall {
                what: "grid size",
                min: 2,
                got: self.grid_h.min(self.grid_w),
            });
        }
        if let IterationPolicy::Fixed(k) = self.policy {
            if k > self.stopping.max_iterations {
                return Err(Error::InvalidParameter(format!(
                    "fixed({k}) exceeds the iteration cap {}",
                    self.stopping.max_iterations
                )));
            }
        }
        if let Some((h, w)) = self.output_size {
            if h == 0 || w == 0 {
                return Err(Error::ZeroSizeOutput);
            }
        }
        if !(0.0..=1.0).contains(&self.fill) {
            return Err(Error::InvalidParameter(format!("fill {} outside [0, 1]", self.fill)));
        }
        Ok(())
    }

    /// Output size for an input of `h x w` pixels.
    pub fn output_dims(&self, h: usize, w: usize) -> (usize, usize) {
        if let Some(dims) = self.output_size {
            return dims;
        }
        let ratio = self.work_h as f64 / self.work_w as f64;
        let n = (h * w) as f64;
        let out_w = (n / ratio).sqrt().round().max(2.0);
        let out_h = (out_w * ratio).round().max(2.0);
        (out_h as usize, out_w as usize)
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct StageTimings {
    pub localize: Duration,
    pub coarse: Duration,
    pub refine: Duration,
    pub render: Duration,
}

/// Everything a rectification produced.
#[derive(Clone, Debug)]
pub struct RectificationTrace {
    pub transform: GlobalTransform,
    /// `G_0` (localization), `G_1` (coarse), then the accepted refinement grids.
    pub grids: Vec<Grid2D>,
    /// `D_1 ..= D_{n+1}` at working resolution, all addressing the input.
    pub maps: Vec<BackwardMap>,
    pub stop: StoppingTrace,
    /// `O_0 ..= O_{n+1}` at working resolution when retained.
    pub outputs: Vec<RasterImage>,
    /// The last map resampled to the output size.
    pub final_map: BackwardMap,
    pub output: RasterImage,
    /// Number of refinement predictor calls, including any rejected one.
    pub fine_calls: usize,
    pub timings: StageTimings,
}

impl RectificationTrace {
    pub fn n_opt(&self) -> usize {
        self.stop.n_opt
    }

    /// Everything except timings, for determinism checks.
    pub fn same_result(&self, other: &RectificationTrace) -> bool {
        self.transform == other.transform
            && self.grids == other.grids
            && self.maps == other.maps
            && self.stop == other.stop
            && self.outputs == other.outputs
            && self.final_map == other.final_map
            && self.output == other.output
            && self.fine_calls == other.fine_calls
    }
}

/// The three stage predictors.
#[derive(Clone, Copy)]
pub struct Predictors<'a> {
    pub localize: &'a dyn GridPredictor,
    pub coarse: &'a dyn GridPredictor,
    pub fine: &'a dyn GridPredictor,
}

impl<'a> Predictors<'a> {
    pub fn new(localize: &'a dyn GridPredictor, coarse: &'a dyn GridPredictor, fine: &'a dyn GridPredictor) -> Self {
        Self { localize, coarse, fine }
    }

    /// One predictor for all stages.
    pub fn uniform(p: &'a dyn GridPredictor) -> Self {
        Self::new(p, p, p)
    }
}

fn check_grid(g: &Grid2D, cfg: &PipelineConfig, stage: Stage) -> Result<()> {
    if (g.rows(), g.cols()) != (cfg.grid_h, cfg.grid_w) {
        return Err(Error::PredictorFailure(format!(
            "{stage} grid is {}x{}, expected {}x{}",
            g.rows(),
            g.cols(),
            cfg.grid_h,
            cfg.grid_w
        )));
    }
    Ok(())
}

/// Lazily extends the map chain `D_1, D_2, ...` by running the refinement predictor.
struct Refiner<'a> {
    input: &'a RasterImage,
    image_id: &'a str,
    fine: &'a dyn GridPredictor,
    cfg: &'a PipelineConfig,
    opts: SampleOptions,
    maps: Vec<BackwardMap>,
    grids: Vec<Grid2D>,
    renders: Vec<RasterImage>,
}

impl Refiner<'_> {
    /// Makes sure `G_{n+1}` and `D_{n+1}` exist and returns `G_{n+1}`.
    fn grid(&mut self, n: usize) -> Result<Grid2D> {
        while self.maps.len() <= n {
            let m = self.maps.len();
            let current = &self.maps[m - 1];
            let render = &self.renders[m - 1];
            let g = self.fine.predict(&PredictRequest {
                image: render,
                image_id: self.image_id,
                stage: Stage::Fine(m),
                grid_rows: self.cfg.grid_h,
                grid_cols: self.cfg.grid_w,
                transform: None,
                current_map: Some(current),
            })?;
            check_grid(&g, self.cfg, Stage::Fine(m))?;
            let next = compose_maps(current, &g.densify(self.cfg.work_h, self.cfg.work_w)?)?;
            let o = warp_by_map(self.input, &next, &self.opts)?.image;
            self.maps.push(next);
            self.grids.push(g);
            self.renders.push(o);
        }
        Ok(self.grids[n - 1].clone())
    }
}

/// Runs the cascade on `input` and renders the result once from it.
pub fn rectify(
    input: &RasterImage,
    image_id: &str,
    predictors: Predictors<'_>,
    detector: &dyn LineDetector,
    cfg: &PipelineConfig,
) -> Result<RectificationTrace> {
    cfg.validate()?;
    let opts = SampleOptions::with_fill(cfg.fill);
    let (wh, ww) = (cfg.work_h, cfg.work_w);
    let canonical = Grid2D::canonical(cfg.grid_h, cfg.grid_w)?;
    let request = |image, stage, transform, current_map| PredictRequest {
        image,
        image_id,
        stage,
        grid_rows: cfg.grid_h,
        grid_cols: cfg.grid_w,
        transform,
        current_map,
    };

    let t = Instant::now();
    let small = resize(input, wh, ww)?;
    let g0 = predictors.localize.predict(&request(&small, Stage::Localize, None, None))?;
    check_grid(&g0, cfg, Stage::Localize)?;
    let a = stage1_transform(&g0, &canonical, cfg.fit_kind, cfg.margin)?;
    let a_inv = a.inverse()?;
    let o0 = warp_transform(input, &a, wh, ww, &opts)?.image;
    let localize = t.elapsed();

    let t = Instant::now();
    let g1 = predictors.coarse.predict(&request(&o0, Stage::Coarse, Some(&a), None))?;
    check_grid(&g1, cfg, Stage::Coarse)?;
    let d1 = compose_transform_into_map(&g1.densify(wh, ww)?, &a_inv)?;
    let o1 = warp_by_map(input, &d1, &opts)?.image;
    let coarse = t.elapsed();

    let t = Instant::now();
    let mut refiner = Refiner {
        input,
        image_id,
        fine: predictors.fine,
        cfg,
        opts,
        maps: vec![d1],
        grids: Vec::new(),
        renders: vec![o1.clone()],
    };
    let stop = match cfg.policy {
        IterationPolicy::Fixed(k) => StoppingTrace {
            n_opt: k,
            scores: Vec::new(),
            fallback_used: false,
        },
        IterationPolicy::Adaptive => adaptive_stop(
            &o1,
            detector,
            &canonical,
            |n| refiner.grid(n),
            &cfg.stopping,
            cfg.samples_per_line,
        )?,
    };
    if stop.n_opt > 0 {
        refiner.grid(stop.n_opt)?;
    }
    let fine_calls = refiner.grids.len();
    let keep = stop.n_opt + 1;
    refiner.maps.truncate(keep);
    refiner.grids.truncate(stop.n_opt);
    refiner.renders.truncate(keep);
    let refine = t.elapsed();

    let t = Instant::now();
    let last = refiner.maps.last().expect("D_1 is always present");
    let (final_map, output) = render_final(input, last, cfg)?;
    let render = t.elapsed();

    let mut grids = vec![g0, g1];
    grids.extend(refiner.grids);
    let outputs = if cfg.retain_outputs {
        let mut v = vec![o0];
        v.extend(refiner.renders);
        v
    } else {
        Vec::new()
    };
    Ok(RectificationTrace {
        transform: a,
        grids,
        maps: refiner.maps,
        stop,
        outputs,
        final_map,
        output,
        fine_calls,
        timings: StageTimings {
            localize,
            coarse,
            refine,
            render,
        },
    })
}

/// Resamples a working-resolution map to the output size and renders `input`
/// through it once.
pub fn render_final(input: &RasterImage, map: &BackwardMap, cfg: &PipelineConfig) -> Result<(BackwardMap, RasterImage)> {
    let (oh, ow) = cfg.output_dims(input.height(), input.width());
    let final_map = if (oh, ow) == (map.height(), map.width()) {
        map.clone()
    } else {
        compose_maps(map, &BackwardMap::identity(oh, ow)?)?
    };
    let output = warp_by_map(input, &final_map, &SampleOptions::with_fill(cfg.fill))?.image;
    Ok((final_map, output))
}

/// One image of a batch.
pub struct BatchJob<'a> {
    pub image_id: String,
    pub input: &'a RasterImage,
}

/// Rectifies many images concurrently; results keep the job order.
pub fn rectify_batch(
    jobs: &[BatchJob<'_>],
    predictors: Predictors<'_>,
    detector: &dyn LineDetector,
    cfg: &PipelineConfig,
) -> Vec<Result<RectificationTrace>> {
    let work = |k: usize| rectify(jobs[k].input, &jobs[k].image_id, predictors, detector, cfg);
    crate::par::map_indices(jobs.len(), work)
}
