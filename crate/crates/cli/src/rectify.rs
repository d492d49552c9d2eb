use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use unwarp_core::config::RunConfig;
use unwarp_core::geom::write_map;
use unwarp_core::lines::{CommandDetector, LineDetector, LsdDetector};
use unwarp_core::pipeline::{rectify, IterationPolicy, Predictors, RectificationTrace};

use crate::common::{
    ensure_dir, failures_tsv, list_inputs, load_input, oracle_for, output_dir, write_text, CliError, InputItem,
    Outcome, PredictorArgs, PredictorSource,
};

#[derive(clap::Args, Debug)]
pub struct RectifyArgs {
    /// PNG files or suite directories.
    #[arg(long, required = true, num_args = 1..)]
    pub input: Vec<PathBuf>,
    /// Output directory; each image gets `<id>/`.
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[command(flatten)]
    pub predictor: PredictorArgs,
    /// `adaptive` or a fixed iteration count.
    #[arg(long, value_parser = |s: &str| s.parse::<IterationPolicy>().map_err(|e| e.to_string()))]
    pub policy: Option<IterationPolicy>,
    /// External line detector: CMD <png>, one `x0 y0 x1 y1` per line on stdout.
    #[arg(long, value_name = "CMD")]
    pub detector_cmd: Option<String>,
}

pub fn detector(cmd: &Option<String>) -> Box<dyn LineDetector> {
    match cmd {
        Some(c) => {
            let mut parts = c.split_whitespace().map(String::from);
            Box::new(CommandDetector {
                program: parts.next().unwrap_or_default(),
                args: parts.collect(),
            })
        }
        None => Box::new(LsdDetector::default()),
    }
}

pub fn trace_text(id: &str, t: &RectificationTrace) -> String {
    let join = |v: &[f64]| v.iter().map(|x| x.to_string()).collect::<Vec<_>>().join(",");
    let mut s = String::new();
    let _ = writeln!(s, "image={id}");
    let _ = writeln!(s, "n_opt={}", t.stop.n_opt);
    let _ = writeln!(s, "scores={}", join(&t.stop.scores));
    let _ = writeln!(s, "fallback={}", t.stop.fallback_used);
    let _ = writeln!(s, "fine_calls={}", t.fine_calls);
    let _ = writeln!(s, "transform={}", join(&t.transform.coefficients()));
    let _ = writeln!(s, "output={}x{}", t.output.height(), t.output.width());
    let ms = |d: std::time::Duration| d.as_secs_f64() * 1e3;
    let _ = writeln!(s, "time_localize_ms={:.3}", ms(t.timings.localize));
    let _ = writeln!(s, "time_coarse_ms={:.3}", ms(t.timings.coarse));
    let _ = writeln!(s, "time_refine_ms={:.3}", ms(t.timings.refine));
    let _ = writeln!(s, "time_render_ms={:.3}", ms(t.timings.render));
    s
}

/// Rectifies one item with the selected predictors.
pub fn rectify_item(
    item: &InputItem,
    source: &PredictorSource,
    det: &dyn LineDetector,
    cfg: &unwarp_core::pipeline::PipelineConfig,
) -> Result<RectificationTrace, String> {
    let image = item.image.as_ref().map_err(Clone::clone)?;
    let result = match source {
        PredictorSource::Oracle => {
            let o = oracle_for(item)?;
            rectify(image, &item.id, Predictors::uniform(&o), det, cfg)
        }
        PredictorSource::Shared(p) => rectify(image, &item.id, Predictors::uniform(p.as_ref()), det, cfg),
    };
    result.map_err(|e| e.to_string())
}

fn save(out: &Path, id: &str, t: &RectificationTrace) -> Result<(), String> {
    let dir = out.join(id);
    std::fs::create_dir_all(&dir).map_err(|e| format!("{}: {e}", dir.display()))?;
    t.output.save_png(dir.join("rectified.png")).map_err(|e| e.to_string())?;
    write_map(dir.join("final.dmap"), &t.final_map).map_err(|e| e.to_string())?;
    std::fs::write(dir.join("trace.txt"), trace_text(id, t)).map_err(|e| e.to_string())
}

pub fn run(a: &RectifyArgs, cfg: &RunConfig) -> Result<Outcome, CliError> {
    let out = output_dir(&a.out, cfg)?;
    let inputs = list_inputs(&a.input)?;
    let mut pcfg = cfg.pipeline;
    if let Some(p) = a.policy {
        pcfg.policy = p;
    }
    pcfg.validate().map_err(crate::common::usage)?;
    ensure_dir(&out)?;
    let source = a.predictor.source();
    let det = detector(&a.detector_cmd);
    let oracle = matches!(source, PredictorSource::Oracle);
    let results: Vec<(String, Result<(), String>)> = inputs
        .par_iter()
        .map(|(id, path, suite)| {
            let item = load_input(id, path, *suite, oracle);
            let r = rectify_item(&item, &source, det.as_ref(), &pcfg).and_then(|t| save(&out, id, &t));
            (id.clone(), r)
        })
        .collect();
    let failures: Vec<(String, String)> = results
        .into_iter()
        .filter_map(|(id, r)| r.err().map(|e| (id, e)))
        .collect();
    for (id, e) in &failures {
        eprintln!("unwarp: {id}: {e}");
    }
    write_text(&out.join("failures.tsv"), &failures_tsv(&failures))?;
    println!("rectified {} of {} images", inputs.len() - failures.len(), inputs.len());
    Ok(Outcome::from_failures(failures.len()))
}
