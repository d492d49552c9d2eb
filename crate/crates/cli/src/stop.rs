use std::path::PathBuf;

use rayon::prelude::*;
use unwarp_core::config::RunConfig;
use unwarp_core::geom::BackwardMap;
use unwarp_core::lines::{filter_aligned, line_entropy, LineDetector};
use unwarp_core::metrics::{aligned_distortion, mssim_weighted};
use unwarp_core::pipeline::{render_final, IterationPolicy, PipelineConfig};
use unwarp_core::synth::{true_flow, SyntheticSample};

use crate::common::{
    failure, failures_tsv, is_suite, list_inputs, load_input, usage, write_text, CliError, Outcome, PredictorArgs,
};
use crate::rectify::{detector, rectify_item};
use crate::report::{mean_std, Table};

#[derive(clap::Args, Debug)]
pub struct StopArgs {
    /// Suite directory (ground truth is needed for scoring).
    #[arg(long)]
    pub suite: PathBuf,
    #[command(flatten)]
    pub predictor: PredictorArgs,
    #[arg(long, value_name = "CMD")]
    pub detector_cmd: Option<String>,
    /// Also write the table as TSV here.
    #[arg(long)]
    pub tsv: Option<PathBuf>,
}

pub const COLUMNS: [&str; 4] = ["AD", "Hline", "MSSIM", "n"];

/// `[AD, line entropy, MSSIM]` of the rendering through `map`.
fn score(
    s: &SyntheticSample,
    map: &BackwardMap,
    cfg: &PipelineConfig,
    det: &dyn LineDetector,
    weights: &[f64],
) -> Result<[f64; 3], String> {
    let (final_map, out) = render_final(&s.distorted, map, cfg).map_err(|e| e.to_string())?;
    let flow = true_flow(s, &final_map).map_err(|e| e.to_string())?;
    let ad = aligned_distortion(&flow, &s.flat, None).map_err(|e| e.to_string())?;
    let lines = det.detect(&out).map_err(|e| e.to_string())?;
    let h = line_entropy(&filter_aligned(&lines, cfg.stopping.theta_thresh)).unwrap_or(f64::NAN);
    let ms = if (out.height(), out.width()) == (s.flat.height(), s.flat.width()) {
        mssim_weighted(&out, &s.flat, None, weights).unwrap_or(f64::NAN)
    } else {
        f64::NAN
    };
    Ok([ad, h, ms])
}

/// Per-policy rows for one sample: fixed 0..=M, then adaptive when M > 0.
type SampleRows = Vec<[f64; 4]>;

pub fn run(a: &StopArgs, cfg: &RunConfig) -> Result<Outcome, CliError> {
    if !is_suite(&a.suite) {
        return Err(usage(format!("{} is not a suite directory", a.suite.display())));
    }
    let inputs = list_inputs(std::slice::from_ref(&a.suite))?;
    let source = a.predictor.source();
    let det = detector(&a.detector_cmd);
    let m = cfg.pipeline.stopping.max_iterations;
    let base = cfg.pipeline;
    let results: Vec<(String, Result<SampleRows, String>)> = inputs
        .par_iter()
        .map(|(id, path, suite)| {
            let item = load_input(id, path, *suite, true);
            let run = || -> Result<SampleRows, String> {
                let truth = match &item.truth {
                    Some(Ok(t)) => t,
                    Some(Err(e)) => return Err(e.clone()),
                    None => return Err("missing ground truth".into()),
                };
                // One fixed(M) run contains the maps of every shorter fixed policy.
                let fixed_cfg = PipelineConfig { policy: IterationPolicy::Fixed(m), ..base };
                let fixed = rectify_item(&item, &source, det.as_ref(), &fixed_cfg)?;
                let mut rows = Vec::with_capacity(m + 2);
                for (k, map) in fixed.maps.iter().enumerate() {
                    let [ad, h, ms] = score(truth, map, &base, det.as_ref(), &cfg.mssim_weights)?;
                    rows.push([ad, h, ms, k as f64]);
                }
                if m > 0 {
                    let adaptive_cfg = PipelineConfig { policy: IterationPolicy::Adaptive, ..base };
                    let t = rectify_item(&item, &source, det.as_ref(), &adaptive_cfg)?;
                    let [ad, h, ms] = score(truth, t.maps.last().expect("D_1"), &base, det.as_ref(), &cfg.mssim_weights)?;
                    rows.push([ad, h, ms, t.stop.n_opt as f64]);
                }
                Ok(rows)
            };
            (id.clone(), run())
        })
        .collect();
    let mut ok = Vec::new();
    let mut failures = Vec::new();
    for (id, r) in results {
        match r {
            Ok(rows) => ok.push(rows),
            Err(e) => {
                eprintln!("unwarp: {id}: {e}");
                failures.push((id, e));
            }
        }
    }
    if ok.is_empty() {
        return Err(failure("no sample could be analysed"));
    }
    let mut table = Table::new(&COLUMNS);
    let labels: Vec<String> = (0..=m)
        .map(|k| format!("IS:{k}"))
        .chain((m > 0).then(|| "IS:A".to_string()))
        .collect();
    for (r, label) in labels.iter().enumerate() {
        let vals = (0..COLUMNS.len()).map(|c| mean_std(ok.iter().map(|rows| rows[r][c])).0).collect();
        table.push(label.clone(), vals);
    }
    print!("{}", table.to_text("policy"));
    if let Some(p) = &a.tsv {
        write_text(p, &table.to_tsv("policy"))?;
        write_text(&p.with_extension("failures.tsv"), &failures_tsv(&failures))?;
    }
    Ok(Outcome::from_failures(failures.len()))
}
