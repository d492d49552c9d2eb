use std::path::{Path, PathBuf};

use rayon::prelude::*;
use unwarp_core::config::RunConfig;
use unwarp_core::geom::{ForegroundMask, RasterImage};
use unwarp_core::lines::LineDetector;
use unwarp_core::metrics::{
    aligned_distortion, axis_aligned_distortion_from_gt, conventional_ocr, estimate_flow, layout_aligned_ocr,
    local_distortion, mssim_weighted, read_flow, BlockLayout, BlockMatchParams, CommandOcr, DenseFlow, GlyphOcr,
    OcrEngine, RegionAligner,
};
use unwarp_core::synth::read_manifest;

use crate::common::{failure, failures_tsv, usage, write_text, CliError, Outcome};
use crate::report::Table;

pub const COLUMNS: [&str; 12] = [
    "MSSIM", "MSSIM-M", "LD", "LD-M", "AD", "AD-M", "AAD", "AAD-M", "ED", "CER", "AED", "ACER",
];

#[derive(clap::Args, Debug)]
pub struct EvaluateArgs {
    /// Rectified images, paired in order with --gt.
    #[arg(long, num_args = 1..)]
    pub rectified: Vec<PathBuf>,
    /// Ground-truth flat images.
    #[arg(long, num_args = 1..)]
    pub gt: Vec<PathBuf>,
    /// Foreground masks, one per pair.
    #[arg(long, num_args = 1..)]
    pub masks: Vec<PathBuf>,
    /// Block layouts, one per pair (needed for OCR metrics).
    #[arg(long, num_args = 1..)]
    pub layouts: Vec<PathBuf>,
    /// DFLO1 flow files (rectified to GT); estimated by block matching when absent.
    #[arg(long, num_args = 1..)]
    pub flows: Vec<PathBuf>,
    /// Suite directory: pairs `<results>/<id>/rectified.png` with the suite's
    /// flat page, gt_mask and layout for every manifest entry.
    #[arg(long, requires = "results")]
    pub suite: Option<PathBuf>,
    /// Output directory of `rectify` for --suite.
    #[arg(long, requires = "suite")]
    pub results: Option<PathBuf>,
    /// OCR engine: `glyph` (built-in synthetic font) or `none`.
    #[arg(long, default_value = "none")]
    pub ocr: String,
    /// External OCR: CMD <png>, text on stdout. Overrides --ocr.
    #[arg(long, value_name = "CMD")]
    pub ocr_cmd: Option<String>,
    /// Region alignment for layout-aligned OCR: `flow` or `identity`.
    #[arg(long, default_value = "flow")]
    pub aligner: String,
    /// Also write the table as TSV here.
    #[arg(long)]
    pub tsv: Option<PathBuf>,
}

/// One rectified/GT pair and its optional side inputs.
#[derive(Clone, Debug)]
pub struct Pair {
    pub id: String,
    pub rectified: PathBuf,
    pub gt: PathBuf,
    pub mask: Option<PathBuf>,
    pub layout: Option<PathBuf>,
    pub flow: Option<PathBuf>,
}

fn optional_list(name: &str, list: &[PathBuf], n: usize) -> Result<Vec<Option<PathBuf>>, CliError> {
    if list.is_empty() {
        return Ok(vec![None; n]);
    }
    if list.len() != n {
        return Err(usage(format!("--{name} lists {} files for {n} pairs", list.len())));
    }
    Ok(list.iter().cloned().map(Some).collect())
}

fn pairs(a: &EvaluateArgs) -> Result<Vec<Pair>, CliError> {
    if let (Some(suite), Some(results)) = (&a.suite, &a.results) {
        if !a.rectified.is_empty() || !a.gt.is_empty() {
            return Err(usage("use either --suite/--results or --rectified/--gt"));
        }
        let list = read_manifest(suite).map_err(usage)?;
        return Ok(list
            .into_iter()
            .map(|(id, dir)| Pair {
                rectified: results.join(&id).join("rectified.png"),
                gt: dir.join("flat.png"),
                mask: Some(dir.join("gt_mask.png")),
                layout: Some(dir.join("layout.txt")),
                flow: None,
                id,
            })
            .collect());
    }
    if a.rectified.is_empty() || a.rectified.len() != a.gt.len() {
        return Err(usage(format!(
            "--rectified lists {} images but --gt lists {}",
            a.rectified.len(),
            a.gt.len()
        )));
    }
    let n = a.rectified.len();
    let masks = optional_list("masks", &a.masks, n)?;
    let layouts = optional_list("layouts", &a.layouts, n)?;
    let flows = optional_list("flows", &a.flows, n)?;
    Ok((0..n)
        .map(|k| Pair {
            id: a.rectified[k]
                .file_stem()
                .map(|s| s.to_string_lossy().into_owned())
                .unwrap_or_else(|| format!("pair_{k}")),
            rectified: a.rectified[k].clone(),
            gt: a.gt[k].clone(),
            mask: masks[k].clone(),
            layout: layouts[k].clone(),
            flow: flows[k].clone(),
        })
        .collect())
}

/// Evaluation settings shared by every pair.
pub struct Evaluator<'a> {
    pub cfg: &'a RunConfig,
    pub ocr: Option<Box<dyn OcrEngine>>,
    pub identity_aligner: bool,
    pub detector: &'a dyn LineDetector,
}

fn value(r: unwarp_core::Result<f64>) -> f64 {
    r.unwrap_or(f64::NAN)
}

fn load_mask(p: &Path) -> Result<ForegroundMask, String> {
    ForegroundMask::load_png(p).map_err(|e| e.to_string())
}

impl Evaluator<'_> {
    /// Metric row for one pair; metrics that cannot be computed are NaN.
    pub fn row(&self, rect: &RasterImage, gt: &RasterImage, mask: Option<&ForegroundMask>, layout: Option<&BlockLayout>, flow: Option<DenseFlow>) -> Result<Vec<f64>, String> {
        let (rect, gt) = (rect.to_gray(), gt.to_gray());
        if (rect.height(), rect.width()) != (gt.height(), gt.width()) {
            return Err(format!(
                "rectified {}x{} vs gt {}x{}",
                rect.height(),
                rect.width(),
                gt.height(),
                gt.width()
            ));
        }
        let t = &self.cfg.metrics;
        let w = &self.cfg.mssim_weights;
        let nan = f64::NAN;
        let params = BlockMatchParams::default();
        let need_flow = t.ld || t.ad || t.aad || t.ocr;
        let flow = match flow {
            Some(f) => Some(f),
            None if need_flow => Some(estimate_flow(&rect, &gt, &params).map_err(|e| e.to_string())?),
            None => None,
        };
        // Masked metrics see only the masked images, so their flow is estimated on those too.
        let masked_flow = match (mask, &flow) {
            (Some(m), Some(_)) if need_flow => Some(
                estimate_flow(
                    &rect.masked(m).map_err(|e| e.to_string())?,
                    &gt.masked(m).map_err(|e| e.to_string())?,
                    &params,
                )
                .map_err(|e| e.to_string())?,
            ),
            _ => None,
        };
        let fm = masked_flow.as_ref().or(flow.as_ref());
        let mut row = vec![nan; COLUMNS.len()];
        if t.mssim {
            row[0] = value(mssim_weighted(&rect, &gt, None, w));
            if let Some(m) = mask {
                row[1] = value(mssim_weighted(&rect, &gt, Some(m), w));
            }
        }
        if let Some(f) = &flow {
            if t.ld {
                row[2] = value(local_distortion(f, None));
            }
            if t.ad {
                row[4] = value(aligned_distortion(f, &gt, None));
            }
            if t.aad {
                row[6] = value(axis_aligned_distortion_from_gt(&rect, f, &gt, None, self.detector));
            }
            if let (Some(m), Some(f)) = (mask, fm) {
                if t.ld {
                    row[3] = value(local_distortion(f, Some(m)));
                }
                if t.ad {
                    row[5] = value(aligned_distortion(f, &gt, Some(m)));
                }
                if t.aad {
                    row[7] = value(axis_aligned_distortion_from_gt(&rect, f, &gt, Some(m), self.detector));
                }
            }
        }
        if let (true, Some(ocr), Some(layout)) = (t.ocr, &self.ocr, layout) {
            let (ed, cer) = conventional_ocr(&rect, layout, ocr.as_ref()).map_err(|e| e.to_string())?;
            let aligner = match (&flow, self.identity_aligner) {
                (Some(f), false) => RegionAligner::Flow(f),
                _ => RegionAligner::Identity,
            };
            let s = layout_aligned_ocr(&rect, layout, aligner, ocr.as_ref()).map_err(|e| e.to_string())?;
            row[8] = ed as f64;
            row[9] = cer;
            row[10] = s.aed as f64;
            row[11] = s.acer;
        }
        Ok(row)
    }

    fn pair_row(&self, p: &Pair) -> Result<Vec<f64>, String> {
        let rect = RasterImage::load_png(&p.rectified).map_err(|e| e.to_string())?;
        let gt = RasterImage::load_png(&p.gt).map_err(|e| e.to_string())?;
        let mask = p.mask.as_deref().map(load_mask).transpose()?;
        let layout = match (&p.layout, &self.ocr) {
            (Some(l), Some(_)) => Some(BlockLayout::read(l).map_err(|e| e.to_string())?),
            _ => None,
        };
        let flow = p.flow.as_ref().map(read_flow).transpose().map_err(|e| e.to_string())?;
        self.row(&rect, &gt, mask.as_ref(), layout.as_ref(), flow)
    }
}

pub fn engine(a: &EvaluateArgs) -> Result<Option<Box<dyn OcrEngine>>, CliError> {
    if let Some(c) = &a.ocr_cmd {
        let mut parts = c.split_whitespace().map(String::from);
        return Ok(Some(Box::new(CommandOcr {
            program: parts.next().unwrap_or_default(),
            args: parts.collect(),
        })));
    }
    match a.ocr.as_str() {
        "none" => Ok(None),
        "glyph" => Ok(Some(Box::new(GlyphOcr::default()))),
        other => Err(usage(format!("unknown OCR engine {other:?} (expected glyph or none)"))),
    }
}

pub fn run(a: &EvaluateArgs, cfg: &RunConfig) -> Result<Outcome, CliError> {
    let pairs = pairs(a)?;
    let ocr = engine(a)?;
    let identity_aligner = match a.aligner.as_str() {
        "flow" => false,
        "identity" => true,
        other => return Err(usage(format!("unknown aligner {other:?} (expected flow or identity)"))),
    };
    if ocr.is_some() && cfg.metrics.ocr {
        for p in &pairs {
            match &p.layout {
                None => return Err(usage(format!("{}: OCR metrics need a layout file (--layouts)", p.id))),
                Some(l) if !l.is_file() => return Err(usage(format!("layout file {} not found", l.display()))),
                _ => {}
            }
        }
    }
    let det = unwarp_core::lines::LsdDetector::default();
    let ev = Evaluator {
        cfg,
        ocr,
        identity_aligner,
        detector: &det,
    };
    let rows: Vec<(String, Result<Vec<f64>, String>)> = pairs.par_iter().map(|p| (p.id.clone(), ev.pair_row(p))).collect();
    let mut table = Table::new(&COLUMNS);
    let mut failures = Vec::new();
    for (id, r) in rows {
        match r {
            Ok(v) => table.push(id, v),
            Err(e) => {
                eprintln!("unwarp: {id}: {e}");
                failures.push((id, e));
            }
        }
    }
    table.add_summary();
    print!("{}", table.to_text("id"));
    if let Some(p) = &a.tsv {
        write_text(p, &table.to_tsv("id"))?;
        if !failures.is_empty() {
            write_text(&p.with_extension("failures.tsv"), &failures_tsv(&failures))?;
        }
    }
    if pairs.len() == failures.len() {
        return Err(failure("no pair could be evaluated"));
    }
    Ok(Outcome::from_failures(failures.len()))
}
