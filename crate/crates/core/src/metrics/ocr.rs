use std::io::Write;
use std::process::Command;

use crate::error::{Error, Result};
use crate::geom::RasterImage;
use crate::metrics::geometric::transport_point;
use crate::metrics::text::{char_error_rate, edit_distance, normalize_text};
use crate::metrics::{estimate_flow, BlockLayout, BlockMatchParams, DenseFlow};
use crate::synth::font::{templates, GLYPH_H, GLYPH_W};

/// Fraction of the mapped block size added on each side of a crop.
pub const REGION_PADDING: f64 = 0.02;

/// Text recognizer for an image region. Must be deterministic.
pub trait OcrEngine: Send + Sync {
    fn recognize(&self, region: &RasterImage) -> Result<String>;
}

/// Wraps a closure as an engine.
pub struct FnOcr<F>(pub F);

impl<F> OcrEngine for FnOcr<F>
where
    F: Fn(&RasterImage) -> Result<String> + Send + Sync,
{
    fn recognize(&self, region: &RasterImage) -> Result<String> {
        (self.0)(region)
    }
}

/// External engine: runs `program args... <png>` and reads UTF-8 text from stdout.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct CommandOcr {
    pub program: String,
    pub args: Vec<String>,
}

impl CommandOcr {
    pub fn new(program: impl Into<String>) -> Self {
        Self {
            program: program.into(),
            args: Vec::new(),
        }
    }
}

impl OcrEngine for CommandOcr {
    fn recognize(&self, region: &RasterImage) -> Result<String> {
        let mut file = tempfile::Builder::new()
            .suffix(".png")
            .tempfile()
            .map_err(|e| Error::io(std::env::temp_dir(), e))?;
        region.save_png(file.path())?;
        file.flush().map_err(|e| Error::io(file.path(), e))?;
        let out = Command::new(&self.program)
            .args(&self.args)
            .arg(file.path())
            .output()
            .map_err(|e| Error::Subprocess(format!("{}: {e}", self.program)))?;
        if !out.status.success() {
            return Err(Error::Subprocess(format!(
                "{} exited with {}: {}",
                self.program,
                out.status,
                String::from_utf8_lossy(&out.stderr).trim()
            )));
        }
        String::from_utf8(out.stdout).map_err(|e| Error::Subprocess(format!("{}: non-UTF-8 output: {e}", self.program)))
    }
}

/// Template matcher for the built-in synthetic block font.
///
/// Ink rows are grouped into text bands; each band is cut into fixed-pitch
/// cells whose phase is chosen by searching small offsets, and every cell is
/// matched against the glyph templates by Hamming distance. Rows are joined by
/// spaces, and a vertical gap wider than six cells emits a newline instead.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct GlyphOcr {
    pub scale: usize,
    pub ink_threshold: f32,
}

impl Default for GlyphOcr {
    fn default() -> Self {
        Self {
            scale: 3,
            ink_threshold: 0.35,
        }
    }
}

type Bits = [[bool; GLYPH_W]; GLYPH_H];

impl GlyphOcr {
    fn bands(&self, ink: &[bool], h: usize, w: usize) -> Vec<(usize, usize)> {
        let rows: Vec<bool> = (0..h).map(|i| ink[i * w..(i + 1) * w].iter().any(|&b| b)).collect();
        let mut out = Vec::new();
        let mut i = 0;
        while i < h {
            if !rows[i] {
                i += 1;
                continue;
            }
            let start = i;
            while i < h && rows[i] {
                i += 1;
            }
            if i - start >= GLYPH_H * self.scale / 2 {
                out.push((start, i));
            }
        }
        out
    }

    fn cell_bits(&self, ink: &[bool], h: usize, w: usize, top: isize, left: isize) -> Bits {
        let s = self.scale as isize;
        let mut bits = [[false; GLYPH_W]; GLYPH_H];
        for (r, row) in bits.iter_mut().enumerate() {
            for (c, b) in row.iter_mut().enumerate() {
                let (t, l) = (top + r as isize * s, left + c as isize * s);
                let mut n = 0;
                for i in t..t + s {
                    for j in l..l + s {
                        if i >= 0 && j >= 0 && (i as usize) < h && (j as usize) < w && ink[i as usize * w + j as usize] {
                            n += 1;
                        }
                    }
                }
                *b = 2 * n > s * s;
            }
        }
        bits
    }

    fn read_band(&self, ink: &[bool], h: usize, w: usize, band: (usize, usize), tpl: &[(char, Bits)]) -> String {
        let s = self.scale as isize;
        let pitch = ((GLYPH_W + 1) * self.scale) as isize;
        let Some(first) = (0..w).find(|&j| (band.0..band.1).any(|i| ink[i * w + j])) else {
            return String::new();
        };
        let last = (0..w).rev().find(|&j| (band.0..band.1).any(|i| ink[i * w + j])).unwrap_or(first);
        let mut best: Option<(usize, String)> = None;
        for dy in -s..=0 {
            for dx in -(4 * s)..=0 {
                let top = band.0 as isize + dy;
                let left = first as isize + dx;
                let cells = ((last as isize - left) / pitch + 1).max(1);
                let mut cost = 0;
                let mut text = String::new();
                for k in 0..cells {
                    let bits = self.cell_bits(ink, h, w, top, left + k * pitch);
                    if bits.iter().flatten().all(|b| !b) {
                        text.push(' ');
                        continue;
                    }
                    let (c, d) = tpl
                        .iter()
                        .map(|(c, t)| (*c, hamming(&bits, t)))
                        .min_by_key(|&(_, d)| d)
                        .expect("non-empty alphabet");
                    cost += d;
                    text.push(c);
                }
                if best.as_ref().is_none_or(|(b, _)| cost < *b) {
                    best = Some((cost, text));
                }
            }
        }
        best.map(|(_, t)| t).unwrap_or_default()
    }
}

fn hamming(a: &Bits, b: &Bits) -> usize {
    a.iter().flatten().zip(b.iter().flatten()).filter(|(x, y)| x != y).count()
}

impl OcrEngine for GlyphOcr {
    fn recognize(&self, region: &RasterImage) -> Result<String> {
        if self.scale == 0 {
            return Err(Error::InvalidParameter("glyph scale must be positive".into()));
        }
        let g = region.to_gray();
        let (h, w) = (g.height(), g.width());
        let ink: Vec<bool> = g.data().iter().map(|&v| v < self.ink_threshold).collect();
        let tpl = templates();
        // Rows of one block are a few cells apart; larger gaps start a new block.
        let block_gap = 6 * self.scale;
        let mut out = String::new();
        let mut prev_end: Option<usize> = None;
        for band in self.bands(&ink, h, w) {
            let text = self.read_band(&ink, h, w, band, &tpl);
            let text = text.trim();
            if text.is_empty() {
                continue;
            }
            if let Some(end) = prev_end {
                out.push(if band.0 - end > block_gap { '\n' } else { ' ' });
            }
            out.push_str(text);
            prev_end = Some(band.1);
        }
        Ok(out)
    }
}

/// How GT block polygons are carried into the rectified image.
#[derive(Clone, Copy, Debug)]
pub enum RegionAligner<'a> {
    /// GT and rectified pixel coordinates coincide.
    Identity,
    /// Flow mapping rectified pixels to GT positions.
    Flow(&'a DenseFlow),
    /// Built-in block matching against this GT image.
    BlockMatching(&'a RasterImage),
}

/// Layout-aligned OCR result.
#[derive(Clone, Debug, PartialEq)]
pub struct LayoutOcrScore {
    pub aed: usize,
    pub acer: f64,
    pub hypothesis: String,
    pub reference: String,
    /// Indices of blocks that mapped entirely outside the image.
    pub flagged: Vec<usize>,
}

fn reference_text(layout: &BlockLayout) -> String {
    layout
        .blocks
        .iter()
        .map(|b| normalize_text(&b.text))
        .collect::<Vec<_>>()
        .join("\n")
}

/// Recognizes every GT block separately, in GT reading order, and scores the
/// newline-joined result against the joined GT texts.
pub fn layout_aligned_ocr(
    rectified: &RasterImage,
    layout: &BlockLayout,
    aligner: RegionAligner<'_>,
    ocr: &dyn OcrEngine,
) -> Result<LayoutOcrScore> {
    if layout.is_empty() {
        return Err(Error::EmptyLayout);
    }
    let (h, w) = (rectified.height(), rectified.width());
    let estimated;
    let flow = match aligner {
        RegionAligner::Identity => None,
        RegionAligner::Flow(f) => Some(f),
        RegionAligner::BlockMatching(gt) => {
            estimated = estimate_flow(rectified, gt, &BlockMatchParams::default())?;
            Some(&estimated)
        }
    };
    if let Some(f) = flow {
        if (f.height(), f.width()) != (h, w) {
            return Err(Error::DimensionMismatch(format!(
                "flow {}x{} vs rectified {h}x{w}",
                f.height(),
                f.width()
            )));
        }
    }
    let mut texts = Vec::with_capacity(layout.blocks.len());
    let mut flagged = Vec::new();
    for (k, block) in layout.blocks.iter().enumerate() {
        let pts: Vec<(f64, f64)> = block
            .polygon
            .iter()
            .map(|&p| flow.map_or(p, |f| transport_point(f, p)))
            .collect();
        let x0 = pts.iter().map(|p| p.0).fold(f64::INFINITY, f64::min);
        let x1 = pts.iter().map(|p| p.0).fold(f64::NEG_INFINITY, f64::max);
        let y0 = pts.iter().map(|p| p.1).fold(f64::INFINITY, f64::min);
        let y1 = pts.iter().map(|p| p.1).fold(f64::NEG_INFINITY, f64::max);
        let (px, py) = ((x1 - x0) * REGION_PADDING, (y1 - y0) * REGION_PADDING);
        let left = (x0 - px).floor().max(0.0);
        let top = (y0 - py).floor().max(0.0);
        let right = (x1 + px).ceil().min(w as f64 - 1.0);
        let bottom = (y1 + py).ceil().min(h as f64 - 1.0);
        if !(left <= right && top <= bottom) || pts.is_empty() {
            flagged.push(k);
            texts.push(String::new());
            continue;
        }
        let crop = rectified.crop(
            top as usize,
            left as usize,
            (bottom - top) as usize + 1,
            (right - left) as usize + 1,
        )?;
        texts.push(normalize_text(&ocr.recognize(&crop)?));
    }
    let hypothesis = texts.join("\n");
    let reference = reference_text(layout);
    Ok(LayoutOcrScore {
        aed: edit_distance(&hypothesis, &reference),
        acer: char_error_rate(&hypothesis, &reference)?,
        hypothesis,
        reference,
        flagged,
    })
}

/// Full-page OCR scored against the joined GT texts: `(ED, CER)`. Each output
/// line is normalized separately so line breaks survive.
pub fn conventional_ocr(page: &RasterImage, layout: &BlockLayout, ocr: &dyn OcrEngine) -> Result<(usize, f64)> {
    if layout.is_empty() {
        return Err(Error::EmptyLayout);
    }
    let raw = ocr.recognize(page)?;
    let hyp = raw
        .lines()
        .map(normalize_text)
        .filter(|l| !l.is_empty())
        .collect::<Vec<_>>()
        .join("\n");
    let reference = reference_text(layout);
    Ok((edit_distance(&hyp, &reference), char_error_rate(&hyp, &reference)?))
}
