use std::io::Write;
use std::process::Command;

use crate::error::{Error, Result};
use crate::geom::{NormCoord, RasterImage};
use crate::lines::{Frame, LineSegment, LineSegmentSet};

/// Smallest image side accepted by the built-in detector.
pub const MIN_DETECT_SIDE: usize = 16;

/// Source of line segments for an image.
pub trait LineDetector: Send + Sync {
    fn detect(&self, img: &RasterImage) -> Result<LineSegmentSet>;
}

/// Tuning of the region-growing detector.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct DetectorParams {
    /// Maximum level-line orientation difference inside a region, degrees.
    pub angle_tolerance_deg: f64,
    /// Regions with fewer pixels are discarded.
    pub min_support: usize,
    /// Minimum segment length as a fraction of the image diagonal.
    pub min_length_fraction: f64,
    /// Sobel magnitude (intensity units) below which pixels are ignored.
    pub gradient_threshold: f64,
    /// Minimum ratio of region pixels to rectangle area; sparser regions are
    /// shrunk around their seed.
    pub min_density: f64,
}

impl Default for DetectorParams {
    fn default() -> Self {
        Self {
            angle_tolerance_deg: 22.5,
            min_support: 20,
            min_length_fraction: 0.02,
            gradient_threshold: 0.04,
            min_density: 0.7,
        }
    }
}

/// Gradient-orientation region-growing detector in the style of LSD.
///
/// Sobel gradients give a level-line orientation per pixel. Pixels are visited
/// by decreasing gradient magnitude; each unused seed grows an 8-connected
/// region of pixels whose orientation stays within the tolerance of the running
/// region orientation. A region is summarized by its gradient-weighted
/// principal axis, shrunk around the seed while too sparse, and kept when it
/// has enough support and length.
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct LsdDetector {
    pub params: DetectorParams,
}

impl LsdDetector {
    pub fn new(params: DetectorParams) -> Self {
        Self { params }
    }
}

struct Rect {
    center: (f64, f64),
    dir: (f64, f64),
    lmin: f64,
    lmax: f64,
    width: f64,
}

fn angle_diff(a: f64, b: f64) -> f64 {
    let d = (a - b).rem_euclid(std::f64::consts::TAU);
    d.min(std::f64::consts::TAU - d)
}

/// Sobel magnitude and level-line orientation (radians, full turn) per pixel.
fn gradient_field(gray: &[f64], h: usize, w: usize) -> Vec<(f64, f64)> {
    let mut out = vec![(0.0, 0.0); h * w];
    crate::par::fill_rows(&mut out, w, |i, row| {
        if i == 0 || i + 1 == h {
            return;
        }
        let at = |r: usize, c: usize| gray[r * w + c];
        for j in 1..w - 1 {
            let gx = (at(i - 1, j + 1) + 2.0 * at(i, j + 1) + at(i + 1, j + 1)
                - at(i - 1, j - 1)
                - 2.0 * at(i, j - 1)
                - at(i + 1, j - 1))
                / 8.0;
            let gy = (at(i + 1, j - 1) + 2.0 * at(i + 1, j) + at(i + 1, j + 1)
                - at(i - 1, j - 1)
                - 2.0 * at(i - 1, j)
                - at(i - 1, j + 1))
                / 8.0;
            row[j] = (gx.hypot(gy), gx.atan2(-gy));
        }
    });
    out
}

fn fit_rect(region: &[usize], w: usize, mag: impl Fn(usize) -> f64) -> Rect {
    let (mut sw, mut cx, mut cy) = (0.0, 0.0, 0.0);
    for &p in region {
        let m = mag(p);
        sw += m;
        cx += m * (p % w) as f64;
        cy += m * (p / w) as f64;
    }
    cx /= sw;
    cy /= sw;
    let (mut sxx, mut syy, mut sxy) = (0.0, 0.0, 0.0);
    for &p in region {
        let m = mag(p);
        let dx = (p % w) as f64 - cx;
        let dy = (p / w) as f64 - cy;
        sxx += m * dx * dx;
        syy += m * dy * dy;
        sxy += m * dx * dy;
    }
    let theta = 0.5 * (2.0 * sxy).atan2(sxx - syy);
    let dir = (theta.cos(), theta.sin());
    let (mut lmin, mut lmax, mut wmin, mut wmax) = (f64::INFINITY, f64::NEG_INFINITY, f64::INFINITY, f64::NEG_INFINITY);
    for &p in region {
        let dx = (p % w) as f64 - cx;
        let dy = (p / w) as f64 - cy;
        let l = dx * dir.0 + dy * dir.1;
        let n = -dx * dir.1 + dy * dir.0;
        lmin = lmin.min(l);
        lmax = lmax.max(l);
        wmin = wmin.min(n);
        wmax = wmax.max(n);
    }
    Rect {
        center: (cx, cy),
        dir,
        lmin,
        lmax,
        width: wmax - wmin,
    }
}

impl LineDetector for LsdDetector {
    fn detect(&self, img: &RasterImage) -> Result<LineSegmentSet> {
        let (h, w) = (img.height(), img.width());
        if h < MIN_DETECT_SIDE || w < MIN_DETECT_SIDE {
            return Err(Error::ImageTooSmall {
                height: h,
                width: w,
                min: MIN_DETECT_SIDE,
            });
        }
        let p = &self.params;
        let frame = Frame::new(h, w)?;
        let field = gradient_field(&img.gray_f64(), h, w);
        let tol = p.angle_tolerance_deg.to_radians();
        let min_len = p.min_length_fraction * frame.diagonal();

        let mut order: Vec<usize> = (0..h * w).filter(|&k| field[k].0 > p.gradient_threshold).collect();
        // Stable sort keeps raster order among equal magnitudes.
        order.sort_by(|&a, &b| field[b].0.total_cmp(&field[a].0));

        let mut used = vec![false; h * w];
        let mut segments = Vec::new();
        let mut region: Vec<usize> = Vec::new();
        for &seed in &order {
            if used[seed] {
                continue;
            }
            used[seed] = true;
            region.clear();
            region.push(seed);
            let (mut sc, mut ss) = (field[seed].1.cos(), field[seed].1.sin());
            let mut region_angle = field[seed].1;
            let mut k = 0;
            while k < region.len() {
                let q = region[k];
                k += 1;
                let (qi, qj) = ((q / w) as isize, (q % w) as isize);
                for di in -1isize..=1 {
                    for dj in -1isize..=1 {
                        let (ni, nj) = (qi + di, qj + dj);
                        if (di == 0 && dj == 0) || ni < 0 || nj < 0 || ni >= h as isize || nj >= w as isize {
                            continue;
                        }
                        let n = ni as usize * w + nj as usize;
                        if used[n] || field[n].0 <= p.gradient_threshold || angle_diff(field[n].1, region_angle) > tol {
                            continue;
                        }
                        used[n] = true;
                        region.push(n);
                        sc += field[n].1.cos();
                        ss += field[n].1.sin();
                        region_angle = ss.atan2(sc);
                    }
                }
            }
            if region.len() < p.min_support {
                continue;
            }
            let (si, sj) = ((seed / w) as f64, (seed % w) as f64);
            let rect = loop {
                let rect = fit_rect(&region, w, |q| field[q].0);
                let area = (rect.lmax - rect.lmin + 1.0) * (rect.width + 1.0);
                if region.len() as f64 / area >= p.min_density {
                    break Some(rect);
                }
                let dist = |q: usize| ((q / w) as f64 - si).hypot((q % w) as f64 - sj);
                let radius = region.iter().map(|&q| dist(q)).fold(0.0, f64::max) * 0.75;
                region.retain(|&q| {
                    let keep = dist(q) <= radius;
                    if !keep {
                        used[q] = false;
                    }
                    keep
                });
                if region.len() < p.min_support {
                    break None;
                }
            };
            let Some(rect) = rect else { continue };
            if rect.lmax - rect.lmin < min_len {
                continue;
            }
            let end = |l: f64| {
                frame.to_norm(rect.center.0 + rect.dir.0 * l, rect.center.1 + rect.dir.1 * l)
            };
            if let Ok(s) = LineSegment::new(end(rect.lmin), end(rect.lmax), frame) {
                segments.push(s);
            }
        }
        Ok(LineSegmentSet::new(frame, segments))
    }
}

/// External detector: runs `program args... <png>` and reads one
/// `x0 y0 x1 y1` line (normalized coordinates) per segment from stdout.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct CommandDetector {
    pub program: String,
    pub args: Vec<String>,
}

impl CommandDetector {
    pub fn new(program: impl Into<String>) -> Self {
        Self {
            program: program.into(),
            args: Vec::new(),
        }
    }
}

/// Parses detector output: whitespace-separated quadruples, one per line.
pub(crate) fn parse_segments(text: &str, frame: Frame) -> Result<LineSegmentSet> {
    let mut pairs = Vec::new();
    for (n, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() {
            continue;
        }
        let v: Vec<f64> = line
            .split_whitespace()
            .map(str::parse)
            .collect::<std::result::Result<_, _>>()
            .map_err(|e| Error::BadFormat(format!("segment line {}: {e}", n + 1)))?;
        if v.len() != 4 || v.iter().any(|x| !x.is_finite()) {
            return Err(Error::BadFormat(format!("segment line {}: expected 4 finite numbers", n + 1)));
        }
        pairs.push((NormCoord::new(v[0], v[1]), NormCoord::new(v[2], v[3])));
    }
    Ok(LineSegmentSet::from_endpoints(frame, pairs))
}

impl LineDetector for CommandDetector {
    fn detect(&self, img: &RasterImage) -> Result<LineSegmentSet> {
        let frame = Frame::new(img.height(), img.width())?;
        let mut file = tempfile::Builder::new()
            .suffix(".png")
            .tempfile()
            .map_err(|e| Error::io(std::env::temp_dir(), e))?;
        img.save_png(file.path())?;
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
        parse_segments(&String::from_utf8_lossy(&out.stdout), frame)
    }
}
