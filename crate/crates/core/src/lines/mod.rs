//! Line segments, axis-aligned line entropy, line warping and the
//! entropy-based stopping rule for iterative refinement.
//!
//! Segments keep their endpoints in normalized coordinates but lengths and
//! angles are measured in the pixel metric of the frame they were detected in,
//! so a rotation in the image is reported as that same angle for any aspect.

mod detect;
mod stopping;
pub(crate) mod tps;

pub use detect::{CommandDetector, DetectorParams, LineDetector, LsdDetector, MIN_DETECT_SIDE};
pub use stopping::{adaptive_stop, replay_scores, Decision, StoppingConfig, StoppingController, StoppingTrace};
pub use tps::{warp_lines, warp_lines_with, ThinPlateSpline, DEFAULT_SAMPLES_PER_LINE, TPS_REGULARIZATION};

use crate::error::{Error, Result};
use crate::geom::NormCoord;

/// Pixel dimensions of the image a line set lives in.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Frame {
    pub height: usize,
    pub width: usize,
}

impl Frame {
    pub fn new(height: usize, width: usize) -> Result<Self> {
        if height < 2 || width < 2 {
            return Err(Error::DimensionTooSmall {
                what: "line frame side",
                min: 2,
                got: height.min(width),
            });
        }
        Ok(Self { height, width })
    }

    /// Pixels per normalized unit along x and y.
    #[inline]
    pub fn scale(&self) -> (f64, f64) {
        ((self.width - 1) as f64 * 0.5, (self.height - 1) as f64 * 0.5)
    }

    #[inline]
    pub fn to_pixels(&self, p: NormCoord) -> (f64, f64) {
        let (sx, sy) = self.scale();
        ((p.x + 1.0) * sx, (p.y + 1.0) * sy)
    }

    #[inline]
    pub fn to_norm(&self, x: f64, y: f64) -> NormCoord {
        let (sx, sy) = self.scale();
        NormCoord::new(x / sx - 1.0, y / sy - 1.0)
    }

    pub fn diagonal(&self) -> f64 {
        (self.height as f64).hypot(self.width as f64)
    }
}

/// Acute angle in degrees between direction `(dx, dy)` and the nearest axis.
pub fn axis_deviation(dx: f64, dy: f64) -> f64 {
    let a = dy.abs().atan2(dx.abs()).to_degrees();
    a.min(90.0 - a).clamp(0.0, 45.0)
}

/// A straight segment with its pixel length and axis deviation.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct LineSegment {
    pub p0: NormCoord,
    pub p1: NormCoord,
    /// Length in pixels of the owning frame.
    pub length: f64,
    /// Degrees in `[0, 45]`.
    pub deviation: f64,
}

impl LineSegment {
    /// Builds a segment in `frame`; fails on zero length or non-finite endpoints.
    pub fn new(p0: NormCoord, p1: NormCoord, frame: Frame) -> Result<Self> {
        if !(p0.is_finite() && p1.is_finite()) {
            return Err(Error::NonFinitePayload(0));
        }
        let (sx, sy) = frame.scale();
        let (dx, dy) = ((p1.x - p0.x) * sx, (p1.y - p0.y) * sy);
        let length = dx.hypot(dy);
        if !(length > 0.0) {
            return Err(Error::InvalidParameter("zero-length segment".into()));
        }
        Ok(Self {
            p0,
            p1,
            length,
            deviation: axis_deviation(dx, dy),
        })
    }

    pub fn midpoint(&self) -> NormCoord {
        (self.p0 + self.p1) * 0.5
    }
}

/// Segments detected in, or warped into, one image frame.
#[derive(Clone, Debug, PartialEq)]
pub struct LineSegmentSet {
    frame: Frame,
    segments: Vec<LineSegment>,
}

impl LineSegmentSet {
    pub fn new(frame: Frame, segments: Vec<LineSegment>) -> Self {
        Self { frame, segments }
    }

    pub fn empty(frame: Frame) -> Self {
        Self::new(frame, Vec::new())
    }

    /// Builds segments from endpoint pairs, skipping zero-length ones.
    pub fn from_endpoints(frame: Frame, pairs: impl IntoIterator<Item = (NormCoord, NormCoord)>) -> Self {
        let segments = pairs
            .into_iter()
            .filter_map(|(a, b)| LineSegment::new(a, b, frame).ok())
            .collect();
        Self { frame, segments }
    }

    pub fn frame(&self) -> Frame {
        self.frame
    }

    pub fn segments(&self) -> &[LineSegment] {
        &self.segments
    }

    pub fn len(&self) -> usize {
        self.segments.len()
    }

    pub fn is_empty(&self) -> bool {
        self.segments.is_empty()
    }

    pub fn retain(&mut self, f: impl FnMut(&LineSegment) -> bool) {
        self.segments.retain(f);
    }
}

/// Keeps segments whose deviation is at most `theta_thresh` degrees.
pub fn filter_aligned(lines: &LineSegmentSet, theta_thresh: f64) -> LineSegmentSet {
    LineSegmentSet {
        frame: lines.frame,
        segments: lines
            .segments
            .iter()
            .filter(|s| s.deviation <= theta_thresh)
            .copied()
            .collect(),
    }
}

/// Length-weighted mean axis deviation in degrees.
pub fn line_entropy(lines: &LineSegmentSet) -> Result<f64> {
    entropy_of(lines.segments.iter().map(|s| (s.length, s.deviation)))
}

/// `Σ L δ / Σ L` over `(length, deviation)` pairs.
pub fn entropy_of(items: impl IntoIterator<Item = (f64, f64)>) -> Result<f64> {
    let (num, den) = items
        .into_iter()
        .fold((0.0, 0.0), |(n, d), (l, dev)| (n + l * dev, d + l));
    if !(den > 0.0) {
        return Err(Error::EmptyLineSet);
    }
    Ok(num / den)
}
