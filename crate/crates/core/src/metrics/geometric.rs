//! Flow-based geometric metrics: local distortion, gradient-weighted aligned
//! distortion and axis-aligned distortion, each with an optional foreground
//! mask that removes background pixels from every input.

use crate::error::{Error, Result};
use crate::geom::{ForegroundMask, RasterImage};
use crate::lines::tps::refit;
use crate::lines::{filter_aligned, line_entropy, Frame, LineDetector, LineSegment, LineSegmentSet};
use crate::metrics::DenseFlow;

/// GT segments deviating more than this many degrees are not transported.
pub const AAD_ALIGN_THRESH: f64 = 5.0;
/// Points sampled along each transported segment.
pub const AAD_SAMPLES: usize = 8;

fn check_mask(mask: Option<&ForegroundMask>, h: usize, w: usize) -> Result<()> {
    mask.map_or(Ok(()), |m| m.check_dims(h, w))
}

fn on(mask: Option<&ForegroundMask>, k: usize) -> bool {
    mask.is_none_or(|m| m.data()[k] != 0)
}

/// Mean magnitude of the flow after removing its mean (pixels).
pub fn local_distortion(flow: &DenseFlow, mask: Option<&ForegroundMask>) -> Result<f64> {
    check_mask(mask, flow.height(), flow.width())?;
    let (mut n, mut mx, mut my) = (0usize, 0.0, 0.0);
    for (k, v) in flow.vectors().iter().enumerate() {
        if on(mask, k) {
            n += 1;
            mx += v[0];
            my += v[1];
        }
    }
    if n == 0 {
        return Err(Error::EmptyMask);
    }
    let (mx, my) = (mx / n as f64, my / n as f64);
    let mut sum = 0.0;
    for (k, v) in flow.vectors().iter().enumerate() {
        if on(mask, k) {
            sum += (v[0] - mx).hypot(v[1] - my);
        }
    }
    Ok(sum / n as f64)
}

/// Sobel gradient magnitude with replicated borders.
fn sobel_magnitude(g: &[f64], h: usize, w: usize) -> Vec<f64> {
    let at = |i: isize, j: isize| {
        let i = i.clamp(0, h as isize - 1) as usize;
        let j = j.clamp(0, w as isize - 1) as usize;
        g[i * w + j]
    };
    let mut out = vec![0.0; h * w];
    crate::par::fill_rows(&mut out, w, |i, row| {
        let i = i as isize;
        for (j, o) in row.iter_mut().enumerate() {
            let j = j as isize;
            let gx = (at(i - 1, j + 1) + 2.0 * at(i, j + 1) + at(i + 1, j + 1))
                - (at(i - 1, j - 1) + 2.0 * at(i, j - 1) + at(i + 1, j - 1));
            let gy = (at(i + 1, j - 1) + 2.0 * at(i + 1, j) + at(i + 1, j + 1))
                - (at(i - 1, j - 1) + 2.0 * at(i - 1, j) + at(i - 1, j + 1));
            *o = gx.hypot(gy) / 8.0;
        }
    });
    out
}

/// Gradient-weighted residual of the flow after removing the best weighted
/// similarity transform, normalized by the similarity scale, total weight and
/// image diagonal.
///
/// With a mask both the GT image and the weights are multiplied by it, so
/// background pixels of either input cannot influence the result.
pub fn aligned_distortion(flow: &DenseFlow, gt: &RasterImage, mask: Option<&ForegroundMask>) -> Result<f64> {
    let (h, w) = (flow.height(), flow.width());
    if (gt.height(), gt.width()) != (h, w) {
        return Err(Error::DimensionMismatch(format!(
            "flow {h}x{w} vs gt {}x{}",
            gt.height(),
            gt.width()
        )));
    }
    check_mask(mask, h, w)?;
    let mut g = gt.gray_f64();
    if let Some(m) = mask {
        for (v, &b) in g.iter_mut().zip(m.data()) {
            if b == 0 {
                *v = 0.0;
            }
        }
    }
    let mut wt = sobel_magnitude(&g, h, w);
    if let Some(m) = mask {
        for (v, &b) in wt.iter_mut().zip(m.data()) {
            if b == 0 {
                *v = 0.0;
            }
        }
    }
    let active: Vec<usize> = (0..h * w).filter(|&k| wt[k] > 0.0).collect();
    let total: f64 = active.iter().map(|&k| wt[k]).sum();
    if !(total > 0.0) {
        return Err(Error::ZeroTotalWeight);
    }
    let src = |k: usize| ((k % w) as f64, (k / w) as f64);
    let dst = |k: usize| {
        let (x, y) = src(k);
        let v = flow.vectors()[k];
        (x + v[0], y + v[1])
    };
    let (mut sx, mut sy, mut dx, mut dy) = (0.0, 0.0, 0.0, 0.0);
    for &k in &active {
        let ((a, b), (c, d)) = (src(k), dst(k));
        sx += wt[k] * a;
        sy += wt[k] * b;
        dx += wt[k] * c;
        dy += wt[k] * d;
    }
    let (sx, sy, dx, dy) = (sx / total, sy / total, dx / total, dy / total);
    // Complex least squares: d - d̄ ≈ z (s - s̄).
    let (mut re, mut im, mut ss) = (0.0, 0.0, 0.0);
    for &k in &active {
        let ((a, b), (c, d)) = (src(k), dst(k));
        let (a, b, c, d) = (a - sx, b - sy, c - dx, d - dy);
        re += wt[k] * (a * c + b * d);
        im += wt[k] * (a * d - b * c);
        ss += wt[k] * (a * a + b * b);
    }
    let (zr, zi) = if ss > 0.0 { (re / ss, im / ss) } else { (1.0, 0.0) };
    let mut err = 0.0;
    for &k in &active {
        let ((a, b), (c, d)) = (src(k), dst(k));
        let (a, b) = (a - sx, b - sy);
        let tx = zr * a - zi * b + dx;
        let ty = zi * a + zr * b + dy;
        err += wt[k] * (c - tx).hypot(d - ty);
    }
    // Measure residuals in the source scale so any similarity is absorbed.
    let scale = zr.hypot(zi);
    let scale = if scale > 1e-12 { scale } else { 1.0 };
    Ok(err / (scale * total * (h as f64).hypot(w as f64)))
}

/// Rectified pixel position whose flow lands on GT position `g`, found by the
/// fixed-point iteration `p = g - flow(p)`.
pub fn transport_point(flow: &DenseFlow, g: (f64, f64)) -> (f64, f64) {
    let mut p = g;
    for _ in 0..64 {
        let v = flow.sample(p.0, p.1);
        let next = (g.0 - v[0], g.1 - v[1]);
        let step = (next.0 - p.0).hypot(next.1 - p.1);
        p = next;
        if step < 1e-10 {
            break;
        }
    }
    p
}

/// Line entropy (degrees) of GT axis-aligned segments carried into the
/// rectified frame through the flow correspondence.
///
/// With a mask the flow is zeroed outside it first and segments whose
/// transported midpoint falls outside it are dropped.
pub fn axis_aligned_distortion(
    rectified: &RasterImage,
    flow: &DenseFlow,
    gt_lines: &LineSegmentSet,
    mask: Option<&ForegroundMask>,
) -> Result<f64> {
    let (h, w) = (flow.height(), flow.width());
    if (rectified.height(), rectified.width()) != (h, w) {
        return Err(Error::DimensionMismatch(format!(
            "flow {h}x{w} vs rectified {}x{}",
            rectified.height(),
            rectified.width()
        )));
    }
    check_mask(mask, h, w)?;
    let masked;
    let flow = match mask {
        Some(m) => {
            masked = flow.masked(m)?;
            &masked
        }
        None => flow,
    };
    let gt_frame = gt_lines.frame();
    let frame = Frame::new(h, w)?;
    let source = filter_aligned(gt_lines, AAD_ALIGN_THRESH);
    let mut out = Vec::with_capacity(source.len());
    for s in source.segments() {
        let pts: Vec<(f64, f64)> = (0..AAD_SAMPLES)
            .map(|i| {
                let t = i as f64 / (AAD_SAMPLES - 1) as f64;
                transport_point(flow, gt_frame.to_pixels(s.p0 + (s.p1 - s.p0) * t))
            })
            .collect();
        let Some((a, b)) = refit(&pts) else { continue };
        let Ok(seg) = LineSegment::new(frame.to_norm(a.0, a.1), frame.to_norm(b.0, b.1), frame) else {
            continue;
        };
        if let Some(m) = mask {
            let (mx, my) = ((a.0 + b.0) * 0.5, (a.1 + b.1) * 0.5);
            let (i, j) = (my.round(), mx.round());
            if i < 0.0 || j < 0.0 || i >= h as f64 || j >= w as f64 || !m.get(i as usize, j as usize) {
                continue;
            }
        }
        out.push(seg);
    }
    line_entropy(&LineSegmentSet::new(frame, out))
}

/// [`axis_aligned_distortion`] with GT lines detected on the (masked) GT image.
pub fn axis_aligned_distortion_from_gt(
    rectified: &RasterImage,
    flow: &DenseFlow,
    gt: &RasterImage,
    mask: Option<&ForegroundMask>,
    detector: &dyn LineDetector,
) -> Result<f64> {
    let lines = match mask {
        Some(m) => detector.detect(&gt.masked(m)?)?,
        None => detector.detect(gt)?,
    };
    axis_aligned_distortion(rectified, flow, &lines, mask)
}
