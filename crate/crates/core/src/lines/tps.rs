use faer::linalg::solvers::Solve;
use faer::Mat;

use crate::error::{Error, Result};
use crate::geom::{Grid2D, NormCoord};
use crate::lines::{LineSegment, LineSegmentSet};

/// Tikhonov term added to the kernel diagonal.
pub const TPS_REGULARIZATION: f64 = 1e-8;
pub const DEFAULT_SAMPLES_PER_LINE: usize = 8;

#[inline]
fn kernel(r2: f64) -> f64 {
    // r² log r written in terms of r².
    if r2 <= 0.0 {
        0.0
    } else {
        0.5 * r2 * r2.ln()
    }
}

/// Two-output thin-plate spline `R² → R²` with an affine term.
#[derive(Clone, Debug)]
pub struct ThinPlateSpline {
    centers: Vec<NormCoord>,
    weights: Vec<[f64; 2]>,
    /// Rows `[c, a_x, a_y]` for the x and y outputs.
    affine: [[f64; 3]; 2],
}

impl ThinPlateSpline {
    /// Interpolates `values[k]` at `centers[k]`.
    pub fn fit(centers: &[NormCoord], values: &[NormCoord], regularization: f64) -> Result<Self> {
        let n = centers.len();
        if n != values.len() {
            return Err(Error::DimensionMismatch(format!("{n} centers vs {} values", values.len())));
        }
        if n < 3 {
            return Err(Error::DegenerateCenters(format!("need at least 3 centers, got {n}")));
        }
        let mut sorted: Vec<(f64, f64)> = centers.iter().map(|p| (p.x, p.y)).collect();
        sorted.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.total_cmp(&b.1)));
        if let Some(w) = sorted.windows(2).find(|w| (w[0].0 - w[1].0).abs() < 1e-12 && (w[0].1 - w[1].1).abs() < 1e-12) {
            return Err(Error::DegenerateCenters(format!("coincident centers at ({}, {})", w[0].0, w[0].1)));
        }
        let size = n + 3;
        let mut a = Mat::<f64>::zeros(size, size);
        for i in 0..n {
            for j in 0..i {
                let d = centers[i] - centers[j];
                let k = kernel(d.x * d.x + d.y * d.y);
                a[(i, j)] = k;
                a[(j, i)] = k;
            }
            a[(i, i)] = regularization;
            let row = [1.0, centers[i].x, centers[i].y];
            for (c, v) in row.into_iter().enumerate() {
                a[(i, n + c)] = v;
                a[(n + c, i)] = v;
            }
        }
        let mut b = Mat::<f64>::zeros(size, 2);
        for (i, v) in values.iter().enumerate() {
            b[(i, 0)] = v.x;
            b[(i, 1)] = v.y;
        }
        // Dense saddle-point system; a singular one shows up as non-finite output.
        let sol = a.partial_piv_lu().solve(&b);
        if (0..size).any(|i| !(sol[(i, 0)].is_finite() && sol[(i, 1)].is_finite())) {
            return Err(Error::DegenerateCenters("non-finite spline solution".into()));
        }
        let weights = (0..n).map(|i| [sol[(i, 0)], sol[(i, 1)]]).collect();
        let affine = [
            [sol[(n, 0)], sol[(n + 1, 0)], sol[(n + 2, 0)]],
            [sol[(n, 1)], sol[(n + 1, 1)], sol[(n + 2, 1)]],
        ];
        Ok(Self {
            centers: centers.to_vec(),
            weights,
            affine,
        })
    }

    pub fn apply(&self, p: NormCoord) -> NormCoord {
        let [ax, ay] = self.affine;
        let mut x = ax[0] + ax[1] * p.x + ax[2] * p.y;
        let mut y = ay[0] + ay[1] * p.x + ay[2] * p.y;
        for (c, w) in self.centers.iter().zip(&self.weights) {
            let d = p - *c;
            let k = kernel(d.x * d.x + d.y * d.y);
            x += w[0] * k;
            y += w[1] * k;
        }
        NormCoord::new(x, y)
    }
}

/// Advances lines from the frame `g_next` maps from into the frame it maps to.
///
/// The spline sends each `g_next` point onto the matching `u` point, which is
/// the forward counterpart of the backward field. Each segment is sampled at
/// `samples_per_line` points, warped, and refit by total least squares in the
/// pixel metric; segments that collapse are dropped.
pub fn warp_lines(lines: &LineSegmentSet, g_next: &Grid2D, u: &Grid2D, samples_per_line: usize) -> Result<LineSegmentSet> {
    if !g_next.same_shape(u) {
        return Err(Error::DimensionMismatch(format!(
            "field {}x{} vs canonical {}x{}",
            g_next.rows(),
            g_next.cols(),
            u.rows(),
            u.cols()
        )));
    }
    let tps = ThinPlateSpline::fit(g_next.points(), u.points(), TPS_REGULARIZATION)?;
    warp_lines_with(lines, &tps, samples_per_line)
}

/// [`warp_lines`] with a prebuilt spline.
pub fn warp_lines_with(lines: &LineSegmentSet, tps: &ThinPlateSpline, samples_per_line: usize) -> Result<LineSegmentSet> {
    if samples_per_line < 2 {
        return Err(Error::InvalidParameter(format!(
            "samples per line must be at least 2, got {samples_per_line}"
        )));
    }
    let frame = lines.frame();
    let segments = crate::par::map_indices(lines.len(), |k| {
        let s = &lines.segments()[k];
        let pts: Vec<(f64, f64)> = (0..samples_per_line)
            .map(|i| {
                let t = i as f64 / (samples_per_line - 1) as f64;
                frame.to_pixels(tps.apply(s.p0 + (s.p1 - s.p0) * t))
            })
            .collect();
        refit(&pts).and_then(|(a, b)| LineSegment::new(frame.to_norm(a.0, a.1), frame.to_norm(b.0, b.1), frame).ok())
    });
    Ok(LineSegmentSet::new(frame, segments.into_iter().flatten().collect()))
}

/// Total-least-squares line through `pts`, returned as the projections of the
/// first and last point.
pub(crate) fn refit(pts: &[(f64, f64)]) -> Option<((f64, f64), (f64, f64))> {
    if pts.iter().any(|p| !(p.0.is_finite() && p.1.is_finite())) {
        return None;
    }
    let n = pts.len() as f64;
    let cx = pts.iter().map(|p| p.0).sum::<f64>() / n;
    let cy = pts.iter().map(|p| p.1).sum::<f64>() / n;
    let (mut sxx, mut syy, mut sxy) = (0.0, 0.0, 0.0);
    for p in pts {
        let (dx, dy) = (p.0 - cx, p.1 - cy);
        sxx += dx * dx;
        syy += dy * dy;
        sxy += dx * dy;
    }
    let theta = 0.5 * (2.0 * sxy).atan2(sxx - syy);
    let (ux, uy) = (theta.cos(), theta.sin());
    let project = |p: &(f64, f64)| {
        let t = (p.0 - cx) * ux + (p.1 - cy) * uy;
        (cx + t * ux, cy + t * uy)
    };
    Some((project(&pts[0]), project(&pts[pts.len() - 1])))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geom::AffineTransform2D;
    use crate::lines::Frame;

    fn lines() -> LineSegmentSet {
        let f = Frame::new(181, 121).unwrap();
        LineSegmentSet::from_endpoints(
            f,
            [
                (NormCoord::new(-0.6, -0.4), NormCoord::new(0.5, -0.38)),
                (NormCoord::new(0.2, -0.7), NormCoord::new(0.25, 0.6)),
                (NormCoord::new(-0.3, 0.3), NormCoord::new(0.4, 0.5)),
            ],
        )
    }

    fn close(a: &LineSegmentSet, b: &[(NormCoord, NormCoord)], tol: f64) {
        assert_eq!(a.len(), b.len());
        for (s, (p0, p1)) in a.segments().iter().zip(b) {
            assert!((s.p0 - *p0).norm() < tol && (s.p1 - *p1).norm() < tol, "{s:?} vs {p0:?} {p1:?}");
        }
    }

    #[test]
    fn identity_field_leaves_lines() {
        let u = Grid2D::canonical(9, 7).unwrap();
        let l = lines();
        let out = warp_lines(&l, &u, &u, 8).unwrap();
        let expect: Vec<_> = l.segments().iter().map(|s| (s.p0, s.p1)).collect();
        close(&out, &expect, 1e-6);
    }

    #[test]
    fn translated_field_moves_lines_back() {
        let u = Grid2D::canonical(9, 7).unwrap();
        let t = NormCoord::new(0.05, -0.03);
        let g = u.map_points(|p| p + t).unwrap();
        let l = lines();
        let out = warp_lines(&l, &g, &u, 8).unwrap();
        let expect: Vec<_> = l.segments().iter().map(|s| (s.p0 - t, s.p1 - t)).collect();
        close(&out, &expect, 1e-6);
    }

    #[test]
    fn affine_field_applies_inverse() {
        let u = Grid2D::canonical(9, 7).unwrap();
        let m = AffineTransform2D::from_rows([0.9, 0.1, 0.02], [-0.05, 1.1, -0.03]).unwrap();
        let inv = m.inverse().unwrap();
        let g = u.map_points(|p| m.apply(p)).unwrap();
        let l = lines();
        let out = warp_lines(&l, &g, &u, 8).unwrap();
        let expect: Vec<_> = l.segments().iter().map(|s| (inv.apply(s.p0), inv.apply(s.p1))).collect();
        close(&out, &expect, 1e-4);
    }

    #[test]
    fn rejects_bad_inputs() {
        let u = Grid2D::canonical(5, 5).unwrap();
        let v = Grid2D::canonical(5, 4).unwrap();
        assert!(matches!(warp_lines(&lines(), &u, &v, 8), Err(Error::DimensionMismatch(_))));
        let collapsed = u.map_points(|_| NormCoord::new(0.1, 0.1)).unwrap();
        assert!(matches!(warp_lines(&lines(), &collapsed, &u, 8), Err(Error::DegenerateCenters(_))));
        assert!(warp_lines(&lines(), &u, &u, 1).is_err());
    }

    #[test]
    fn spline_interpolates_centers() {
        let u = Grid2D::canonical(6, 5).unwrap();
        let g = u
            .map_points(|p| NormCoord::new(p.x + 0.05 * (2.0 * p.y).sin(), p.y + 0.03 * (3.0 * p.x).cos()))
            .unwrap();
        let tps = ThinPlateSpline::fit(g.points(), u.points(), TPS_REGULARIZATION).unwrap();
        for (c, v) in g.points().iter().zip(u.points()) {
            assert!((tps.apply(*c) - *v).norm() < 1e-6);
        }
    }
}
