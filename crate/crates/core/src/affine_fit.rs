//! Stage-1 geometry: least-squares fit of a global transform from a predicted
//! control grid, normalization of the fitted document into `[-1, 1]^2`, and the
//! entrywise L1 loss between transforms.

use std::fmt;
use std::str::FromStr;

use nalgebra::{DMatrix, Matrix3};

use crate::error::{Error, Result};
use crate::geom::{AffineTransform2D, GlobalTransform, Grid2D, Homography2D, NormCoord};

/// Transform family used for the stage-1 fit.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Hash)]
pub enum FitKind {
    Similarity,
    #[default]
    Affine,
    Perspective,
}

impl fmt::Display for FitKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            FitKind::Similarity => "similarity",
            FitKind::Affine => "affine",
            FitKind::Perspective => "perspective",
        })
    }
}

impl FromStr for FitKind {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "similarity" | "S" => Ok(FitKind::Similarity),
            "affine" | "A" => Ok(FitKind::Affine),
            "perspective" | "P" => Ok(FitKind::Perspective),
            other => Err(Error::InvalidParameter(format!("unknown fit kind {other:?}"))),
        }
    }
}

/// Boundary extension applied around the fitted document before normalization.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct MarginConfig {
    m: f64,
}

impl Default for MarginConfig {
    fn default() -> Self {
        Self { m: 0.03 }
    }
}

impl MarginConfig {
    pub fn new(m: f64) -> Result<Self> {
        if !(m.is_finite() && (0.0..0.5).contains(&m)) {
            return Err(Error::InvalidParameter(format!("margin {m} outside [0, 0.5)")));
        }
        Ok(Self { m })
    }

    pub fn value(&self) -> f64 {
        self.m
    }
}

/// `argmin_T Σ ‖T(src_i) − dst_i‖²` over the chosen family.
pub fn fit_transform(src: &Grid2D, dst: &Grid2D, kind: FitKind) -> Result<GlobalTransform> {
    if !src.same_shape(dst) {
        return Err(Error::DimensionMismatch(format!(
            "grids {}x{} and {}x{}",
            src.rows(),
            src.cols(),
            dst.rows(),
            dst.cols()
        )));
    }
    fit_points(src.points(), dst.points(), kind)
}

/// [`fit_transform`] on plain point lists.
pub fn fit_points(src: &[NormCoord], dst: &[NormCoord], kind: FitKind) -> Result<GlobalTransform> {
    if src.len() != dst.len() {
        return Err(Error::DimensionMismatch(format!("{} vs {} points", src.len(), dst.len())));
    }
    match kind {
        FitKind::Affine => fit_affine(src, dst).map(GlobalTransform::Affine),
        FitKind::Similarity => fit_similarity(src, dst).map(GlobalTransform::Affine),
        FitKind::Perspective => fit_homography(src, dst).map(GlobalTransform::Perspective),
    }
}

fn centroid(points: &[NormCoord]) -> NormCoord {
    let n = points.len() as f64;
    let (sx, sy) = points.iter().fold((0.0, 0.0), |(x, y), p| (x + p.x, y + p.y));
    NormCoord::new(sx / n, sy / n)
}

/// Solves the 3x3 system `m x = b` by Gaussian elimination with partial pivoting.
fn solve3(mut m: [[f64; 3]; 3], mut b: [f64; 3]) -> Option<[f64; 3]> {
    let scale = m.iter().flatten().map(|v| v.abs()).fold(0.0, f64::max);
    if scale == 0.0 {
        return None;
    }
    for col in 0..3 {
        let pivot = (col..3)
            .max_by(|&a, &b| m[a][col].abs().total_cmp(&m[b][col].abs()))
            .unwrap();
        if m[pivot][col].abs() <= 1e-12 * scale {
            return None;
        }
        m.swap(col, pivot);
        b.swap(col, pivot);
        for row in col + 1..3 {
            let f = m[row][col] / m[col][col];
            for k in col..3 {
                m[row][k] -= f * m[col][k];
            }
            b[row] -= f * b[col];
        }
    }
    let mut x = [0.0; 3];
    for row in (0..3).rev() {
        let s: f64 = (row + 1..3).map(|k| m[row][k] * x[k]).sum();
        x[row] = (b[row] - s) / m[row][row];
    }
    Some(x)
}

const REFINE_STEPS: usize = 2;

/// Two independent 3-parameter least-squares problems (one per output axis),
/// solved through normal equations on centered coordinates.
fn fit_affine(src: &[NormCoord], dst: &[NormCoord]) -> Result<AffineTransform2D> {
    if src.len() < 3 {
        return Err(Error::DegenerateConfiguration("affine fit needs at least 3 points"));
    }
    let cs = centroid(src);
    let cd = centroid(dst);
    let (mut sxx, mut sxy, mut syy) = (0.0, 0.0, 0.0);
    let (mut bx, mut by) = ([0.0; 3], [0.0; 3]);
    for (s, d) in src.iter().zip(dst) {
        let (x, y) = (s.x - cs.x, s.y - cs.y);
        let (u, v) = (d.x - cd.x, d.y - cd.y);
        sxx += x * x;
        sxy += x * y;
        syy += y * y;
        bx[0] += x * u;
        bx[1] += y * u;
        by[0] += x * v;
        by[1] += y * v;
    }
    let trace = sxx + syy;
    if trace <= 0.0 || (sxx * syy - sxy * sxy) <= 1e-12 * trace * trace {
        return Err(Error::DegenerateConfiguration("source points are collinear"));
    }
    // Centered data decouples the translation: the third unknown is pinned to 0
    // by the unit row, leaving the 2x2 linear block inside a pivoted 3x3 solve.
    let n = src.len() as f64;
    let normal = [[sxx, sxy, 0.0], [sxy, syy, 0.0], [0.0, 0.0, n]];
    let solve = |b| solve3(normal, b).ok_or(Error::DegenerateConfiguration("rank-deficient system"));
    let (rx, ry) = (solve(bx)?, solve(by)?);
    let (mut a, mut b) = (rx[0], rx[1]);
    let (mut d, mut e) = (ry[0], ry[1]);
    // The normal equations square the conditioning of the source layout;
    // refining against the residuals recovers the lost digits.
    for _ in 0..REFINE_STEPS {
        let (mut rbx, mut rby) = ([0.0; 3], [0.0; 3]);
        for (s, t) in src.iter().zip(dst) {
            let (x, y) = (s.x - cs.x, s.y - cs.y);
            let ru = (t.x - cd.x) - (a * x + b * y);
            let rv = (t.y - cd.y) - (d * x + e * y);
            rbx[0] += x * ru;
            rbx[1] += y * ru;
            rby[0] += x * rv;
            rby[1] += y * rv;
        }
        let (cx, cy) = (solve(rbx)?, solve(rby)?);
        a += cx[0];
        b += cx[1];
        d += cy[0];
        e += cy[1];
    }
    AffineTransform2D::new([a, b, cd.x - a * cs.x - b * cs.y, d, e, cd.y - d * cs.x - e * cs.y])
}

/// Closed-form Procrustes fit of scale, rotation and translation.
fn fit_similarity(src: &[NormCoord], dst: &[NormCoord]) -> Result<AffineTransform2D> {
    if src.len() < 2 {
        return Err(Error::DegenerateConfiguration("similarity fit needs at least 2 points"));
    }
    let cs = centroid(src);
    let cd = centroid(dst);
    let (mut re, mut im, mut norm) = (0.0, 0.0, 0.0);
    for (s, d) in src.iter().zip(dst) {
        let (x, y) = (s.x - cs.x, s.y - cs.y);
        let (u, v) = (d.x - cd.x, d.y - cd.y);
        // (u + iv) * conj(x + iy)
        re += u * x + v * y;
        im += v * x - u * y;
        norm += x * x + y * y;
    }
    if norm <= 1e-300 {
        return Err(Error::DegenerateConfiguration("source points coincide"));
    }
    let (a, b) = (re / norm, im / norm);
    AffineTransform2D::new([a, -b, cd.x - a * cs.x + b * cs.y, b, a, cd.y - b * cs.x - a * cs.y])
}

/// Isotropic conditioning transform: centroid to origin, mean distance √2.
fn conditioning(points: &[NormCoord]) -> Result<Matrix3<f64>> {
    let c = centroid(points);
    let mean = points.iter().map(|p| (*p - c).norm()).sum::<f64>() / points.len() as f64;
    if mean <= 1e-300 {
        return Err(Error::DegenerateConfiguration("points coincide"));
    }
    let s = std::f64::consts::SQRT_2 / mean;
    Ok(Matrix3::new(s, 0.0, -s * c.x, 0.0, s, -s * c.y, 0.0, 0.0, 1.0))
}

/// Normalized direct linear transform.
fn fit_homography(src: &[NormCoord], dst: &[NormCoord]) -> Result<Homography2D> {
    if src.len() < 4 {
        return Err(Error::DegenerateConfiguration("perspective fit needs at least 4 points"));
    }
    let ts = conditioning(src)?;
    let td = conditioning(dst)?;
    let mut a = DMatrix::<f64>::zeros(2 * src.len(), 9);
    for (k, (s, d)) in src.iter().zip(dst).enumerate() {
        let ps = ts * nalgebra::Vector3::new(s.x, s.y, 1.0);
        let pd = td * nalgebra::Vector3::new(d.x, d.y, 1.0);
        let (x, y) = (ps.x, ps.y);
        let (u, v) = (pd.x, pd.y);
        let r0 = [-x, -y, -1.0, 0.0, 0.0, 0.0, u * x, u * y, u];
        let r1 = [0.0, 0.0, 0.0, -x, -y, -1.0, v * x, v * y, v];
        for c in 0..9 {
            a[(2 * k, c)] = r0[c];
            a[(2 * k + 1, c)] = r1[c];
        }
    }
    let ata = a.transpose() * &a;
    let eig = nalgebra::SymmetricEigen::new(ata);
    let mut order: Vec<usize> = (0..9).collect();
    order.sort_by(|&i, &j| eig.eigenvalues[i].total_cmp(&eig.eigenvalues[j]));
    let second = eig.eigenvalues[order[1]];
    if second <= 1e-10 * eig.eigenvalues[order[8]].abs().max(1e-300) {
        return Err(Error::DegenerateConfiguration("perspective system is rank-deficient"));
    }
    let h = eig.eigenvectors.column(order[0]);
    let hn = Matrix3::new(h[0], h[1], h[2], h[3], h[4], h[5], h[6], h[7], h[8]);
    let td_inv = td
        .try_inverse()
        .ok_or(Error::DegenerateConfiguration("conditioning is singular"))?;
    let full = td_inv * hn * ts;
    let mut out = [0.0; 9];
    for r in 0..3 {
        for c in 0..3 {
            out[r * 3 + c] = full[(r, c)];
        }
    }
    let h = Homography2D::new(out)?;
    if h.h[8].abs() < 1e-12 {
        return Ok(h);
    }
    Ok(h.normalized())
}

/// Axis-aligned bounding box of the points, each side pushed out by
/// `m · extent`, mapped anisotropically onto `[-1, 1]^2`.
pub fn norm_transform(points: &[NormCoord], margin: MarginConfig) -> Result<AffineTransform2D> {
    let (mut x0, mut x1, mut y0, mut y1) = (f64::INFINITY, f64::NEG_INFINITY, f64::INFINITY, f64::NEG_INFINITY);
    for p in points {
        if !p.is_finite() {
            return Err(Error::NonFinitePayload(0));
        }
        x0 = x0.min(p.x);
        x1 = x1.max(p.x);
        y0 = y0.min(p.y);
        y1 = y1.max(p.y);
    }
    let (w, h) = (x1 - x0, y1 - y0);
    if !(w > 0.0 && h > 0.0) {
        return Err(Error::DegenerateBbox {
            width: w.max(0.0),
            height: h.max(0.0),
        });
    }
    let m = margin.value();
    let (ex0, ex1) = (x0 - m * w, x1 + m * w);
    let (ey0, ey1) = (y0 - m * h, y1 + m * h);
    let sx = 2.0 / (ex1 - ex0);
    let sy = 2.0 / (ey1 - ey0);
    AffineTransform2D::new([sx, 0.0, -1.0 - sx * ex0, 0.0, sy, -1.0 - sy * ey0])
}

/// The `m`-expanded bounding box `(x0, y0, x1, y1)` that [`norm_transform`] normalizes.
pub fn expanded_bbox(points: &[NormCoord], margin: MarginConfig) -> (f64, f64, f64, f64) {
    let (mut x0, mut x1, mut y0, mut y1) = (f64::INFINITY, f64::NEG_INFINITY, f64::INFINITY, f64::NEG_INFINITY);
    for p in points {
        x0 = x0.min(p.x);
        x1 = x1.max(p.x);
        y0 = y0.min(p.y);
        y1 = y1.max(p.y);
    }
    let m = margin.value();
    let (w, h) = (x1 - x0, y1 - y0);
    (x0 - m * w, y0 - m * h, x1 + m * w, y1 + m * h)
}

/// `A = S_norm ∘ A_init`: fit the predicted grid onto the canonical grid, then
/// normalize the fitted grid's bounding box (with margin) into `[-1, 1]^2`.
pub fn stage1_transform(
    predicted: &Grid2D,
    canonical: &Grid2D,
    kind: FitKind,
    margin: MarginConfig,
) -> Result<GlobalTransform> {
    let init = fit_transform(predicted, canonical, kind)?;
    let fitted: Vec<NormCoord> = predicted.points().iter().map(|&p| init.apply(p)).collect();
    let s_norm = norm_transform(&fitted, margin)?;
    Ok(GlobalTransform::Affine(s_norm).compose(&init))
}

/// Entrywise L1 distance (sum over the six parameters).
pub fn affine_loss(pred: &AffineTransform2D, gt: &AffineTransform2D) -> f64 {
    pred.m.iter().zip(gt.m.iter()).map(|(a, b)| (a - b).abs()).sum()
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn canonical() -> Grid2D {
        Grid2D::canonical(45, 31).unwrap()
    }

    fn affine(r0: [f64; 3], r1: [f64; 3]) -> AffineTransform2D {
        AffineTransform2D::from_rows(r0, r1).unwrap()
    }

    fn residual(t: &AffineTransform2D, src: &[NormCoord], dst: &[NormCoord]) -> f64 {
        src.iter()
            .zip(dst)
            .map(|(s, d)| {
                let q = t.apply(*s) - *d;
                q.x * q.x + q.y * q.y
            })
            .sum()
    }

    #[test]
    fn equal_grids_give_identity() {
        let e = canonical();
        for kind in [FitKind::Affine, FitKind::Similarity, FitKind::Perspective] {
            let t = fit_transform(&e, &e, kind).unwrap();
            let h = t.to_homography();
            let id = AffineTransform2D::IDENTITY.to_homography();
            for (a, b) in h.h.iter().zip(id.h.iter()) {
                assert!((a - b).abs() < 1e-9, "{kind}: {:?}", h.h);
            }
        }
    }

    #[test]
    fn recovers_inverse_of_generator() {
        let e = canonical();
        let m = affine([0.5, 0.0, -0.05], [0.0, 1.0, 0.2]);
        let g = e.map_points(|p| m.apply(p)).unwrap();
        let t = fit_transform(&g, &e, FitKind::Affine).unwrap();
        let expect = affine([2.0, 0.0, 0.1], [0.0, 1.0, -0.2]);
        assert!(t.as_affine().unwrap().max_abs_diff(&expect) < 1e-9);
    }

    #[test]
    fn collinear_points_are_degenerate() {
        let e = Grid2D::canonical(3, 3).unwrap();
        let line = e.map_points(|p| NormCoord::new(p.x + p.y, 2.0 * (p.x + p.y))).unwrap();
        assert!(matches!(
            fit_transform(&line, &e, FitKind::Affine),
            Err(Error::DegenerateConfiguration(_))
        ));
        let point = e.map_points(|_| NormCoord::new(0.3, 0.3)).unwrap();
        assert!(fit_transform(&point, &e, FitKind::Similarity).is_err());
        assert!(fit_transform(&line, &e, FitKind::Perspective).is_err());
    }

    #[test]
    fn similarity_recovers_rotation_and_scale() {
        let e = canonical();
        let s = AffineTransform2D::similarity(1.7, 0.3, 0.1, -0.2);
        let g = e.map_points(|p| s.inverse().unwrap().apply(p)).unwrap();
        let t = fit_transform(&g, &e, FitKind::Similarity).unwrap();
        assert!(t.as_affine().unwrap().max_abs_diff(&s) < 1e-12);
    }

    #[test]
    fn perspective_recovers_homography() {
        let e = canonical();
        let h = Homography2D::new([1.05, 0.04, 0.02, -0.03, 0.95, -0.05, 0.08, -0.06, 1.0]).unwrap();
        let g = e.map_points(|p| h.inverse().unwrap().apply(p)).unwrap();
        let t = fit_transform(&g, &e, FitKind::Perspective).unwrap().to_homography();
        for (a, b) in t.h.iter().zip(h.h.iter()) {
            assert!((a - b).abs() < 1e-8, "{:?}", t.h);
        }
    }

    #[test]
    fn least_squares_beats_perturbations() {
        let e = canonical();
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let m = affine([0.8, 0.1, 0.05], [-0.07, 0.9, -0.02]);
        let g: Vec<NormCoord> = e
            .points()
            .iter()
            .map(|&p| m.apply(p) + NormCoord::new(rng.random_range(-0.02..0.02), rng.random_range(-0.02..0.02)))
            .collect();
        let t = *fit_points(&g, e.points(), FitKind::Affine).unwrap().as_affine().unwrap();
        let best = residual(&t, &g, e.points());
        for _ in 0..1000 {
            let mut p = t;
            for v in p.m.iter_mut() {
                *v += rng.random_range(-1e-3..1e-3);
            }
            assert!(residual(&p, &g, e.points()) >= best);
        }
    }

    #[test]
    fn translation_equivariance() {
        let e = canonical();
        let m = affine([0.6, 0.2, 0.1], [-0.1, 0.7, 0.0]);
        let g = e.map_points(|p| m.apply(p)).unwrap();
        let t0 = *fit_transform(&g, &e, FitKind::Affine).unwrap().as_affine().unwrap();
        let shift = NormCoord::new(0.37, -0.81);
        let gs = g.map_points(|p| p + shift).unwrap();
        let es = e.map_points(|p| p + shift).unwrap();
        let t1 = *fit_transform(&gs, &es, FitKind::Affine).unwrap().as_affine().unwrap();
        for k in [0, 1, 3, 4] {
            assert!((t0.m[k] - t1.m[k]).abs() < 1e-9);
        }
    }

    #[test]
    fn norm_transform_examples() {
        let sq = |lo: f64, hi: f64| vec![NormCoord::new(lo, lo), NormCoord::new(hi, hi), NormCoord::new(lo, hi)];
        let zero = MarginConfig::new(0.0).unwrap();
        let a = norm_transform(&sq(-0.5, 0.5), zero).unwrap();
        assert!(a.max_abs_diff(&affine([2.0, 0.0, 0.0], [0.0, 2.0, 0.0])) < 1e-15);
        let b = norm_transform(&sq(0.0, 1.0), zero).unwrap();
        assert!(b.max_abs_diff(&affine([2.0, 0.0, -1.0], [0.0, 2.0, -1.0])) < 1e-15);
        let c = norm_transform(&sq(-0.5, 0.5), MarginConfig::default()).unwrap();
        assert!((c.m[0] - 2.0 / 1.06).abs() < 1e-12 && (c.m[4] - 2.0 / 1.06).abs() < 1e-12);
        assert!((c.m[0] - 1.88679).abs() < 1e-5);
        assert!(matches!(
            norm_transform(&[NormCoord::new(0.0, 0.0), NormCoord::new(1.0, 0.0)], zero),
            Err(Error::DegenerateBbox { .. })
        ));
    }

    #[test]
    fn margin_bounds() {
        assert!(MarginConfig::new(0.5).is_err());
        assert!(MarginConfig::new(-0.1).is_err());
        assert_eq!(MarginConfig::default().value(), 0.03);
    }

    #[test]
    fn stage1_examples() {
        let e = canonical();
        let zero = MarginConfig::new(0.0).unwrap();
        let a = stage1_transform(&e, &e, FitKind::Affine, zero).unwrap();
        assert!(a.as_affine().unwrap().max_abs_diff(&AffineTransform2D::IDENTITY) < 1e-12);

        let half = e.map_points(|p| p * 0.5).unwrap();
        let a = stage1_transform(&half, &e, FitKind::Affine, zero).unwrap();
        assert!(a.as_affine().unwrap().max_abs_diff(&AffineTransform2D::scale(2.0, 2.0)) < 1e-12);

        // Grid squeezed into [0, 1]^2: the fit restores [-1, 1]^2, then the
        // expanded box [-1.06, 1.06]^2 is normalized.
        let unit = e.map_points(|p| NormCoord::new(0.5 * p.x + 0.5, 0.5 * p.y + 0.5)).unwrap();
        let m = MarginConfig::default();
        let a = stage1_transform(&unit, &e, FitKind::Affine, m).unwrap();
        let init = fit_transform(&unit, &e, FitKind::Affine).unwrap();
        let fitted: Vec<NormCoord> = unit.points().iter().map(|&p| init.apply(p)).collect();
        let (x0, y0, x1, y1) = expanded_bbox(&fitted, m);
        let s_norm = norm_transform(&fitted, m).unwrap();
        for (x, y, ex, ey) in [(x0, y0, -1.0, -1.0), (x1, y0, 1.0, -1.0), (x0, y1, -1.0, 1.0), (x1, y1, 1.0, 1.0)] {
            let q = s_norm.apply(NormCoord::new(x, y));
            assert!((q.x - ex).abs() < 1e-9 && (q.y - ey).abs() < 1e-9);
        }
        // Corner (1, 1) of the unit square lands at 1/1.06.
        let q = a.apply(NormCoord::new(1.0, 1.0));
        assert!((q.x - 1.0 / 1.06).abs() < 1e-9);
    }

    #[test]
    fn affine_loss_sums_entries() {
        let a = AffineTransform2D::IDENTITY;
        assert_eq!(affine_loss(&a, &a), 0.0);
        let mut b = a;
        b.m[2] += 0.1;
        assert!((affine_loss(&a, &b) - 0.1).abs() < 1e-15);
        b.m[4] -= 0.2;
        assert!((affine_loss(&a, &b) - 0.3).abs() < 1e-15);
    }

    #[test]
    fn affine_loss_is_a_metric() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let mut rand_t = || AffineTransform2D::new(std::array::from_fn(|_| rng.random_range(-2.0..2.0))).unwrap();
        for _ in 0..200 {
            let (a, b, c) = (rand_t(), rand_t(), rand_t());
            assert!(affine_loss(&a, &b) > 0.0);
            assert_eq!(affine_loss(&a, &b), affine_loss(&b, &a));
            assert!(affine_loss(&a, &c) <= affine_loss(&a, &b) + affine_loss(&b, &c) + 1e-12);
        }
    }
}
