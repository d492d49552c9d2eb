use crate::affine_fit::affine_loss;
use crate::error::{Error, Result};
use crate::geom::{AffineTransform2D, Grid2D, RasterImage};
use crate::lines::{filter_aligned, line_entropy, LineDetector};
use crate::metrics::ssim;

/// Weights of the grid, SSIM, line-alignment and affine loss terms.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct LossWeights {
    pub alpha: f64,
    pub beta: f64,
    pub gamma: f64,
    pub lambda: f64,
}

impl Default for LossWeights {
    fn default() -> Self {
        Self {
            alpha: 1.0,
            beta: 0.05,
            gamma: 0.2,
            lambda: 5.0,
        }
    }
}

impl LossWeights {
    pub fn validate(&self) -> Result<()> {
        let all = [self.alpha, self.beta, self.gamma, self.lambda];
        if all.iter().any(|w| !(w.is_finite() && *w >= 0.0)) {
            return Err(Error::InvalidParameter(format!("loss weights must be finite and >= 0: {self:?}")));
        }
        Ok(())
    }
}

/// Individual loss terms; `l_al` is in radians.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct LossComponents {
    pub l_2d: f64,
    pub l_ssim: f64,
    pub l_al: f64,
    pub l_affine: f64,
}

impl LossComponents {
    /// Weighted sum; the affine term is dropped unless `include_affine`.
    pub fn total(&self, w: &LossWeights, include_affine: bool) -> f64 {
        let base = w.alpha * self.l_2d + w.beta * self.l_ssim + w.gamma * self.l_al;
        if include_affine {
            base + w.lambda * self.l_affine
        } else {
            base
        }
    }
}

/// Segments deviating more than this are excluded from the alignment term.
const ALIGN_FILTER_DEG: f64 = 5.0;

/// Evaluates every loss term and the weighted total.
#[allow(clippy::too_many_arguments)]
pub fn loss_bundle(
    g_pred: &Grid2D,
    g_gt: &Grid2D,
    o_pred: &RasterImage,
    o_gt: &RasterImage,
    a_pred: &AffineTransform2D,
    a_gt: &AffineTransform2D,
    w: &LossWeights,
    include_affine: bool,
    detector: &dyn LineDetector,
) -> Result<(f64, LossComponents)> {
    w.validate()?;
    if !g_pred.same_shape(g_gt) {
        return Err(Error::DimensionMismatch(format!(
            "grid {}x{} vs {}x{}",
            g_pred.rows(),
            g_pred.cols(),
            g_gt.rows(),
            g_gt.cols()
        )));
    }
    let n = g_pred.points().len() as f64;
    let l_2d = g_pred
        .points()
        .iter()
        .zip(g_gt.points())
        .map(|(a, b)| (a.x - b.x).abs() + (a.y - b.y).abs())
        .sum::<f64>()
        / (2.0 * n);
    let l_ssim = 1.0 - ssim(o_pred, o_gt)?;
    let aligned = filter_aligned(&detector.detect(o_pred)?, ALIGN_FILTER_DEG);
    let l_al = if aligned.is_empty() {
        0.0
    } else {
        line_entropy(&aligned)?.to_radians()
    };
    let c = LossComponents {
        l_2d,
        l_ssim,
        l_al,
        l_affine: affine_loss(a_pred, a_gt),
    };
    Ok((c.total(w, include_affine), c))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geom::NormCoord;
    use crate::lines::LsdDetector;
    use crate::synth::render_page;

    #[test]
    fn weighted_sum_example() {
        let c = LossComponents {
            l_2d: 0.1,
            l_ssim: 0.2,
            l_al: 0.05,
            l_affine: 0.02,
        };
        assert!((c.total(&LossWeights::default(), true) - 0.22).abs() < 1e-12);
        assert!((c.total(&LossWeights::default(), false) - 0.12).abs() < 1e-12);
    }

    #[test]
    fn linear_in_each_component() {
        let w = LossWeights::default();
        let base = LossComponents {
            l_2d: 0.3,
            l_ssim: 0.1,
            l_al: 0.4,
            l_affine: 0.7,
        };
        let t0 = base.total(&w, true);
        let scaled = LossComponents { l_al: base.l_al * 3.0, ..base };
        assert!((scaled.total(&w, true) - t0 - 2.0 * w.gamma * base.l_al).abs() < 1e-12);
    }

    #[test]
    fn identical_inputs_give_zero() {
        let (page, _) = render_page(4, 2).unwrap();
        let g = Grid2D::canonical(9, 7).unwrap();
        let a = AffineTransform2D::similarity(1.1, 0.1, 0.0, 0.0);
        let (total, c) = loss_bundle(&g, &g, &page, &page, &a, &a, &LossWeights::default(), true, &LsdDetector::default()).unwrap();
        assert!(c.l_al < 1e-3, "{c:?}");
        assert!(total < 1e-3 && c.l_2d == 0.0 && c.l_ssim.abs() < 1e-9);
    }

    #[test]
    fn affine_term_dropped_without_flag() {
        let (page, _) = render_page(4, 1).unwrap();
        let g = Grid2D::canonical(5, 5).unwrap();
        let h = g.map_points(|p| NormCoord::new(p.x * 0.9, p.y)).unwrap();
        let gt = AffineTransform2D::similarity(1.0, 0.0, 0.0, 0.0);
        let det = LsdDetector::default();
        let w = LossWeights::default();
        let a1 = AffineTransform2D::similarity(1.3, 0.2, 0.1, 0.0);
        let a2 = AffineTransform2D::similarity(0.7, -0.4, 0.0, 0.3);
        let t1 = loss_bundle(&h, &g, &page, &page, &a1, &gt, &w, false, &det).unwrap().0;
        let t2 = loss_bundle(&h, &g, &page, &page, &a2, &gt, &w, false, &det).unwrap().0;
        assert_eq!(t1, t2);
        assert!(loss_bundle(&h, &g, &page, &page, &a1, &gt, &w, true, &det).unwrap().0 > t1);
    }
}
