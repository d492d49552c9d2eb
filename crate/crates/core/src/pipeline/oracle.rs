use std::sync::Arc;

use crate::error::{Error, Result};
use crate::geom::{BackwardMap, Grid2D, NormCoord};
use crate::pipeline::predictor::{GridPredictor, PredictRequest, Stage};
use crate::synth::{Distortion, SyntheticSample};

/// Ground-truth predictor for synthetic samples.
///
/// With `f` the exact forward distortion (flat to distorted coordinates):
/// localization returns `f` on the canonical grid, the coarse stage returns
/// `A ∘ f_coarse` (everything except the fine ripple, seen through the stage-1
/// transform `A`), and refinement returns `D_n⁻¹ ∘ f` so that composing it onto
/// the current map reproduces `f`.
#[derive(Clone, Debug)]
pub struct OraclePredictor {
    dist: Arc<Distortion>,
}

impl OraclePredictor {
    pub fn new(truth: &SyntheticSample) -> Result<Self> {
        Ok(Self {
            dist: Arc::new(truth.spec.compile()?),
        })
    }
}

/// The three stage oracles for `truth`.
pub fn oracle_predictors(truth: &SyntheticSample) -> Result<(OraclePredictor, OraclePredictor, OraclePredictor)> {
    let p = OraclePredictor::new(truth)?;
    Ok((p.clone(), p.clone(), p))
}

const NEWTON_STEPS: usize = 40;
const NEWTON_TOL: f64 = 1e-12;

/// Point `p` with `map.sample(p) ≈ q`, by damped Newton from `guess` with a
/// finite-difference Jacobian of the bilinear field.
pub fn invert_map_at(map: &BackwardMap, q: NormCoord, guess: NormCoord) -> NormCoord {
    let ex = 1.0 / (map.width() - 1).max(1) as f64;
    let ey = 1.0 / (map.height() - 1).max(1) as f64;
    let mut p = guess.clamped();
    let mut r = map.sample(p) - q;
    let mut err = r.norm();
    for _ in 0..NEWTON_STEPS {
        if err < NEWTON_TOL {
            break;
        }
        let dx = (map.sample(NormCoord::new(p.x + ex, p.y)) - map.sample(NormCoord::new(p.x - ex, p.y))) * (0.5 / ex);
        let dy = (map.sample(NormCoord::new(p.x, p.y + ey)) - map.sample(NormCoord::new(p.x, p.y - ey))) * (0.5 / ey);
        let det = dx.x * dy.y - dy.x * dx.y;
        if det.abs() < 1e-14 {
            break;
        }
        let step = NormCoord::new((dy.y * r.x - dy.x * r.y) / det, (-dx.y * r.x + dx.x * r.y) / det);
        let mut t = 1.0;
        let mut improved = false;
        for _ in 0..20 {
            let cand = (p - step * t).clamped();
            let rc = map.sample(cand) - q;
            if rc.norm() < err {
                p = cand;
                r = rc;
                err = rc.norm();
                improved = true;
                break;
            }
            t *= 0.5;
        }
        if !improved {
            break;
        }
    }
    p
}

impl GridPredictor for OraclePredictor {
    fn predict(&self, req: &PredictRequest<'_>) -> Result<Grid2D> {
        let e = Grid2D::canonical(req.grid_rows, req.grid_cols)?;
        match req.stage {
            Stage::Localize => e.map_points(|u| self.dist.forward(u)),
            Stage::Coarse => {
                let a = req
                    .transform
                    .ok_or_else(|| Error::PredictorFailure("coarse oracle needs the stage-1 transform".into()))?;
                e.map_points(|u| a.apply(self.dist.forward_coarse(u)))
            }
            Stage::Fine(_) => {
                let d = req
                    .current_map
                    .ok_or_else(|| Error::PredictorFailure("fine oracle needs the current map".into()))?;
                e.map_points(|u| invert_map_at(d, self.dist.forward(u), u))
            }
        }
    }
}
