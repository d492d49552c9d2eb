use crate::error::{Error, Result};
use crate::geom::{Grid2D, RasterImage};
use crate::lines::tps::warp_lines;
use crate::lines::{filter_aligned, line_entropy, LineDetector};

/// Parameters of the entropy-based stopping rule.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct StoppingConfig {
    /// Maximum number of refinement iterations `M`.
    pub max_iterations: usize,
    /// Axis-alignment filter for reference lines, degrees.
    pub theta_thresh: f64,
    /// An iteration is accepted only if its score is below `tau` times the best so far.
    pub tau: f64,
}

impl Default for StoppingConfig {
    fn default() -> Self {
        Self {
            max_iterations: 5,
            theta_thresh: 5.0,
            tau: 0.99,
        }
    }
}

impl StoppingConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.tau > 0.0 && self.tau <= 1.0) {
            return Err(Error::InvalidParameter(format!("tau {} outside (0, 1]", self.tau)));
        }
        if !(self.theta_thresh > 0.0 && self.theta_thresh <= 45.0) {
            return Err(Error::InvalidParameter(format!(
                "theta_thresh {} outside (0, 45]",
                self.theta_thresh
            )));
        }
        Ok(())
    }
}

/// Outcome of one stopping run.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct StoppingTrace {
    pub n_opt: usize,
    /// `S_0` followed by every evaluated `S_n`, including the rejected one.
    pub scores: Vec<f64>,
    /// Set when no reference lines were found and `n_opt` is the fixed fallback.
    pub fallback_used: bool,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Decision {
    Accept,
    Stop,
}

/// Incremental form of the stopping rule: offer one score per iteration.
#[derive(Clone, Debug)]
pub struct StoppingController {
    tau: f64,
    max_iterations: usize,
    best: f64,
    trace: StoppingTrace,
    stopped: bool,
}

impl StoppingController {
    pub fn new(cfg: &StoppingConfig, s0: f64) -> Self {
        Self {
            tau: cfg.tau,
            max_iterations: cfg.max_iterations,
            best: s0,
            trace: StoppingTrace {
                n_opt: 0,
                scores: vec![s0],
                fallback_used: false,
            },
            stopped: cfg.max_iterations == 0,
        }
    }

    /// The iteration whose score is expected next, or `None` once finished.
    pub fn next_iteration(&self) -> Option<usize> {
        if self.stopped {
            None
        } else {
            Some(self.trace.scores.len())
        }
    }

    pub fn best(&self) -> f64 {
        self.best
    }

    /// Scores iteration [`Self::next_iteration`]. Offering after a stop is a no-op.
    pub fn offer(&mut self, score: f64) -> Decision {
        let Some(n) = self.next_iteration() else {
            return Decision::Stop;
        };
        self.trace.scores.push(score);
        if score < self.tau * self.best {
            self.best = score;
            self.trace.n_opt = n;
            if n >= self.max_iterations {
                self.stopped = true;
            }
            Decision::Accept
        } else {
            self.stopped = true;
            Decision::Stop
        }
    }

    /// Ends the run early (for example when a score cannot be computed).
    pub fn halt(&mut self) {
        self.stopped = true;
    }

    pub fn finish(self) -> StoppingTrace {
        self.trace
    }
}

/// Runs the rule over precomputed scores `S_1, S_2, ...`; unused trailing
/// scores are ignored and running out of scores ends the run.
pub fn replay_scores(s0: f64, scores: &[f64], cfg: &StoppingConfig) -> StoppingTrace {
    let mut ctl = StoppingController::new(cfg, s0);
    for &s in scores {
        if ctl.next_iteration().is_none() || ctl.offer(s) == Decision::Stop {
            break;
        }
    }
    ctl.finish()
}

/// Entropy-based choice of the number of refinement iterations.
///
/// Reference lines are detected on `o1` and filtered to the axis-aligned ones.
/// For `n = 1..=M`, `field(n)` supplies the next backward field `G_{n+1}` (in
/// the layout of `canonical`); the current lines are warped by it and scored.
/// An iteration is accepted while its score drops below `tau` times the best
/// score. When no reference lines survive the filter, `n_opt = min(1, M)` and
/// no field is requested. A warped set that comes back empty ends the run.
pub fn adaptive_stop<P>(
    o1: &RasterImage,
    detector: &dyn LineDetector,
    canonical: &Grid2D,
    mut field: P,
    cfg: &StoppingConfig,
    samples_per_line: usize,
) -> Result<StoppingTrace>
where
    P: FnMut(usize) -> Result<Grid2D>,
{
    cfg.validate()?;
    let reference = filter_aligned(&detector.detect(o1)?, cfg.theta_thresh);
    let Ok(s0) = line_entropy(&reference) else {
        return Ok(StoppingTrace {
            n_opt: cfg.max_iterations.min(1),
            scores: Vec::new(),
            fallback_used: true,
        });
    };
    let mut ctl = StoppingController::new(cfg, s0);
    let mut current = reference;
    while let Some(n) = ctl.next_iteration() {
        let g = field(n)?;
        let warped = warp_lines(&current, &g, canonical, samples_per_line)?;
        let Ok(score) = line_entropy(&warped) else {
            ctl.halt();
            break;
        };
        if ctl.offer(score) == Decision::Accept {
            current = warped;
        }
    }
    Ok(ctl.finish())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn cfg() -> StoppingConfig {
        StoppingConfig::default()
    }

    #[test]
    fn hand_traced_examples() {
        let t = replay_scores(10.0, &[9.0, 8.95], &cfg());
        assert_eq!(t.n_opt, 1);
        assert_eq!(t.scores, vec![10.0, 9.0, 8.95]);
        assert_eq!(replay_scores(10.0, &[10.5], &cfg()).n_opt, 0);
        let decreasing: Vec<f64> = (1..=7).map(|k| 10.0 * 0.9f64.powi(k)).collect();
        let t = replay_scores(10.0, &decreasing, &cfg());
        assert_eq!(t.n_opt, 5);
        assert_eq!(t.scores.len(), 6);
    }

    #[test]
    fn comparison_is_strict() {
        assert_eq!(replay_scores(10.0, &[9.9], &cfg()).n_opt, 0);
        let c = StoppingConfig { tau: 1.0, ..cfg() };
        assert_eq!(replay_scores(2.0, &[2.0], &c).n_opt, 0);
        assert_eq!(replay_scores(0.0, &[0.0], &cfg()).n_opt, 0);
    }

    #[test]
    fn zero_iterations_never_scores() {
        let c = StoppingConfig { max_iterations: 0, ..cfg() };
        let t = replay_scores(10.0, &[1.0], &c);
        assert_eq!((t.n_opt, t.scores.len()), (0, 1));
    }

    #[test]
    fn rejects_bad_config() {
        assert!(StoppingConfig { tau: 0.0, ..cfg() }.validate().is_err());
        assert!(StoppingConfig { tau: 1.5, ..cfg() }.validate().is_err());
        assert!(StoppingConfig { theta_thresh: 50.0, ..cfg() }.validate().is_err());
    }
}
