//! Hypothesize-and-verify outlier rejection around [`crate::model::fit`].
//!
//! Each iteration draws its minimal sample from a ChaCha stream selected by
//! the iteration index, so the sample for iteration `i` depends only on
//! `(seed, i)`. Hypotheses can therefore be evaluated in any order without
//! changing the result.

use rand::seq::index;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{fit_subset, residual, CorrectionModel, FitReport, ModelKind, RANK_DEFICIENT_CONDITION};
use crate::tiepoints::TiePoint;

/// Minimal samples whose scaled design matrix is worse conditioned than this
/// are discarded.
pub const DEGENERATE_SAMPLE_CONDITION: f64 = 1e8;

/// Hard cap on refit/re-classify rounds after `refit_rounds` when the inlier
/// set has not yet settled.
const MAX_SETTLE_ROUNDS: usize = 20;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct RansacConfig {
    /// Inlier residual bound in working-resolution pixels.
    pub inlier_threshold_px: f64,
    pub max_iterations: usize,
    /// Target probability of drawing at least one all-inlier sample.
    pub confidence: f64,
    pub seed: u64,
    pub refit_rounds: usize,
}

impl Default for RansacConfig {
    fn default() -> Self {
        Self {
            inlier_threshold_px: 1.0,
            max_iterations: 2000,
            confidence: 0.999,
            seed: 0,
            refit_rounds: 3,
        }
    }
}

impl RansacConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.inlier_threshold_px > 0.0 && self.inlier_threshold_px.is_finite()) {
            return Err(Error::invalid("inlier threshold must be positive"));
        }
        if !(self.confidence > 0.0 && self.confidence < 1.0) {
            return Err(Error::invalid("confidence must lie strictly between 0 and 1"));
        }
        if self.max_iterations == 0 {
            return Err(Error::invalid("max_iterations must be at least 1"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RobustFitResult {
    pub model: CorrectionModel,
    pub inlier_mask: Vec<bool>,
    pub report: FitReport,
    /// Hypotheses drawn, including rejected degenerate samples.
    pub iterations_used: usize,
    /// Size of the best hypothesis consensus before refinement.
    pub consensus_size: usize,
    /// Inlier RMSE after each refit round, in order.
    pub refit_rmse: Vec<f64>,
}

/// Iterations needed to draw one all-inlier sample of size `k` with
/// probability `confidence` when a fraction `ratio` of points are inliers.
pub fn adaptive_iterations(confidence: f64, ratio: f64, k: usize) -> usize {
    if ratio <= 0.0 {
        return usize::MAX;
    }
    if ratio >= 1.0 {
        return 1;
    }
    let p_good = ratio.powi(k as i32);
    let denom = (1.0 - p_good).ln();
    if denom >= 0.0 || !denom.is_finite() {
        return usize::MAX;
    }
    let n = ((1.0 - confidence).ln() / denom).ceil();
    if n.is_finite() && n < usize::MAX as f64 {
        (n as usize).max(1)
    } else {
        usize::MAX
    }
}

/// Minimal sample for iteration `iteration`.
pub fn minimal_sample(seed: u64, iteration: u64, n: usize, k: usize) -> Vec<usize> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(iteration);
    let mut s = index::sample(&mut rng, n, k).into_vec();
    s.sort_unstable();
    s
}

struct Consensus {
    inliers: Vec<bool>,
    count: usize,
    rmse: f64,
}

fn classify(model: &CorrectionModel, tps: &[TiePoint], threshold: f64) -> Consensus {
    let t2 = threshold * threshold;
    let mut inliers = Vec::with_capacity(tps.len());
    let mut sum = 0.0;
    let mut count = 0;
    for tp in tps {
        let (dx, dy) = residual(model, tp);
        let d2 = dx * dx + dy * dy;
        let keep = d2 <= t2;
        if keep {
            sum += d2;
            count += 1;
        }
        inliers.push(keep);
    }
    let rmse = if count > 0 { (sum / count as f64).sqrt() } else { f64::INFINITY };
    Consensus { inliers, count, rmse }
}

fn indices(mask: &[bool]) -> Vec<usize> {
    mask.iter().enumerate().filter_map(|(i, &m)| m.then_some(i)).collect()
}

pub fn ransac_fit(kind: ModelKind, tps: &[TiePoint], cfg: &RansacConfig) -> Result<RobustFitResult> {
    cfg.validate()?;
    let k = kind.params_per_axis();
    let n = tps.len();
    if n < k {
        return Err(Error::InsufficientPoints { needed: k, got: n });
    }
    let floor = k + 2;
    let threshold = cfg.inlier_threshold_px;

    let mut best: Option<Consensus> = None;
    let mut bound = cfg.max_iterations;
    let mut iteration = 0usize;
    while iteration < bound {
        let sample = minimal_sample(cfg.seed, iteration as u64, n, k);
        iteration += 1;
        let Ok(hypothesis) = fit_subset(kind, tps, Some(&sample), DEGENERATE_SAMPLE_CONDITION) else {
            continue;
        };
        let c = classify(&hypothesis, tps, threshold);
        let better = match &best {
            None => true,
            Some(b) => c.count > b.count || (c.count == b.count && c.rmse < b.rmse),
        };
        if better {
            let ratio = c.count as f64 / n as f64;
            bound = adaptive_iterations(cfg.confidence, ratio, k).clamp(iteration, cfg.max_iterations);
            best = Some(c);
        }
    }

    let best = best.ok_or(Error::NoConsensus { best: 0, needed: floor })?;
    if best.count < floor {
        return Err(Error::NoConsensus {
            best: best.count,
            needed: floor,
        });
    }
    let consensus_size = best.count;

    // Refit on the consensus, re-classify, repeat until the set is stable.
    let mut current = best.inliers;
    let mut refit_rmse = Vec::new();
    let mut model = None;
    for round in 0..cfg.refit_rounds.max(1) + MAX_SETTLE_ROUNDS {
        let idx = indices(&current);
        if idx.len() < floor {
            return Err(Error::NoConsensus {
                best: idx.len(),
                needed: floor,
            });
        }
        let refit = fit_subset(kind, tps, Some(&idx), RANK_DEFICIENT_CONDITION)?;
        let c = classify(&refit, tps, threshold);
        if round < cfg.refit_rounds {
            refit_rmse.push(c.rmse);
        }
        let stable = c.inliers == current;
        model = Some(refit);
        if stable {
            break;
        }
        current = c.inliers;
    }
    let model = model.expect("at least one refit round runs");
    let final_set = classify(&model, tps, threshold);
    if final_set.count < floor {
        return Err(Error::NoConsensus {
            best: final_set.count,
            needed: floor,
        });
    }
    let report = FitReport::new(&model, tps, &final_set.inliers)?;
    Ok(RobustFitResult {
        model,
        inlier_mask: final_set.inliers,
        report,
        iterations_used: iteration,
        consensus_size,
        refit_rmse,
    })
}
