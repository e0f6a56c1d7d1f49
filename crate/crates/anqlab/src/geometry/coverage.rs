//! Sample-size bound and Monte Carlo coverage trials.

use serde::Serialize;

use crate::error::{Error, Result};
use crate::exec::par_map;
use crate::rng::{streams, stream_rng};

use super::{hausdorff_distance, BallUnion, SupportSpec};

/// Minimal sample count `ceil((log N + log(1/delta)) / (c0 (eps/2)^d))`
/// guaranteeing eps-coverage with probability at least `1 - delta`.
pub fn required_n(
    covering_n: usize,
    c0: f64,
    epsilon: f64,
    dim: usize,
    delta: f64,
) -> Result<u64> {
    if covering_n == 0 {
        return Err(Error::invalid("covering number must be >= 1"));
    }
    if !(c0 > 0.0) || !(epsilon > 0.0) || dim == 0 {
        return Err(Error::invalid("c0, epsilon, and dim must be positive"));
    }
    if !(delta > 0.0 && delta < 1.0) {
        return Err(Error::invalid(format!("delta must be in (0,1), got {delta}")));
    }
    let denom = c0 * (epsilon / 2.0).powi(dim as i32);
    let raw = ((covering_n as f64).ln() + (1.0 / delta).ln()) / denom;
    Ok(raw.ceil().max(1.0) as u64)
}

#[derive(Debug, Clone, Serialize)]
pub struct CoverageReport {
    pub epsilon: f64,
    pub n: u64,
    pub trials: u32,
    pub successes: u32,
    pub frequency: f64,
    /// 95% Wilson interval on the success probability.
    pub ci_low: f64,
    pub ci_high: f64,
    /// Grid slack added to the pass threshold, one grid diagonal.
    pub grid_tolerance: f64,
}

/// Repeatedly sample `n` i.i.d. points from the support, form the union of
/// `epsilon`-balls, and test `d_H(S, U) <= epsilon` (up to grid tolerance).
/// Trials own independent RNG streams derived from `(seed, trial index)` and
/// run in parallel.
pub fn coverage_trial(
    support: &SupportSpec,
    epsilon: f64,
    n: u64,
    trials: u32,
    grid_step: f64,
    seed: u64,
) -> Result<CoverageReport> {
    support.validate()?;
    if n == 0 {
        return Err(Error::invalid("need at least one sample per trial"));
    }
    if trials == 0 {
        return Err(Error::invalid("need at least one trial"));
    }
    if epsilon > 2.0 * support.r0() + 1e-12 {
        return Err(Error::invalid(format!(
            "epsilon {epsilon} exceeds 2 r0 = {}; the coverage guarantee does not apply",
            2.0 * support.r0()
        )));
    }
    let grid_tolerance = grid_step * (support.dim() as f64).sqrt();

    let outcomes = par_map((0..trials).collect::<Vec<_>>(), |t| {
        let mut rng = stream_rng(seed, streams::TRIAL_BASE + t as u64);
        let centers: Vec<Vec<f64>> = (0..n).map(|_| support.sample(&mut rng)).collect();
        let union = BallUnion::uniform(centers, epsilon).expect("n >= 1, epsilon > 0");
        let est = hausdorff_distance(support, &union, grid_step)
            .expect("grid step validated by caller");
        est.value <= epsilon + est.grid_tolerance
    });
    let successes = outcomes.iter().filter(|ok| **ok).count() as u32;
    let frequency = successes as f64 / trials as f64;
    let (ci_low, ci_high) = wilson_interval(successes, trials, 1.96);
    Ok(CoverageReport {
        epsilon,
        n,
        trials,
        successes,
        frequency,
        ci_low,
        ci_high,
        grid_tolerance,
    })
}

/// Wilson score interval for a binomial proportion.
pub fn wilson_interval(successes: u32, trials: u32, z: f64) -> (f64, f64) {
    if trials == 0 {
        return (0.0, 1.0);
    }
    let n = trials as f64;
    let p = successes as f64 / n;
    let z2 = z * z;
    let denom = 1.0 + z2 / n;
    let center = (p + z2 / (2.0 * n)) / denom;
    let half = (z / denom) * (p * (1.0 - p) / n + z2 / (4.0 * n * n)).sqrt();
    ((center - half).max(0.0), (center + half).min(1.0))
}
