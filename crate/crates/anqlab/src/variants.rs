//! Constraint variants and ablation grids.
//!
//! All variants share the learner skeleton and differ only in what stands in
//! for the auxiliary policy and how the penalty weight is modulated: the
//! default adaptive form, perturbations pinned to zero, fresh Gaussian noise,
//! a uniform radius, no penalty at all, or an arbitrary radius hook.

use serde::Serialize;

use crate::data::Dataset;
use crate::env::make_env;
use crate::error::{Error, Result};
use crate::exec::par_map;
use crate::learner::{Learner, MuMode, RadiusMode, TrainConfig};

/// The comparison set.
#[derive(Debug, Clone)]
pub enum Variant {
    AnqDefault,
    /// Sample-constraint form: dataset actions are used as-is.
    MuZero,
    /// Perturbations replaced by fresh clipped Gaussian noise, untrained.
    /// Defaults: sigma = 0.2 * bound, clip = 0.5 * bound.
    MuGaussianNoise { sigma: f64, clip: f64 },
    /// Fixed neighborhood radius (alpha = 0).
    UniformRadius,
    /// No penalty (lambda = 0): unconstrained inner ascent.
    LambdaZero,
    /// Arbitrary radius modulation `f(s, a, advantage)`.
    CustomRadius(RadiusMode),
}

impl Variant {
    pub fn name(&self) -> String {
        match self {
            Variant::AnqDefault => "anq_default".to_string(),
            Variant::MuZero => "mu_zero".to_string(),
            Variant::MuGaussianNoise { .. } => "mu_gaussian_noise".to_string(),
            Variant::UniformRadius => "uniform_radius".to_string(),
            Variant::LambdaZero => "lambda_zero".to_string(),
            Variant::CustomRadius(mode) => mode.tag(),
        }
    }

    /// Default noise variant for an environment's action bound.
    pub fn gaussian_noise_default(action_bound: f64) -> Variant {
        Variant::MuGaussianNoise {
            sigma: 0.2 * action_bound,
            clip: 0.5 * action_bound,
        }
    }
}

/// A variant plus the base configuration it overrides.
#[derive(Debug, Clone)]
pub struct VariantSpec {
    pub variant: Variant,
    pub base: TrainConfig,
}

impl VariantSpec {
    /// Resolve the variant into the effective config and auxiliary-policy
    /// mode, then build the learner.
    pub fn build_learner(&self, dataset: &Dataset) -> Result<Learner> {
        let mut cfg = self.base.clone();
        let mu_mode = match &self.variant {
            Variant::AnqDefault => MuMode::Learned,
            Variant::MuZero => MuMode::Zero,
            Variant::MuGaussianNoise { sigma, clip } => {
                if !(*sigma > 0.0) || !(*clip > 0.0) {
                    return Err(Error::invalid("noise variant needs positive sigma and clip"));
                }
                MuMode::GaussianNoise {
                    sigma: *sigma,
                    clip: *clip,
                }
            }
            Variant::UniformRadius => {
                cfg.alpha = 0.0;
                cfg.radius_mode = RadiusMode::Uniform;
                MuMode::Learned
            }
            Variant::LambdaZero => {
                cfg.lambda = 0.0;
                MuMode::Learned
            }
            Variant::CustomRadius(mode) => {
                cfg.radius_mode = mode.clone();
                MuMode::Learned
            }
        };
        Learner::new(cfg, dataset, mu_mode)
    }
}

/// Seed of the per-cell final evaluation.
pub const CELL_EVAL_SEED: u64 = 0x5EED_E7A1;

/// One trained grid cell.
#[derive(Debug, Clone, Serialize)]
pub struct CellResult {
    pub variant: String,
    pub lambda: f64,
    pub alpha: f64,
    pub seed: u64,
    pub final_score: f64,
    pub final_return: f64,
    pub mean_q: f64,
    pub diverged: bool,
    /// Present when the cell aborted on a numeric failure.
    pub error: Option<String>,
}

/// Aggregate over seeds for one variant setting.
#[derive(Debug, Clone, Serialize)]
pub struct CellSummary {
    pub variant: String,
    pub lambda: f64,
    pub alpha: f64,
    pub seeds: usize,
    pub mean_score: f64,
    pub std_score: f64,
    pub mean_q: f64,
    pub std_q: f64,
    pub diverged_seeds: usize,
    pub failed_seeds: usize,
}

#[derive(Debug, Clone, Serialize)]
pub struct AblationReport {
    pub cells: Vec<CellResult>,
    pub summaries: Vec<CellSummary>,
}

/// Train every `(spec, seed)` cell on the dataset and aggregate. Cells run in
/// parallel; numeric failures and divergence are recorded per cell and the
/// grid keeps going.
pub fn run_ablation(
    grid: &[(VariantSpec, Vec<u64>)],
    dataset: &Dataset,
    eval_episodes: usize,
) -> Result<AblationReport> {
    if grid.is_empty() || grid.iter().any(|(_, seeds)| seeds.is_empty()) {
        return Err(Error::invalid("ablation grid must be non-empty"));
    }
    let mut jobs = Vec::new();
    for (spec, seeds) in grid {
        for &seed in seeds {
            jobs.push((spec.clone(), seed));
        }
    }
    let cells = par_map(jobs, |(spec, seed)| run_cell(&spec, seed, dataset, eval_episodes));

    let mut summaries: Vec<CellSummary> = Vec::new();
    for (spec, seeds) in grid {
        let name = spec.variant.name();
        let lambda = effective_lambda(spec);
        let alpha = effective_alpha(spec);
        let mine: Vec<&CellResult> = cells
            .iter()
            .filter(|c| c.variant == name && c.lambda == lambda && c.alpha == alpha)
            .collect();
        let ok: Vec<&&CellResult> = mine.iter().filter(|c| c.error.is_none()).collect();
        let scores: Vec<f64> = ok.iter().map(|c| c.final_score).collect();
        let qs: Vec<f64> = ok.iter().map(|c| c.mean_q).collect();
        summaries.push(CellSummary {
            variant: name,
            lambda,
            alpha,
            seeds: seeds.len(),
            mean_score: mean(&scores),
            std_score: std(&scores),
            mean_q: mean(&qs),
            std_q: std(&qs),
            diverged_seeds: mine.iter().filter(|c| c.diverged).count(),
            failed_seeds: mine.len() - ok.len(),
        });
    }
    Ok(AblationReport { cells, summaries })
}

fn effective_lambda(spec: &VariantSpec) -> f64 {
    match spec.variant {
        Variant::LambdaZero => 0.0,
        _ => spec.base.lambda,
    }
}

fn effective_alpha(spec: &VariantSpec) -> f64 {
    match spec.variant {
        Variant::UniformRadius => 0.0,
        _ => spec.base.alpha,
    }
}

fn run_cell(
    spec: &VariantSpec,
    seed: u64,
    dataset: &Dataset,
    eval_episodes: usize,
) -> CellResult {
    let mut result = CellResult {
        variant: spec.variant.name(),
        lambda: effective_lambda(spec),
        alpha: effective_alpha(spec),
        seed,
        final_score: f64::NAN,
        final_return: f64::NAN,
        mean_q: f64::NAN,
        diverged: false,
        error: None,
    };
    let mut spec = spec.clone();
    spec.base.seed = seed;
    let outcome = (|| -> Result<()> {
        let mut learner = spec.build_learner(dataset)?;
        let data = learner.prepare(dataset)?;
        let bound = learner.divergence_bound();
        for _ in 0..spec.base.iterations {
            learner.train_step(&data)?;
        }
        let q = learner.mean_abs_q(&data, 1024);
        result.diverged = q > bound;
        result.mean_q = learner.mean_min_q(&data, 1024);
        let mut env = make_env(&dataset.env_tag)?;
        let eval = learner.evaluate_policy(env.as_mut(), eval_episodes, CELL_EVAL_SEED)?;
        result.final_score = eval.score;
        result.final_return = eval.mean_return;
        Ok(())
    })();
    if let Err(e) = outcome {
        result.error = Some(e.to_string());
    }
    result
}

fn mean(xs: &[f64]) -> f64 {
    if xs.is_empty() {
        return f64::NAN;
    }
    xs.iter().sum::<f64>() / xs.len() as f64
}

fn std(xs: &[f64]) -> f64 {
    if xs.len() < 2 {
        return 0.0;
    }
    let m = mean(xs);
    (xs.iter().map(|x| (x - m) * (x - m)).sum::<f64>() / xs.len() as f64).sqrt()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::{collect_dataset, BehaviorPolicy};
    use crate::learner::losses::penalty_weight;
    use std::sync::Arc;

    fn tiny_cfg(tag: &str) -> TrainConfig {
        let mut cfg = TrainConfig::for_env(tag).unwrap();
        cfg.hidden_dims = vec![16, 16];
        cfg.batch_size = 16;
        cfg.iterations = 30;
        cfg
    }

    #[test]
    fn empty_grid_is_an_input_error() {
        let mut env = make_env("reacher_1d").unwrap();
        let ds = collect_dataset(env.as_mut(), BehaviorPolicy::Random, 200, 1).unwrap();
        assert!(run_ablation(&[], &ds, 2).is_err());
    }

    #[test]
    fn uniform_radius_pins_weight_to_lambda() {
        // With alpha = 0 the penalty weight is identically 1, so the
        // coefficient is lambda for every sample.
        let w = penalty_weight(&RadiusMode::Uniform, 0.0, (0.01, 30.0), &[0.2], &[0.1], 3.7);
        assert_eq!(w, 1.0);
    }

    #[test]
    fn custom_radius_reproduces_default_weights_bitwise() {
        let alpha = 1.0;
        let clip = (0.01, 10.0);
        let custom = RadiusMode::Custom {
            label: "exp_neg_adv".to_string(),
            f: Arc::new(move |_s: &[f64], _a: &[f64], adv: f64| (-(alpha * adv)).exp()),
        };
        for adv in [-30.0, -2.0, 0.0, 0.5, 1.7, 400.0] {
            let d = penalty_weight(
                &RadiusMode::AdaptiveExpAdvantage,
                alpha,
                clip,
                &[],
                &[],
                adv,
            );
            let c = penalty_weight(&custom, alpha, clip, &[], &[], adv);
            assert_eq!(d.to_bits(), c.to_bits());
        }
    }

    #[test]
    fn mu_zero_builds_without_aux_nets_and_noise_builds_unlearned() {
        let mut env = make_env("reacher_1d").unwrap();
        let ds = collect_dataset(env.as_mut(), BehaviorPolicy::Medium, 300, 2).unwrap();
        let spec = VariantSpec {
            variant: Variant::MuZero,
            base: tiny_cfg("reacher_1d"),
        };
        let learner = spec.build_learner(&ds).unwrap();
        assert!(learner.mu.is_none());

        let spec = VariantSpec {
            variant: Variant::gaussian_noise_default(1.0),
            base: tiny_cfg("reacher_1d"),
        };
        let learner = spec.build_learner(&ds).unwrap();
        assert!(learner.mu.is_none());
    }

    #[test]
    fn small_grid_runs_and_aggregates() {
        let mut env = make_env("reacher_1d").unwrap();
        let ds = collect_dataset(env.as_mut(), BehaviorPolicy::Medium, 400, 3).unwrap();
        let grid = vec![
            (
                VariantSpec {
                    variant: Variant::AnqDefault,
                    base: tiny_cfg("reacher_1d"),
                },
                vec![0, 1],
            ),
            (
                VariantSpec {
                    variant: Variant::MuZero,
                    base: tiny_cfg("reacher_1d"),
                },
                vec![0],
            ),
        ];
        let report = run_ablation(&grid, &ds, 2).unwrap();
        assert_eq!(report.cells.len(), 3);
        assert_eq!(report.summaries.len(), 2);
        assert!(report.cells.iter().all(|c| c.error.is_none()));
        assert_eq!(report.summaries[0].seeds, 2);
        assert!(report.summaries[0].std_score >= 0.0);
    }

    #[test]
    fn divergence_flag_tracks_the_threshold_exactly() {
        // The flag fires iff mean |Q| over the probe batch exceeds the bound.
        let mut env = make_env("chain_tabular").unwrap();
        let ds = collect_dataset(env.as_mut(), BehaviorPolicy::Random, 300, 4).unwrap();
        let spec = VariantSpec {
            variant: Variant::AnqDefault,
            base: tiny_cfg("chain_tabular"),
        };
        let mut learner = spec.build_learner(&ds).unwrap();
        let data = learner.prepare(&ds).unwrap();
        let bound = learner.divergence_bound();
        let q = learner.mean_abs_q(&data, 256);
        assert_eq!(q > bound, false, "fresh nets cannot exceed {bound}");
        // Push one critic's bias sky-high; the min-ensemble stays finite but
        // negative-shifted critics drive |Q| up only if all critics move.
        for k in 0..learner.critics.len() {
            let last = learner.critics[k].layers().len() - 1;
            learner.critics[k].layers_mut()[last].b[0] = -(bound + 1.0) * 2.0;
        }
        let q = learner.mean_abs_q(&data, 256);
        assert!(q > bound);
    }
}
