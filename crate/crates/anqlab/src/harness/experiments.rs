//! Experiment runners: seeded training, hyperparameter sweeps, and the
//! noisy-mixture / limited-data protocols.

use std::fs;
use std::io::Write;
use std::path::Path;

use serde::Serialize;

use crate::data::{collect_dataset, load_dataset, mix_datasets, BehaviorPolicy, Dataset,
    MixtureRecipe};
use crate::env::make_env;
use crate::error::{Error, Result};
use crate::exec::par_map;
use crate::learner::Learner;
use crate::nnet::save_net;
use crate::variants::{run_ablation, AblationReport, Variant, VariantSpec};

use super::metrics::MetricsWriter;
use super::{EvalPoint, ExperimentConfig, RunRecord, SeedRecord};

/// Base of the per-seed evaluation RNG seeds, offset by the training seed.
const EVAL_SEED_BASE: u64 = 0xE0A1;

/// Build the experiment's dataset: load it from a file, or roll expert and
/// random pools and mix them per the data section.
pub fn build_dataset(cfg: &ExperimentConfig) -> Result<Dataset> {
    if let Some(path) = &cfg.data.path {
        return load_dataset(Path::new(path));
    }
    let env_name = cfg
        .env
        .as_deref()
        .ok_or_else(|| Error::invalid("dataset generation needs an env"))?;
    generate_mixture(
        env_name,
        cfg.data.expert_ratio,
        cfg.data.total_size,
        cfg.data.discard_ratio,
        cfg.data.pool_size,
        cfg.data.data_seed,
    )
}

/// Mixture generation used by every protocol: expert and random pools rolled
/// with seeds derived from `data_seed`, then mixed.
pub fn generate_mixture(
    env_name: &str,
    expert_ratio: f64,
    total_size: usize,
    discard_ratio: f64,
    pool_size: usize,
    data_seed: u64,
) -> Result<Dataset> {
    let mut env = make_env(env_name)?;
    let expert = collect_dataset(env.as_mut(), BehaviorPolicy::Expert, pool_size, data_seed)?;
    let random = collect_dataset(
        env.as_mut(),
        BehaviorPolicy::Random,
        pool_size,
        data_seed.wrapping_add(1),
    )?;
    let recipe = MixtureRecipe {
        expert_ratio,
        total_size,
        discard_ratio,
    };
    mix_datasets(&expert, &random, &recipe, data_seed.wrapping_add(2))
}

/// Outcome of `run_train`.
#[derive(Debug, Clone, Serialize)]
pub struct TrainOutcome {
    pub record: RunRecord,
}

/// Train one variant across the config's seeds, writing per-seed metrics
/// CSVs and checkpoints under `out_dir`, plus the run record JSON.
pub fn run_train(cfg: &ExperimentConfig, out_dir: &Path) -> Result<TrainOutcome> {
    cfg.validate()?;
    let dataset = build_dataset(cfg)?;
    let hash = cfg.config_hash()?;
    fs::create_dir_all(out_dir)?;

    let seeds = par_map(cfg.seeds.clone(), |seed| {
        train_seed(cfg, &dataset, seed, out_dir, &hash)
    })
    .into_iter()
    .collect::<Result<Vec<SeedRecord>>>()?;

    let scores: Vec<f64> = seeds.iter().map(|s| s.final_score).collect();
    let record = RunRecord {
        config_hash: hash,
        env: dataset.env_tag.clone(),
        variant: cfg.resolve_variant()?.name(),
        iterations: cfg.resolve_train()?.iterations,
        seeds,
        mean_score: mean(&scores),
        std_score: std(&scores),
    };
    write_json(&out_dir.join("run_record.json"), &record)?;
    Ok(TrainOutcome { record })
}

fn train_seed(
    cfg: &ExperimentConfig,
    dataset: &Dataset,
    seed: u64,
    out_dir: &Path,
    hash: &str,
) -> Result<SeedRecord> {
    let mut train_cfg = cfg.resolve_train()?;
    train_cfg.seed = seed;
    let iterations = train_cfg.iterations;
    let spec = VariantSpec {
        variant: cfg.resolve_variant()?,
        base: train_cfg,
    };
    let seed_dir = out_dir.join(format!("seed_{seed}"));
    fs::create_dir_all(&seed_dir)?;

    let mut learner = spec.build_learner(dataset)?;
    let data = learner.prepare(dataset)?;
    let mut env = make_env(&dataset.env_tag)?;
    let mut writer = MetricsWriter::create(&seed_dir.join("metrics.csv"))?;
    let mut evals = Vec::new();
    for i in 0..iterations {
        let m = learner.train_step(&data)?;
        let at_eval = (i + 1) % cfg.eval.every == 0 || i + 1 == iterations;
        let eval = if at_eval {
            let e = learner.evaluate_policy(
                env.as_mut(),
                cfg.eval.episodes,
                EVAL_SEED_BASE.wrapping_add(seed),
            )?;
            evals.push(EvalPoint {
                iteration: i + 1,
                mean_return: e.mean_return,
                score: e.score,
            });
            Some((e.mean_return, e.score))
        } else {
            None
        };
        writer.write_step(&m, eval)?;
    }
    writer.finish()?;

    let diverged = learner.mean_abs_q(&data, 1024) > learner.divergence_bound();
    let last = evals.last().cloned().unwrap_or(EvalPoint {
        iteration: iterations,
        mean_return: f64::NAN,
        score: f64::NAN,
    });
    save_checkpoints(&learner, &seed_dir, hash, seed, &last)?;
    Ok(SeedRecord {
        seed,
        final_score: last.score,
        final_return: last.mean_return,
        evals,
        diverged,
    })
}

fn save_checkpoints(
    learner: &Learner,
    dir: &Path,
    hash: &str,
    seed: u64,
    last: &EvalPoint,
) -> Result<()> {
    let mut files = Vec::new();
    for (k, net) in learner.critics.iter().enumerate() {
        let name = format!("critic_{k}.anqp");
        save_net(net, &dir.join(&name))?;
        files.push(name);
    }
    save_net(&learner.v, &dir.join("value.anqp"))?;
    files.push("value.anqp".to_string());
    if let Some(mu) = &learner.mu {
        save_net(mu, &dir.join("aux_policy.anqp"))?;
        files.push("aux_policy.anqp".to_string());
    }
    save_net(&learner.policy, &dir.join("policy.anqp"))?;
    files.push("policy.anqp".to_string());

    let manifest = serde_json::json!({
        "config_hash": hash,
        "config": learner.cfg,
        "env": learner.env_tag,
        "seed": seed,
        "iteration": learner.iteration,
        "final_eval": last,
        "state_norm": learner.norm_stats(),
        "files": files,
    });
    write_json(&dir.join("manifest.json"), &manifest)
}

/// Evaluate a saved policy checkpoint: deterministic rollouts of
/// `policy.anqp` with the manifest's normalization stats.
pub fn eval_checkpoint(dir: &Path, episodes: usize, seed: u64) -> Result<crate::learner::EvalOut> {
    use crate::env::{normalized_score, preset};
    use crate::rng::{streams, stream_rng};

    let manifest_text = fs::read_to_string(dir.join("manifest.json"))?;
    let manifest: serde_json::Value = serde_json::from_str(&manifest_text)
        .map_err(|e| Error::invalid(format!("manifest is not valid JSON: {e}")))?;
    let env_tag = manifest["env"]
        .as_str()
        .ok_or_else(|| Error::invalid("manifest lacks an env tag"))?;
    let stats: Option<crate::data::NormStats> = manifest
        .get("state_norm")
        .filter(|v| !v.is_null())
        .map(|v| serde_json::from_value(v.clone()))
        .transpose()
        .map_err(|e| Error::invalid(format!("bad state_norm in manifest: {e}")))?;
    let policy = crate::nnet::load_net(&dir.join("policy.anqp"))?;

    let mut env = make_env(env_tag)?;
    let horizon = env.spec().horizon;
    let state_dim = env.spec().state_dim;
    let mut rng = stream_rng(seed, streams::EVAL);
    let mut total = 0.0;
    let mut z = vec![0.0; state_dim];
    for _ in 0..episodes.max(1) {
        let mut state = env.reset(&mut rng);
        for _ in 0..horizon {
            let action = {
                let obs: &[f64] = match &stats {
                    Some(st) => {
                        st.normalize(&state, &mut z);
                        &z
                    }
                    None => &state,
                };
                policy.forward(obs)?
            };
            let step = env.step(&action);
            total += step.reward;
            state = step.state;
            if step.done {
                break;
            }
        }
    }
    let mean_return = total / episodes.max(1) as f64;
    let p = preset(env_tag)?;
    let score = normalized_score(mean_return, p.random_return, p.expert_return)?;
    Ok(crate::learner::EvalOut { mean_return, score })
}

/// Which hyperparameter a sweep walks.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SweepAxis {
    Lambda,
    Alpha,
}

/// Lambda or alpha sweep on a fixed dataset; produces the ablation CSV and a
/// JSON summary under `out_dir`.
pub fn run_sweep(cfg: &ExperimentConfig, axis: SweepAxis, out_dir: &Path) -> Result<AblationReport> {
    cfg.validate()?;
    let values = match axis {
        SweepAxis::Lambda => &cfg.sweep.lambdas,
        SweepAxis::Alpha => &cfg.sweep.alphas,
    };
    if values.is_empty() {
        return Err(Error::invalid("sweep values must be non-empty"));
    }
    let dataset = build_dataset(cfg)?;
    let base = cfg.resolve_train()?;
    let grid: Vec<(VariantSpec, Vec<u64>)> = values
        .iter()
        .map(|&v| {
            let mut train = base.clone();
            match axis {
                SweepAxis::Lambda => train.lambda = v,
                SweepAxis::Alpha => train.alpha = v,
            }
            (
                VariantSpec {
                    variant: Variant::AnqDefault,
                    base: train,
                },
                cfg.seeds.clone(),
            )
        })
        .collect();
    let report = run_ablation(&grid, &dataset, cfg.eval.episodes)?;
    fs::create_dir_all(out_dir)?;
    write_ablation_csv(&report, &out_dir.join("sweep.csv"))?;
    write_json(&out_dir.join("sweep_summary.json"), &report.summaries)?;
    Ok(report)
}

/// One row of a data-composition protocol.
#[derive(Debug, Clone, Serialize)]
pub struct ProtocolRow {
    /// Expert ratio or discard ratio, depending on the protocol.
    pub x: f64,
    pub variant: String,
    pub lambda: f64,
    pub alpha: f64,
    pub seed: u64,
    pub final_score: f64,
    pub mean_q: f64,
    pub diverged: bool,
    pub error: Option<String>,
}

#[derive(Debug, Clone, Serialize)]
pub struct ProtocolReport {
    pub protocol: String,
    pub x_name: String,
    pub rows: Vec<ProtocolRow>,
}

impl ProtocolReport {
    /// Mean final score over seeds for one `(x, variant)` cell.
    pub fn mean_score(&self, x: f64, variant: &str) -> f64 {
        let scores: Vec<f64> = self
            .rows
            .iter()
            .filter(|r| r.x == x && r.variant == variant && r.error.is_none())
            .map(|r| r.final_score)
            .collect();
        mean(&scores)
    }

    /// Mean score for one `(x, lambda)` cell of the default variant.
    pub fn mean_score_at_lambda(&self, x: f64, lambda: f64) -> f64 {
        let scores: Vec<f64> = self
            .rows
            .iter()
            .filter(|r| r.x == x && r.lambda == lambda && r.error.is_none())
            .map(|r| r.final_score)
            .collect();
        mean(&scores)
    }
}

/// Noisy-data protocol: for every expert ratio, build the mixture and train
/// the default algorithm and the sample-constraint form across seeds.
/// When `sweep.alphas` is non-empty, additional default-variant cells sweep
/// the radius adaptiveness at each ratio.
pub fn run_noisy_mixture(cfg: &ExperimentConfig, out_dir: &Path) -> Result<ProtocolReport> {
    cfg.validate()?;
    if cfg.sweep.ratios.is_empty() {
        return Err(Error::invalid("noisy-mixture protocol needs sweep.ratios"));
    }
    let base = cfg.resolve_train()?;
    let mut rows = Vec::new();
    for &ratio in &cfg.sweep.ratios {
        let dataset = generate_mixture(
            cfg.env.as_deref().expect("validated"),
            ratio,
            cfg.data.total_size,
            cfg.data.discard_ratio,
            cfg.data.pool_size,
            cfg.data.data_seed,
        )?;
        let mut grid: Vec<(VariantSpec, Vec<u64>)> = vec![
            (
                VariantSpec {
                    variant: Variant::AnqDefault,
                    base: base.clone(),
                },
                cfg.seeds.clone(),
            ),
            (
                VariantSpec {
                    variant: Variant::MuZero,
                    base: base.clone(),
                },
                cfg.seeds.clone(),
            ),
        ];
        for &alpha in &cfg.sweep.alphas {
            if alpha == base.alpha {
                continue;
            }
            let mut train = base.clone();
            train.alpha = alpha;
            grid.push((
                VariantSpec {
                    variant: Variant::AnqDefault,
                    base: train,
                },
                cfg.seeds.clone(),
            ));
        }
        let report = run_ablation(&grid, &dataset, cfg.eval.episodes)?;
        for cell in report.cells {
            rows.push(ProtocolRow {
                x: ratio,
                variant: cell.variant,
                lambda: cell.lambda,
                alpha: cell.alpha,
                seed: cell.seed,
                final_score: cell.final_score,
                mean_q: cell.mean_q,
                diverged: cell.diverged,
                error: cell.error,
            });
        }
    }
    let report = ProtocolReport {
        protocol: "noisy_mixture".to_string(),
        x_name: "expert_ratio".to_string(),
        rows,
    };
    write_protocol(&report, out_dir)?;
    Ok(report)
}

/// Limited-data protocol: train on reduced datasets at every discard ratio.
/// When `sweep.lambdas` is non-empty, one default-variant cell runs per
/// lambda; otherwise the config's lambda is used alone.
pub fn run_limited_data(cfg: &ExperimentConfig, out_dir: &Path) -> Result<ProtocolReport> {
    cfg.validate()?;
    if cfg.sweep.discards.is_empty() {
        return Err(Error::invalid("limited-data protocol needs sweep.discards"));
    }
    let base = cfg.resolve_train()?;
    let lambdas: Vec<f64> = if cfg.sweep.lambdas.is_empty() {
        vec![base.lambda]
    } else {
        cfg.sweep.lambdas.clone()
    };
    let mut rows = Vec::new();
    for &discard in &cfg.sweep.discards {
        let dataset = generate_mixture(
            cfg.env.as_deref().expect("validated"),
            cfg.data.expert_ratio,
            cfg.data.total_size,
            discard,
            cfg.data.pool_size,
            cfg.data.data_seed,
        )?;
        let grid: Vec<(VariantSpec, Vec<u64>)> = lambdas
            .iter()
            .map(|&lambda| {
                let mut train = base.clone();
                train.lambda = lambda;
                (
                    VariantSpec {
                        variant: Variant::AnqDefault,
                        base: train,
                    },
                    cfg.seeds.clone(),
                )
            })
            .collect();
        let report = run_ablation(&grid, &dataset, cfg.eval.episodes)?;
        for cell in report.cells {
            rows.push(ProtocolRow {
                x: discard,
                variant: cell.variant,
                lambda: cell.lambda,
                alpha: cell.alpha,
                seed: cell.seed,
                final_score: cell.final_score,
                mean_q: cell.mean_q,
                diverged: cell.diverged,
                error: cell.error,
            });
        }
    }
    let report = ProtocolReport {
        protocol: "limited_data".to_string(),
        x_name: "discard_ratio".to_string(),
        rows,
    };
    write_protocol(&report, out_dir)?;
    Ok(report)
}

fn write_protocol(report: &ProtocolReport, out_dir: &Path) -> Result<()> {
    fs::create_dir_all(out_dir)?;
    let mut csv = String::new();
    csv.push_str(&format!(
        "{},variant,lambda,alpha,seed,final_score,mean_q,diverged\n",
        report.x_name
    ));
    for r in &report.rows {
        csv.push_str(&format!(
            "{},{},{},{},{},{},{},{}\n",
            r.x, r.variant, r.lambda, r.alpha, r.seed, r.final_score, r.mean_q, r.diverged
        ));
    }
    let mut f = fs::File::create(out_dir.join(format!("{}.csv", report.protocol)))?;
    f.write_all(csv.as_bytes())?;
    write_json(
        &out_dir.join(format!("{}.json", report.protocol)),
        report,
    )?;
    Ok(())
}

fn write_ablation_csv(report: &AblationReport, path: &Path) -> Result<()> {
    let mut csv = String::from("variant,lambda,alpha,seed,final_score,mean_q,diverged\n");
    for c in &report.cells {
        csv.push_str(&format!(
            "{},{},{},{},{},{},{}\n",
            c.variant, c.lambda, c.alpha, c.seed, c.final_score, c.mean_q, c.diverged
        ));
    }
    fs::write(path, csv)?;
    Ok(())
}

pub(crate) fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let text = serde_json::to_string_pretty(value)
        .map_err(|e| Error::invalid(format!("JSON serialization failed: {e}")))?;
    fs::write(path, text)?;
    Ok(())
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
    use tempfile::tempdir;

    fn tiny_train_toml() -> String {
        r#"
experiment = "train"
env = "chain_tabular"
seeds = [0, 1]

[data]
expert_ratio = 0.5
total_size = 400
pool_size = 400

[train]
iterations = 40
hidden_dims = [12, 12]
batch_size = 16

[eval]
every = 20
episodes = 2
"#
        .to_string()
    }

    #[test]
    fn train_writes_metrics_checkpoints_and_record() {
        let cfg = ExperimentConfig::parse(&tiny_train_toml()).unwrap();
        let dir = tempdir().unwrap();
        let out = run_train(&cfg, dir.path()).unwrap();
        assert_eq!(out.record.seeds.len(), 2);
        assert!(dir.path().join("run_record.json").exists());
        for seed in [0u64, 1] {
            let sd = dir.path().join(format!("seed_{seed}"));
            assert!(sd.join("metrics.csv").exists());
            assert!(sd.join("policy.anqp").exists());
            assert!(sd.join("value.anqp").exists());
            assert!(sd.join("manifest.json").exists());
            let table = super::super::read_metrics_csv(&sd.join("metrics.csv")).unwrap();
            assert_eq!(table.rows.len(), 40);
            // Eval columns filled exactly at the schedule.
            let col = table.column("eval_score").unwrap();
            let filled: Vec<usize> = table
                .rows
                .iter()
                .enumerate()
                .filter(|(_, r)| r[col].is_some())
                .map(|(i, _)| i)
                .collect();
            assert_eq!(filled, vec![19, 39]);
        }
    }

    #[test]
    fn rerun_is_bit_identical() {
        let cfg = ExperimentConfig::parse(&tiny_train_toml()).unwrap();
        let dir_a = tempdir().unwrap();
        let dir_b = tempdir().unwrap();
        run_train(&cfg, dir_a.path()).unwrap();
        run_train(&cfg, dir_b.path()).unwrap();
        for seed in [0u64, 1] {
            let a = std::fs::read(dir_a.path().join(format!("seed_{seed}/metrics.csv"))).unwrap();
            let b = std::fs::read(dir_b.path().join(format!("seed_{seed}/metrics.csv"))).unwrap();
            assert_eq!(a, b, "metrics diverged for seed {seed}");
        }
        let ra = std::fs::read(dir_a.path().join("run_record.json")).unwrap();
        let rb = std::fs::read(dir_b.path().join("run_record.json")).unwrap();
        assert_eq!(ra, rb);
    }

    #[test]
    fn limited_data_discard_zero_matches_base_dataset() {
        let cfg = ExperimentConfig::parse(&tiny_train_toml()).unwrap();
        let base = build_dataset(&cfg).unwrap();
        let reduced = generate_mixture("chain_tabular", 0.5, 400, 0.0, 400, 1).unwrap();
        assert_eq!(base, reduced);
        let smaller = generate_mixture("chain_tabular", 0.5, 400, 0.9, 400, 1).unwrap();
        assert_eq!(smaller.len(), 40);
    }
}
