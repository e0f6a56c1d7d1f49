//! Experiment orchestration: reproducible configs, seeded runs, metrics
//! persistence, and the verification suites.

mod experiments;
mod metrics;
mod plots;
mod verify;

pub use experiments::{
    build_dataset, eval_checkpoint, generate_mixture, run_limited_data, run_noisy_mixture,
    run_sweep, run_train, ProtocolReport, ProtocolRow, SweepAxis, TrainOutcome,
};
pub use metrics::{read_metrics_csv, MetricsTable, MetricsWriter};
pub use plots::emit_plots;
pub use verify::{verify_geometry, verify_theory, GeometryReport, TheoryReport};

use std::path::PathBuf;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::env::preset;
use crate::error::{Error, Result};
use crate::learner::TrainConfig;
use crate::variants::Variant;

/// Which protocol a config file drives.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ExperimentKind {
    Train,
    SweepLambda,
    SweepAlpha,
    NoisyMixture,
    LimitedData,
    VerifyTheory,
    VerifyGeometry,
}

/// Dataset source: an existing file, or a generated expert/random mixture.
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(deny_unknown_fields, default)]
pub struct DataSection {
    /// Load this dataset file instead of generating one.
    pub path: Option<String>,
    pub expert_ratio: f64,
    pub total_size: usize,
    pub discard_ratio: f64,
    /// Seed for rollouts and mixing.
    pub data_seed: u64,
    /// Transitions collected per behavior pool before mixing.
    pub pool_size: usize,
}

impl Default for DataSection {
    fn default() -> Self {
        DataSection {
            path: None,
            expert_ratio: 1.0,
            total_size: 10_000,
            discard_ratio: 0.0,
            data_seed: 1,
            pool_size: 10_000,
        }
    }
}

/// Optional overrides of the per-environment training defaults.
#[derive(Debug, Clone, Default, Serialize, Deserialize, PartialEq)]
#[serde(deny_unknown_fields, default)]
pub struct TrainSection {
    pub variant: Option<String>,
    pub lambda: Option<f64>,
    pub alpha: Option<f64>,
    pub tau: Option<f64>,
    pub beta: Option<f64>,
    pub gamma: Option<f64>,
    pub xi: Option<f64>,
    pub lr: Option<f64>,
    pub mu_lr: Option<f64>,
    pub batch_size: Option<usize>,
    pub iterations: Option<u64>,
    pub policy_update_freq: Option<u64>,
    pub n_critics: Option<usize>,
    pub hidden_dims: Option<Vec<usize>>,
    pub adv_weight_clip: Option<(f64, f64)>,
    pub policy_weight_clip: Option<(f64, f64)>,
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(deny_unknown_fields, default)]
pub struct EvalSection {
    /// Evaluate every this many iterations.
    pub every: u64,
    pub episodes: usize,
}

impl Default for EvalSection {
    fn default() -> Self {
        EvalSection {
            every: 5_000,
            episodes: 10,
        }
    }
}

#[derive(Debug, Clone, Default, Serialize, Deserialize, PartialEq)]
#[serde(deny_unknown_fields, default)]
pub struct SweepSection {
    pub lambdas: Vec<f64>,
    pub alphas: Vec<f64>,
    pub ratios: Vec<f64>,
    pub discards: Vec<f64>,
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(deny_unknown_fields, default)]
pub struct VerifySection {
    pub instances: usize,
    pub trials: u32,
    pub epsilons: Vec<f64>,
    pub delta: f64,
    pub seed: u64,
}

impl Default for VerifySection {
    fn default() -> Self {
        VerifySection {
            instances: 1000,
            trials: 200,
            epsilons: vec![0.1, 0.2],
            delta: 0.1,
            seed: 7,
        }
    }
}

/// A full experiment description, parsed from TOML. Unknown keys are errors.
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub experiment: ExperimentKind,
    #[serde(default)]
    pub env: Option<String>,
    #[serde(default = "default_seeds")]
    pub seeds: Vec<u64>,
    #[serde(default)]
    pub data: DataSection,
    #[serde(default)]
    pub train: TrainSection,
    #[serde(default)]
    pub eval: EvalSection,
    #[serde(default)]
    pub sweep: SweepSection,
    #[serde(default)]
    pub verify: VerifySection,
}

fn default_seeds() -> Vec<u64> {
    vec![0]
}

impl ExperimentConfig {
    pub fn parse(text: &str) -> Result<Self> {
        let cfg: ExperimentConfig = toml::from_str(text).map_err(|e| {
            let line = e
                .span()
                .map(|span| text[..span.start].lines().count())
                .unwrap_or(0);
            Error::Parse {
                line,
                msg: format!("config parse error: {}", e.message()),
            }
        })?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &std::path::Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        Self::parse(&text)
    }

    pub fn validate(&self) -> Result<()> {
        if self.seeds.is_empty() {
            return Err(Error::invalid("seeds must be non-empty"));
        }
        if self.eval.episodes == 0 {
            return Err(Error::invalid("eval episodes must be >= 1"));
        }
        let needs_env = !matches!(
            self.experiment,
            ExperimentKind::VerifyTheory | ExperimentKind::VerifyGeometry
        );
        if needs_env {
            let env = self
                .env
                .as_deref()
                .ok_or_else(|| Error::invalid("training experiments need an env"))?;
            preset(env)?;
            self.resolve_train()?;
        }
        if !(0.0..=1.0).contains(&self.data.expert_ratio)
            || !(0.0..1.0).contains(&self.data.discard_ratio)
        {
            return Err(Error::invalid("data ratios out of range"));
        }
        if self
            .sweep
            .ratios
            .iter()
            .any(|r| !(0.0..=1.0).contains(r))
        {
            return Err(Error::invalid("sweep ratios must lie in [0,1]"));
        }
        if self.sweep.discards.iter().any(|d| !(0.0..1.0).contains(d)) {
            return Err(Error::invalid("sweep discards must lie in [0,1)"));
        }
        if !(0.0 < self.verify.delta && self.verify.delta < 1.0) {
            return Err(Error::invalid("verify delta must be in (0,1)"));
        }
        Ok(())
    }

    /// The per-environment defaults with this config's overrides applied.
    pub fn resolve_train(&self) -> Result<TrainConfig> {
        let env = self
            .env
            .as_deref()
            .ok_or_else(|| Error::invalid("no env to resolve training config for"))?;
        let mut cfg = TrainConfig::for_env(env)?;
        let t = &self.train;
        if let Some(v) = t.lambda {
            cfg.lambda = v;
        }
        if let Some(v) = t.alpha {
            cfg.alpha = v;
        }
        if let Some(v) = t.tau {
            cfg.tau = v;
        }
        if let Some(v) = t.beta {
            cfg.beta = v;
        }
        if let Some(v) = t.gamma {
            cfg.gamma = v;
        }
        if let Some(v) = t.xi {
            cfg.xi = v;
        }
        if let Some(v) = t.lr {
            cfg.lr = v;
        }
        if t.mu_lr.is_some() {
            cfg.mu_lr = t.mu_lr;
        }
        if let Some(v) = t.batch_size {
            cfg.batch_size = v;
        }
        if let Some(v) = t.iterations {
            cfg.iterations = v;
        }
        if let Some(v) = t.policy_update_freq {
            cfg.policy_update_freq = v;
        }
        if let Some(v) = t.n_critics {
            cfg.n_critics = v;
        }
        if let Some(v) = &t.hidden_dims {
            cfg.hidden_dims = v.clone();
        }
        if let Some(v) = t.adv_weight_clip {
            cfg.adv_weight_clip = v;
        }
        if let Some(v) = t.policy_weight_clip {
            cfg.policy_weight_clip = v;
        }
        cfg.validate()?;
        Ok(cfg)
    }

    /// Named variant from the train section (default: the full algorithm).
    pub fn resolve_variant(&self) -> Result<Variant> {
        let bound = self
            .env
            .as_deref()
            .and_then(|e| crate::env::make_env(e).ok())
            .map(|e| e.spec().action_bound)
            .unwrap_or(1.0);
        match self.train.variant.as_deref() {
            None | Some("anq_default") => Ok(Variant::AnqDefault),
            Some("mu_zero") => Ok(Variant::MuZero),
            Some("mu_gaussian_noise") => Ok(Variant::gaussian_noise_default(bound)),
            Some("uniform_radius") => Ok(Variant::UniformRadius),
            Some("lambda_zero") => Ok(Variant::LambdaZero),
            Some(other) => Err(Error::invalid(format!("unknown variant '{other}'"))),
        }
    }

    /// Hash of the fully resolved experiment. Two configs hash equal exactly
    /// when every semantically meaningful field matches.
    pub fn config_hash(&self) -> Result<String> {
        let mut data = self.data.clone();
        if data.path.is_some() {
            // Generation knobs are inert when loading from a file.
            data.expert_ratio = 0.0;
            data.discard_ratio = 0.0;
            data.total_size = 0;
            data.data_seed = 0;
            data.pool_size = 0;
        }
        let train = if self.env.is_some() {
            Some(self.resolve_train()?)
        } else {
            None
        };
        let canon = serde_json::json!({
            "experiment": self.experiment,
            "env": self.env,
            "seeds": self.seeds,
            "data": data,
            "train": train,
            "variant": self.train.variant.clone().unwrap_or_else(|| "anq_default".into()),
            "eval": self.eval,
            "sweep": self.sweep,
            "verify": self.verify,
        });
        let bytes = serde_json::to_vec(&canon)
            .map_err(|e| Error::invalid(format!("hash serialization failed: {e}")))?;
        let mut hasher = Sha256::new();
        hasher.update(&bytes);
        Ok(hex_string(&hasher.finalize()))
    }
}

fn hex_string(bytes: &[u8]) -> String {
    bytes.iter().map(|b| format!("{b:02x}")).collect()
}

/// One evaluation point inside a run.
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct EvalPoint {
    pub iteration: u64,
    pub mean_return: f64,
    pub score: f64,
}

/// Per-seed evaluation trace.
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct SeedRecord {
    pub seed: u64,
    pub evals: Vec<EvalPoint>,
    pub final_score: f64,
    pub final_return: f64,
    pub diverged: bool,
}

/// The durable record of one experiment.
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct RunRecord {
    pub config_hash: String,
    pub env: String,
    pub variant: String,
    pub iterations: u64,
    pub seeds: Vec<SeedRecord>,
    pub mean_score: f64,
    pub std_score: f64,
}

/// Output directory resolution: the `ANQLAB_OUT` environment variable
/// overrides whatever the caller passed.
pub fn resolve_out_dir(requested: &std::path::Path) -> PathBuf {
    match std::env::var_os("ANQLAB_OUT") {
        Some(dir) if !dir.is_empty() => PathBuf::from(dir),
        _ => requested.to_path_buf(),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const BASE: &str = r#"
experiment = "train"
env = "reacher_1d"
seeds = [0, 1]

[data]
expert_ratio = 0.5
total_size = 2000
pool_size = 2000

[train]
iterations = 100
lambda = 2.0

[eval]
every = 50
episodes = 3
"#;

    #[test]
    fn parses_and_resolves() {
        let cfg = ExperimentConfig::parse(BASE).unwrap();
        assert_eq!(cfg.experiment, ExperimentKind::Train);
        let train = cfg.resolve_train().unwrap();
        assert_eq!(train.lambda, 2.0);
        assert_eq!(train.iterations, 100);
        // Per-env preset flows through.
        assert_eq!(train.tau, 0.7);
        assert!(train.normalize_states);
    }

    #[test]
    fn unknown_keys_are_rejected() {
        let bad = BASE.replace("[train]", "[train]\nnot_a_knob = 3");
        let err = ExperimentConfig::parse(&bad);
        assert!(matches!(err, Err(Error::Parse { .. })), "{err:?}");
    }

    #[test]
    fn hash_is_stable_and_sensitive() {
        let a = ExperimentConfig::parse(BASE).unwrap();
        let b = ExperimentConfig::parse(BASE).unwrap();
        assert_eq!(a.config_hash().unwrap(), b.config_hash().unwrap());
        // Formatting-only changes do not alter the hash.
        let reformatted = BASE.replace("lambda = 2.0", "lambda   =   2.0");
        let c = ExperimentConfig::parse(&reformatted).unwrap();
        assert_eq!(a.config_hash().unwrap(), c.config_hash().unwrap());
        // Any semantic change does.
        let changed = BASE.replace("lambda = 2.0", "lambda = 2.5");
        let d = ExperimentConfig::parse(&changed).unwrap();
        assert_ne!(a.config_hash().unwrap(), d.config_hash().unwrap());
        let reseeded = BASE.replace("seeds = [0, 1]", "seeds = [0, 2]");
        let e = ExperimentConfig::parse(&reseeded).unwrap();
        assert_ne!(a.config_hash().unwrap(), e.config_hash().unwrap());
    }

    #[test]
    fn env_var_overrides_out_dir() {
        // Serialize access to the global env var.
        let requested = std::path::Path::new("/tmp/a");
        std::env::remove_var("ANQLAB_OUT");
        assert_eq!(resolve_out_dir(requested), PathBuf::from("/tmp/a"));
        std::env::set_var("ANQLAB_OUT", "/tmp/b");
        assert_eq!(resolve_out_dir(requested), PathBuf::from("/tmp/b"));
        std::env::remove_var("ANQLAB_OUT");
    }

    #[test]
    fn empty_seeds_rejected() {
        let bad = BASE.replace("seeds = [0, 1]", "seeds = []");
        assert!(ExperimentConfig::parse(&bad).is_err());
    }
}
