//! The training loop: four coupled updates per iteration (state value,
//! critic ensemble, auxiliary policy, extracted policy) plus Polyak target
//! tracking, exactly in that order.

pub mod losses;
pub mod synthetic;

pub use losses::{
    adaptive_radius_weight, expectile_grad, expectile_loss, exp_weight_clipped, penalty_weight,
    Critic, EnsembleMin, RadiusMode,
};

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use serde::ser::SerializeStruct;
use serde::{Serialize, Serializer};

use crate::data::{Dataset, NormStats};
use crate::env::{make_env, normalized_score, preset, Environment};
use crate::error::{Error, Result};
use crate::nnet::{Adam, GradBuf, Net, NetSpec, OutputActivation};
use crate::rng::{streams, stream_rng};

use losses::{mu_loss_core, optimized_action, pi_loss_core, q_loss_core, v_loss_core};

/// Every tunable of the training loop.
#[derive(Debug, Clone)]
pub struct TrainConfig {
    /// Lagrange multiplier on the neighborhood penalty.
    pub lambda: f64,
    /// Inverse temperature of the radius adaptation.
    pub alpha: f64,
    /// Expectile of the state-value fit.
    pub tau: f64,
    /// Inverse temperature of the policy-extraction weight.
    pub beta: f64,
    pub gamma: f64,
    /// Polyak rate for target networks.
    pub xi: f64,
    pub lr: f64,
    /// Learning rate for the auxiliary policy; defaults to `lr` when unset.
    pub mu_lr: Option<f64>,
    pub batch_size: usize,
    pub iterations: u64,
    pub policy_update_freq: u64,
    pub n_critics: usize,
    pub adv_weight_clip: (f64, f64),
    pub policy_weight_clip: (f64, f64),
    pub hidden_dims: Vec<usize>,
    pub seed: u64,
    pub radius_mode: RadiusMode,
    pub normalize_states: bool,
    /// Added to rewards when forming Bellman targets (sparse-goal convention).
    pub reward_shift: f64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            lambda: 5.0,
            alpha: 1.0,
            tau: 0.7,
            beta: 3.0,
            gamma: 0.99,
            xi: 0.005,
            lr: 3e-4,
            mu_lr: None,
            batch_size: 256,
            iterations: 50_000,
            policy_update_freq: 2,
            n_critics: 4,
            adv_weight_clip: (0.01, 30.0),
            policy_weight_clip: (0.0, 3.0),
            hidden_dims: vec![64, 64],
            seed: 0,
            radius_mode: RadiusMode::AdaptiveExpAdvantage,
            normalize_states: false,
            reward_shift: 0.0,
        }
    }
}

impl Serialize for TrainConfig {
    fn serialize<S: Serializer>(&self, serializer: S) -> std::result::Result<S::Ok, S::Error> {
        let mut s = serializer.serialize_struct("TrainConfig", 19)?;
        s.serialize_field("lambda", &self.lambda)?;
        s.serialize_field("alpha", &self.alpha)?;
        s.serialize_field("tau", &self.tau)?;
        s.serialize_field("beta", &self.beta)?;
        s.serialize_field("gamma", &self.gamma)?;
        s.serialize_field("xi", &self.xi)?;
        s.serialize_field("lr", &self.lr)?;
        s.serialize_field("mu_lr", &self.mu_lr)?;
        s.serialize_field("batch_size", &self.batch_size)?;
        s.serialize_field("iterations", &self.iterations)?;
        s.serialize_field("policy_update_freq", &self.policy_update_freq)?;
        s.serialize_field("n_critics", &self.n_critics)?;
        s.serialize_field("adv_weight_clip", &self.adv_weight_clip)?;
        s.serialize_field("policy_weight_clip", &self.policy_weight_clip)?;
        s.serialize_field("hidden_dims", &self.hidden_dims)?;
        s.serialize_field("seed", &self.seed)?;
        s.serialize_field("radius_mode", &self.radius_mode.tag())?;
        s.serialize_field("normalize_states", &self.normalize_states)?;
        s.serialize_field("reward_shift", &self.reward_shift)?;
        s.end()
    }
}

impl TrainConfig {
    /// Defaults with the per-environment preset applied (expectile, inverse
    /// temperatures, clip ranges, discount, reward shift, normalization).
    pub fn for_env(tag: &str) -> Result<Self> {
        let p = preset(tag)?;
        Ok(TrainConfig {
            tau: p.tau,
            beta: p.beta,
            gamma: p.gamma,
            adv_weight_clip: p.adv_weight_clip,
            policy_weight_clip: p.policy_weight_clip,
            normalize_states: p.normalize_states,
            reward_shift: p.reward_shift,
            ..TrainConfig::default()
        })
    }

    pub fn validate(&self) -> Result<()> {
        let ok = self.lambda >= 0.0
            && self.alpha >= 0.0
            && self.tau > 0.0
            && self.tau < 1.0
            && self.beta > 0.0
            && (0.0..1.0).contains(&self.gamma)
            && (0.0..=1.0).contains(&self.xi)
            && self.lr > 0.0
            && self.batch_size >= 1
            && self.policy_update_freq >= 1
            && (1..=8).contains(&self.n_critics)
            && !self.hidden_dims.is_empty();
        if !ok {
            return Err(Error::invalid("train config out of range"));
        }
        for clip in [self.adv_weight_clip, self.policy_weight_clip] {
            if !(0.0 <= clip.0 && clip.0 <= clip.1) || !(clip.1 > 0.0) {
                return Err(Error::invalid(format!(
                    "weight clip must satisfy 0 <= lo <= hi, hi > 0, got {clip:?}"
                )));
            }
        }
        Ok(())
    }
}

/// What stands in for the auxiliary policy.
#[derive(Debug, Clone)]
pub enum MuMode {
    /// Trained perturbation network (the default algorithm).
    Learned,
    /// Perturbations pinned to zero (sample-constraint form).
    Zero,
    /// Fresh clipped Gaussian noise at every evaluation, no training.
    GaussianNoise { sigma: f64, clip: f64 },
}

/// Dataset promoted to `f64` with normalization and reward shift applied.
pub struct TrainData {
    pub n: usize,
    pub state_dim: usize,
    pub action_dim: usize,
    states: Vec<f64>,
    actions: Vec<f64>,
    rewards: Vec<f64>,
    next_states: Vec<f64>,
    dones: Vec<f64>,
}

impl TrainData {
    fn state(&self, i: usize) -> &[f64] {
        &self.states[i * self.state_dim..(i + 1) * self.state_dim]
    }

    fn next_state(&self, i: usize) -> &[f64] {
        &self.next_states[i * self.state_dim..(i + 1) * self.state_dim]
    }

    fn action(&self, i: usize) -> &[f64] {
        &self.actions[i * self.action_dim..(i + 1) * self.action_dim]
    }
}

/// A sampled minibatch (owned rows).
pub struct Batch {
    pub states: Vec<Vec<f64>>,
    pub actions: Vec<Vec<f64>>,
    pub rewards: Vec<f64>,
    pub next_states: Vec<Vec<f64>>,
    pub dones: Vec<f64>,
}

/// Per-iteration diagnostics.
#[derive(Debug, Clone, Serialize)]
pub struct StepMetrics {
    pub iteration: u64,
    pub v_loss: f64,
    pub q_loss: f64,
    pub mu_loss: Option<f64>,
    pub pi_loss: Option<f64>,
    pub mean_q: f64,
    pub mean_v: f64,
    pub mean_mu_norm: f64,
}

/// Evaluation outcome.
#[derive(Debug, Clone, Copy, Serialize)]
pub struct EvalOut {
    pub mean_return: f64,
    pub score: f64,
}

/// All trainable state: critic ensemble with targets, state-value net,
/// auxiliary policy with target, extracted policy, optimizers, iteration
/// counter, and the RNG streams.
pub struct Learner {
    pub cfg: TrainConfig,
    pub env_tag: String,
    pub critics: Vec<Net>,
    pub target_critics: Vec<Net>,
    pub v: Net,
    pub mu: Option<Net>,
    pub target_mu: Option<Net>,
    pub policy: Net,
    critic_opts: Vec<Adam>,
    v_opt: Adam,
    mu_opt: Option<Adam>,
    pi_opt: Adam,
    pub iteration: u64,
    batch_rng: ChaCha8Rng,
    noise_rng: ChaCha8Rng,
    mu_mode: MuMode,
    action_bound: f64,
    reward_max: f64,
    state_dim: usize,
    action_dim: usize,
    stats: Option<NormStats>,
}

enum MuRole {
    Online,
    Target,
}

impl Learner {
    pub fn new(cfg: TrainConfig, dataset: &Dataset, mu_mode: MuMode) -> Result<Self> {
        cfg.validate()?;
        let env = make_env(&dataset.env_tag)?;
        let spec = env.spec().clone();
        if spec.state_dim != dataset.state_dim || spec.action_dim != dataset.action_dim {
            return Err(Error::invalid("dataset dims do not match its environment"));
        }
        let (sd, ad) = (dataset.state_dim, dataset.action_dim);
        let hidden = &cfg.hidden_dims;

        let q_spec = NetSpec::new(sd + ad, hidden, 1, OutputActivation::Identity)?;
        let v_spec = NetSpec::new(sd, hidden, 1, OutputActivation::Identity)?;
        // The auxiliary policy's output range is twice the action bound, so
        // perturbations can move any in-box action anywhere in the box.
        let mu_spec = NetSpec::new(
            sd + ad,
            hidden,
            ad,
            OutputActivation::Bounded(2.0 * spec.action_bound),
        )?;
        let pi_spec = NetSpec::new(sd, hidden, ad, OutputActivation::Bounded(spec.action_bound))?;

        let mut critics = Vec::with_capacity(cfg.n_critics);
        for k in 0..cfg.n_critics {
            let mut rng = stream_rng(cfg.seed, streams::NET_INIT_Q + k as u64);
            critics.push(Net::init(q_spec.clone(), &mut rng)?);
        }
        let target_critics = critics.clone();
        let v = Net::init(v_spec, &mut stream_rng(cfg.seed, streams::NET_INIT_V))?;
        let policy = Net::init(pi_spec, &mut stream_rng(cfg.seed, streams::NET_INIT_PI))?;
        let (mu, target_mu) = match mu_mode {
            MuMode::Learned => {
                let mut net = Net::init(mu_spec, &mut stream_rng(cfg.seed, streams::NET_INIT_MU))?;
                scale_output_layer(&mut net, 0.01);
                (Some(net.clone()), Some(net))
            }
            _ => (None, None),
        };

        let critic_opts = critics.iter().map(|n| Adam::new(n, cfg.lr)).collect();
        let v_opt = Adam::new(&v, cfg.lr);
        let mu_opt = mu
            .as_ref()
            .map(|n| Adam::new(n, cfg.mu_lr.unwrap_or(cfg.lr)));
        // Cosine decay applies to the extracted policy only, over its own
        // update count.
        let pi_updates = cfg.iterations.div_ceil(cfg.policy_update_freq).max(1);
        let pi_opt = Adam::new(&policy, cfg.lr).with_cosine_horizon(pi_updates);

        let stats = cfg.normalize_states.then(|| dataset.stats.clone());
        Ok(Learner {
            batch_rng: stream_rng(cfg.seed, streams::BATCH),
            noise_rng: stream_rng(cfg.seed, streams::MU_NOISE),
            cfg,
            env_tag: dataset.env_tag.clone(),
            critics,
            target_critics,
            v,
            mu,
            target_mu,
            policy,
            critic_opts,
            v_opt,
            mu_opt,
            pi_opt,
            iteration: 0,
            mu_mode,
            action_bound: spec.action_bound,
            reward_max: spec.reward_max,
            state_dim: sd,
            action_dim: ad,
            stats,
        })
    }

    pub fn action_bound(&self) -> f64 {
        self.action_bound
    }

    /// Normalization stats applied to observations, when enabled.
    pub fn norm_stats(&self) -> Option<&NormStats> {
        self.stats.as_ref()
    }

    /// Threshold for the divergence flag: `10 * R_max / (1 - gamma)`.
    pub fn divergence_bound(&self) -> f64 {
        10.0 * self.reward_max / (1.0 - self.cfg.gamma)
    }

    /// Promote a dataset to training form: `f64`, states normalized when
    /// configured, rewards shifted.
    pub fn prepare(&self, dataset: &Dataset) -> Result<TrainData> {
        if dataset.env_tag != self.env_tag {
            return Err(Error::invalid("dataset/env tag mismatch"));
        }
        let n = dataset.len();
        let (sd, ad) = (self.state_dim, self.action_dim);
        let mut states = vec![0.0; n * sd];
        let mut next_states = vec![0.0; n * sd];
        let mut actions = vec![0.0; n * ad];
        let mut rewards = vec![0.0; n];
        let mut dones = vec![0.0; n];
        let mut raw = vec![0.0; sd];
        for i in 0..n {
            for k in 0..sd {
                raw[k] = dataset.states[i * sd + k] as f64;
            }
            match &self.stats {
                Some(stats) => stats.normalize(&raw, &mut states[i * sd..(i + 1) * sd]),
                None => states[i * sd..(i + 1) * sd].copy_from_slice(&raw),
            }
            for k in 0..sd {
                raw[k] = dataset.next_states[i * sd + k] as f64;
            }
            match &self.stats {
                Some(stats) => stats.normalize(&raw, &mut next_states[i * sd..(i + 1) * sd]),
                None => next_states[i * sd..(i + 1) * sd].copy_from_slice(&raw),
            }
            for k in 0..ad {
                actions[i * ad + k] = dataset.actions[i * ad + k] as f64;
            }
            rewards[i] = dataset.rewards[i] as f64 + self.cfg.reward_shift;
            dones[i] = f64::from(dataset.dones[i]);
        }
        Ok(TrainData {
            n,
            state_dim: sd,
            action_dim: ad,
            states,
            actions,
            rewards,
            next_states,
            dones,
        })
    }

    /// Uniform-with-replacement minibatch; one batch is shared by all four
    /// updates of an iteration.
    pub fn sample_batch(&mut self, data: &TrainData) -> Batch {
        let b = self.cfg.batch_size;
        let mut batch = Batch {
            states: Vec::with_capacity(b),
            actions: Vec::with_capacity(b),
            rewards: Vec::with_capacity(b),
            next_states: Vec::with_capacity(b),
            dones: Vec::with_capacity(b),
        };
        for _ in 0..b {
            let i = self.batch_rng.gen_range(0..data.n);
            batch.states.push(data.state(i).to_vec());
            batch.actions.push(data.action(i).to_vec());
            batch.rewards.push(data.rewards[i]);
            batch.next_states.push(data.next_state(i).to_vec());
            batch.dones.push(data.dones[i]);
        }
        batch
    }

    fn mu_deltas(&mut self, role: MuRole, batch: &Batch) -> Result<Vec<Vec<f64>>> {
        match &self.mu_mode {
            MuMode::Learned => {
                let net = match role {
                    MuRole::Online => self.mu.as_ref(),
                    MuRole::Target => self.target_mu.as_ref(),
                }
                .ok_or_else(|| Error::State("auxiliary policy missing".into()))?;
                batch
                    .states
                    .iter()
                    .zip(&batch.actions)
                    .map(|(s, a)| {
                        let mut input = s.clone();
                        input.extend_from_slice(a);
                        net.forward(&input)
                    })
                    .collect()
            }
            MuMode::Zero => Ok(batch
                .states
                .iter()
                .map(|_| vec![0.0; self.action_dim])
                .collect()),
            MuMode::GaussianNoise { sigma, clip } => {
                let (sigma, clip) = (*sigma, *clip);
                Ok(batch
                    .states
                    .iter()
                    .map(|_| {
                        (0..self.action_dim)
                            .map(|_| {
                                let z: f64 = sample_standard_normal(&mut self.noise_rng);
                                (sigma * z).clamp(-clip, clip)
                            })
                            .collect()
                    })
                    .collect())
            }
        }
    }

    /// Expectile fit of the state value toward target-critic values at the
    /// target-policy-optimized actions. Pure: computes loss and gradients.
    pub fn v_loss(&mut self, batch: &Batch) -> Result<losses::VLossOut> {
        let deltas = self.mu_deltas(MuRole::Target, batch)?;
        let target_ens = EnsembleMin::new(&self.target_critics, self.action_dim);
        let targets: Vec<f64> = batch
            .states
            .iter()
            .zip(&batch.actions)
            .zip(&deltas)
            .map(|((s, a), d)| {
                let opt = optimized_action(a, d, self.action_bound);
                target_ens.value(s, &opt)
            })
            .collect();
        v_loss_core(&self.v, &batch.states, &targets, self.cfg.tau)
    }

    /// Critic regression toward `r + gamma (1 - done) V(s')`, every critic to
    /// the same target, state value evaluated without gradient.
    pub fn q_loss(&self, batch: &Batch) -> Result<losses::QLossOut> {
        let mut trace = crate::nnet::ForwardTrace::new();
        let targets: Vec<f64> = batch
            .rewards
            .iter()
            .zip(&batch.next_states)
            .zip(&batch.dones)
            .map(|((&r, s2), &done)| {
                self.v.forward_trace(s2, &mut trace)?;
                let v_next = self.v.trace_output(&trace)[0];
                Ok(r + self.cfg.gamma * (1.0 - done) * v_next)
            })
            .collect::<Result<_>>()?;
        q_loss_core(&self.critics, &batch.states, &batch.actions, &targets)
    }

    /// Inner maximization: ascend the online critic minimum at the perturbed
    /// action, against the adaptive norm penalty. Only valid with a learned
    /// auxiliary policy.
    pub fn mu_loss(&mut self, batch: &Batch) -> Result<losses::MuLossOut> {
        let mu = self
            .mu
            .as_ref()
            .ok_or_else(|| Error::State("mu_loss without a learned auxiliary policy".into()))?;
        let target_ens = EnsembleMin::new(&self.target_critics, self.action_dim);
        let mut trace = crate::nnet::ForwardTrace::new();
        let coefs: Vec<f64> = batch
            .states
            .iter()
            .zip(&batch.actions)
            .map(|(s, a)| {
                self.v.forward_trace(s, &mut trace)?;
                let advantage = target_ens.value(s, a) - self.v.trace_output(&trace)[0];
                Ok(self.cfg.lambda
                    * penalty_weight(
                        &self.cfg.radius_mode,
                        self.cfg.alpha,
                        self.cfg.adv_weight_clip,
                        s,
                        a,
                        advantage,
                    ))
            })
            .collect::<Result<_>>()?;
        let online = EnsembleMin::new(&self.critics, self.action_dim);
        mu_loss_core(
            mu,
            &batch.states,
            &batch.actions,
            &coefs,
            &online,
            self.action_bound,
        )
    }

    /// Policy extraction: exponentially advantage-weighted regression toward
    /// the online-mu optimized actions. No gradient reaches the critics, the
    /// state value, or the auxiliary policy.
    pub fn pi_loss(&mut self, batch: &Batch) -> Result<(f64, GradBuf)> {
        let deltas = self.mu_deltas(MuRole::Online, batch)?;
        let target_ens = EnsembleMin::new(&self.target_critics, self.action_dim);
        let mut trace = crate::nnet::ForwardTrace::new();
        let mut targets = Vec::with_capacity(batch.states.len());
        let mut weights = Vec::with_capacity(batch.states.len());
        for ((s, a), d) in batch.states.iter().zip(&batch.actions).zip(&deltas) {
            let opt = optimized_action(a, d, self.action_bound);
            self.v.forward_trace(s, &mut trace)?;
            let advantage = target_ens.value(s, &opt) - self.v.trace_output(&trace)[0];
            weights.push(exp_weight_clipped(
                self.cfg.beta * advantage,
                self.cfg.policy_weight_clip,
            ));
            targets.push(opt);
        }
        pi_loss_core(&self.policy, &batch.states, &targets, &weights)
    }

    /// One full iteration: state-value update, critic update, auxiliary-policy
    /// update, policy update (every `policy_update_freq` iterations, counted
    /// from 0), then Polyak target updates.
    pub fn train_step(&mut self, data: &TrainData) -> Result<StepMetrics> {
        let batch = self.sample_batch(data);
        let iter = self.iteration;
        let step = (|| -> Result<StepMetrics> {
            let v_out = self.v_loss(&batch)?;
            self.v_opt.apply(&mut self.v, &v_out.grads)?;

            let q_out = self.q_loss(&batch)?;
            for ((net, opt), grads) in self
                .critics
                .iter_mut()
                .zip(&mut self.critic_opts)
                .zip(&q_out.grads)
            {
                opt.apply(net, grads)?;
            }

            let (mu_loss, mean_mu_norm) = match self.mu_mode {
                MuMode::Learned => {
                    let out = self.mu_loss(&batch)?;
                    let mu = self.mu.as_mut().expect("learned mode has a mu net");
                    self.mu_opt
                        .as_mut()
                        .expect("learned mode has a mu optimizer")
                        .apply(mu, &out.grads)?;
                    (Some(out.loss), out.mean_norm)
                }
                MuMode::Zero => (None, 0.0),
                MuMode::GaussianNoise { .. } => {
                    let deltas = self.mu_deltas(MuRole::Online, &batch)?;
                    let norm = deltas
                        .iter()
                        .map(|d| d.iter().map(|x| x * x).sum::<f64>().sqrt())
                        .sum::<f64>()
                        / deltas.len() as f64;
                    (None, norm)
                }
            };

            let pi_loss = if self.iteration % self.cfg.policy_update_freq == 0 {
                let (loss, grads) = self.pi_loss(&batch)?;
                self.pi_opt.apply(&mut self.policy, &grads)?;
                Some(loss)
            } else {
                None
            };

            for (target, online) in self.target_critics.iter_mut().zip(&self.critics) {
                target.polyak_from(online, self.cfg.xi)?;
            }
            if let (Some(target), Some(online)) = (self.target_mu.as_mut(), self.mu.as_ref()) {
                target.polyak_from(online, self.cfg.xi)?;
            }

            self.iteration += 1;
            Ok(StepMetrics {
                iteration: iter,
                v_loss: v_out.loss,
                q_loss: q_out.loss,
                mu_loss,
                pi_loss,
                mean_q: q_out.mean_min_q,
                mean_v: v_out.mean_v,
                mean_mu_norm,
            })
        })();
        step.map_err(|e| match e {
            Error::Numeric(msg) => Error::Numeric(format!("iteration {iter}: {msg}")),
            other => other,
        })
    }

    /// Mean `|min-ensemble Q|` over a fixed prefix of the dataset, used by the
    /// divergence flag.
    pub fn mean_abs_q(&self, data: &TrainData, sample: usize) -> f64 {
        let n = sample.min(data.n);
        let ens = EnsembleMin::new(&self.critics, self.action_dim);
        let mut total = 0.0;
        for i in 0..n {
            total += ens.value(data.state(i), data.action(i)).abs();
        }
        total / n as f64
    }

    /// Signed mean of the ensemble minimum over the same fixed prefix.
    pub fn mean_min_q(&self, data: &TrainData, sample: usize) -> f64 {
        let n = sample.min(data.n);
        let ens = EnsembleMin::new(&self.critics, self.action_dim);
        let mut total = 0.0;
        for i in 0..n {
            total += ens.value(data.state(i), data.action(i));
        }
        total / n as f64
    }

    /// Deterministic policy rollout: undiscounted mean return over episodes
    /// plus the environment's normalized score.
    pub fn evaluate_policy(
        &self,
        env: &mut dyn Environment,
        episodes: usize,
        seed: u64,
    ) -> Result<EvalOut> {
        if episodes == 0 {
            return Err(Error::invalid("need at least one evaluation episode"));
        }
        let p = preset(&self.env_tag)?;
        let horizon = env.spec().horizon;
        let mut rng = stream_rng(seed, streams::EVAL);
        let mut total = 0.0;
        let mut z = vec![0.0; self.state_dim];
        for _ in 0..episodes {
            let mut state = env.reset(&mut rng);
            for _ in 0..horizon {
                let action = {
                    let obs: &[f64] = match &self.stats {
                        Some(stats) => {
                            stats.normalize(&state, &mut z);
                            &z
                        }
                        None => &state,
                    };
                    self.policy.forward(obs)?
                };
                let step = env.step(&action);
                total += step.reward;
                state = step.state;
                if step.done {
                    break;
                }
            }
        }
        let mean_return = total / episodes as f64;
        let score = normalized_score(mean_return, p.random_return, p.expert_return)?;
        Ok(EvalOut { mean_return, score })
    }
}

/// Perturbation nets start with a near-zero output layer so the initial
/// perturbations are tiny; the inner maximization grows them as needed.
fn scale_output_layer(net: &mut Net, factor: f64) {
    let last = net.layers().len() - 1;
    let layer = &mut net.layers_mut()[last];
    for w in layer.w.iter_mut().chain(layer.b.iter_mut()) {
        *w *= factor;
    }
}

/// Box-Muller standard normal; two uniforms per draw, one output used.
fn sample_standard_normal(rng: &mut ChaCha8Rng) -> f64 {
    let u1: f64 = rng.gen_range(f64::EPSILON..1.0);
    let u2: f64 = rng.gen_range(0.0..1.0);
    (-2.0 * u1.ln()).sqrt() * (std::f64::consts::TAU * u2).cos()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::{collect_dataset, BehaviorPolicy};

    fn small_cfg(tag: &str) -> TrainConfig {
        let mut cfg = TrainConfig::for_env(tag).unwrap();
        cfg.hidden_dims = vec![16, 16];
        cfg.batch_size = 16;
        cfg.iterations = 64;
        cfg
    }

    fn reacher_dataset() -> Dataset {
        let mut env = make_env("reacher_1d").unwrap();
        collect_dataset(env.as_mut(), BehaviorPolicy::Medium, 600, 21).unwrap()
    }

    #[test]
    fn config_validation_catches_bad_clips() {
        let mut cfg = TrainConfig::default();
        cfg.adv_weight_clip = (5.0, 1.0);
        assert!(cfg.validate().is_err());
        let mut cfg2 = TrainConfig::default();
        cfg2.tau = 1.0;
        assert!(cfg2.validate().is_err());
    }

    #[test]
    fn frozen_targets_with_xi_zero() {
        let ds = reacher_dataset();
        let mut cfg = small_cfg("reacher_1d");
        cfg.xi = 0.0;
        let mut learner = Learner::new(cfg, &ds, MuMode::Learned).unwrap();
        let data = learner.prepare(&ds).unwrap();
        let before_q = learner.target_critics.clone();
        let before_mu = learner.target_mu.clone();
        for _ in 0..5 {
            learner.train_step(&data).unwrap();
        }
        assert_eq!(before_q, learner.target_critics);
        assert_eq!(before_mu, learner.target_mu);
    }

    #[test]
    fn policy_updates_on_even_iterations_only() {
        let ds = reacher_dataset();
        let mut learner = Learner::new(small_cfg("reacher_1d"), &ds, MuMode::Learned).unwrap();
        let data = learner.prepare(&ds).unwrap();
        for expected_iter in 0..6u64 {
            let metrics = learner.train_step(&data).unwrap();
            assert_eq!(metrics.iteration, expected_iter);
            assert_eq!(
                metrics.pi_loss.is_some(),
                expected_iter % 2 == 0,
                "policy update cadence broke at iteration {expected_iter}"
            );
        }
    }

    #[test]
    fn identical_seeds_give_bit_identical_metric_streams() {
        let ds = reacher_dataset();
        let run = |seed: u64| -> Vec<String> {
            let mut cfg = small_cfg("reacher_1d");
            cfg.seed = seed;
            let mut learner = Learner::new(cfg, &ds, MuMode::Learned).unwrap();
            let data = learner.prepare(&ds).unwrap();
            (0..20)
                .map(|_| format!("{:?}", learner.train_step(&data).unwrap()))
                .collect()
        };
        assert_eq!(run(7), run(7));
        assert_ne!(run(7), run(8));
    }

    #[test]
    fn value_update_leaves_critics_and_mu_untouched() {
        let ds = reacher_dataset();
        let mut learner = Learner::new(small_cfg("reacher_1d"), &ds, MuMode::Learned).unwrap();
        let data = learner.prepare(&ds).unwrap();
        let batch = learner.sample_batch(&data);
        let critics_before = learner.critics.clone();
        let mu_before = learner.mu.clone();
        let out = learner.v_loss(&batch).unwrap();
        learner.v_opt.apply(&mut learner.v, &out.grads).unwrap();
        assert_eq!(critics_before, learner.critics);
        assert_eq!(mu_before, learner.mu);
    }

    #[test]
    fn policy_update_leaves_value_critics_and_mu_untouched() {
        let ds = reacher_dataset();
        let mut learner = Learner::new(small_cfg("reacher_1d"), &ds, MuMode::Learned).unwrap();
        let data = learner.prepare(&ds).unwrap();
        let batch = learner.sample_batch(&data);
        let critics_before = learner.critics.clone();
        let v_before = learner.v.clone();
        let mu_before = learner.mu.clone();
        let (_, grads) = learner.pi_loss(&batch).unwrap();
        learner.pi_opt.apply(&mut learner.policy, &grads).unwrap();
        assert_eq!(critics_before, learner.critics);
        assert_eq!(v_before, learner.v);
        assert_eq!(mu_before, learner.mu);
    }

    #[test]
    fn terminal_transitions_use_raw_reward_as_target() {
        // With V forced to zero the Bellman target must equal the (shifted)
        // reward; q_loss of a zeroed critic then equals mean r^2 summed over
        // the ensemble.
        let mut env = make_env("point_maze_2d").unwrap();
        let ds = collect_dataset(env.as_mut(), BehaviorPolicy::Expert, 300, 4).unwrap();
        let mut cfg = small_cfg("point_maze_2d");
        cfg.n_critics = 2;
        let mut learner = Learner::new(cfg, &ds, MuMode::Zero).unwrap();
        // Zero out V and the critics.
        learner.v = Net::zeros(learner.v.spec().clone()).unwrap();
        for k in 0..learner.critics.len() {
            learner.critics[k] = Net::zeros(learner.critics[k].spec().clone()).unwrap();
        }
        let data = learner.prepare(&ds).unwrap();
        let batch = learner.sample_batch(&data);
        let q_loss = learner.q_loss(&batch).unwrap().loss;
        let expect: f64 = batch.rewards.iter().map(|r| r * r).sum::<f64>()
            / batch.rewards.len() as f64
            * 2.0;
        assert!((q_loss - expect).abs() < 1e-12);
    }

    #[test]
    fn shifted_rewards_flow_into_prepare() {
        let mut env = make_env("point_maze_2d").unwrap();
        let ds = collect_dataset(env.as_mut(), BehaviorPolicy::Expert, 100, 4).unwrap();
        let learner = Learner::new(small_cfg("point_maze_2d"), &ds, MuMode::Zero).unwrap();
        let data = learner.prepare(&ds).unwrap();
        for i in 0..data.n {
            let raw = ds.rewards[i] as f64;
            assert_eq!(data.rewards[i], raw - 1.0);
        }
    }

    #[test]
    fn gaussian_noise_mode_draws_fresh_clipped_deltas() {
        let ds = reacher_dataset();
        let mode = MuMode::GaussianNoise {
            sigma: 0.2,
            clip: 0.5,
        };
        let mut learner = Learner::new(small_cfg("reacher_1d"), &ds, mode).unwrap();
        let data = learner.prepare(&ds).unwrap();
        let batch = learner.sample_batch(&data);
        let d1 = learner.mu_deltas(MuRole::Target, &batch).unwrap();
        let d2 = learner.mu_deltas(MuRole::Target, &batch).unwrap();
        assert_ne!(d1, d2, "noise must be fresh per evaluation");
        for d in d1.iter().chain(&d2) {
            for v in d {
                assert!(v.abs() <= 0.5);
            }
        }
    }
}
