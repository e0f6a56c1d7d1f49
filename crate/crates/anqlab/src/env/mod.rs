//! Synthetic desk-scale environments.
//!
//! Three tasks cover the data regimes the training experiments need: a 2-D
//! sparse-goal maze (terminal reward only), a 1-D dense-reward reacher, and a
//! finite chain MDP that doubles as an exactly solvable [`crate::tabular`]
//! instance. Dynamics are deterministic; all randomness (start jitter, target
//! placement) flows through the caller-supplied RNG, so a seed pins an entire
//! trajectory stream.

mod chain;
mod point_maze;
mod reacher;

pub use chain::ChainEnv;
pub use point_maze::PointMaze;
pub use reacher::Reacher;

use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};

/// Static description of an environment's spaces and scales.
#[derive(Debug, Clone, PartialEq)]
pub struct EnvSpec {
    pub state_dim: usize,
    pub action_dim: usize,
    /// Actions live in `[-action_bound, action_bound]^action_dim`.
    pub action_bound: f64,
    pub horizon: usize,
    pub gamma: f64,
    /// Rewards always fall in `[0, reward_max]`.
    pub reward_max: f64,
}

/// One environment step.
#[derive(Debug, Clone)]
pub struct Step {
    pub state: Vec<f64>,
    pub reward: f64,
    /// True only on environment-terminal transitions (never on horizon
    /// truncation), so bootstrapping masks stay correct.
    pub done: bool,
}

pub trait Environment: Send {
    fn tag(&self) -> &'static str;
    fn spec(&self) -> &EnvSpec;
    /// Start a new episode; the RNG drives start jitter / target placement.
    fn reset(&mut self, rng: &mut ChaCha8Rng) -> Vec<f64>;
    /// Advance one step. Out-of-box action components are clipped at the
    /// boundary, so dynamics are invariant to over-range inputs.
    fn step(&mut self, action: &[f64]) -> Step;
    /// Scripted near-optimal controller for the current state.
    fn expert_action(&self, state: &[f64]) -> Vec<f64>;
}

/// Per-environment training preset and frozen score references.
#[derive(Debug, Clone)]
pub struct EnvPreset {
    pub tag: &'static str,
    pub tau: f64,
    pub beta: f64,
    pub gamma: f64,
    pub adv_weight_clip: (f64, f64),
    pub policy_weight_clip: (f64, f64),
    /// Added to rewards during training (sparse-goal convention).
    pub reward_shift: f64,
    pub normalize_states: bool,
    /// Mean undiscounted return of the scripted expert under the reference
    /// evaluation protocol (200 episodes, seed `SCORE_REF_SEED`).
    pub expert_return: f64,
    /// Same protocol with uniform random actions.
    pub random_return: f64,
}

/// Seed of the frozen score-reference protocol.
pub const SCORE_REF_SEED: u64 = 0xE7A1;
/// Episode count of the frozen score-reference protocol.
pub const SCORE_REF_EPISODES: usize = 200;

const PRESETS: &[EnvPreset] = &[
    EnvPreset {
        tag: "point_maze_2d",
        tau: 0.9,
        beta: 10.0,
        gamma: 0.99,
        adv_weight_clip: (0.01, 10.0),
        policy_weight_clip: (0.0, 100.0),
        reward_shift: -1.0,
        normalize_states: false,
        expert_return: 1.0,
        random_return: 0.0,
    },
    EnvPreset {
        tag: "reacher_1d",
        tau: 0.7,
        beta: 3.0,
        gamma: 0.99,
        adv_weight_clip: (0.01, 30.0),
        policy_weight_clip: (0.0, 3.0),
        reward_shift: 0.0,
        normalize_states: true,
        expert_return: 28.450041585823598,
        random_return: 4.397869174897168,
    },
    EnvPreset {
        tag: "chain_tabular",
        tau: 0.7,
        beta: 3.0,
        gamma: 0.95,
        adv_weight_clip: (0.01, 30.0),
        policy_weight_clip: (0.0, 3.0),
        reward_shift: 0.0,
        normalize_states: false,
        expert_return: 37.45,
        random_return: 5.195,
    },
];

pub fn env_names() -> Vec<&'static str> {
    PRESETS.iter().map(|p| p.tag).collect()
}

pub fn preset(tag: &str) -> Result<&'static EnvPreset> {
    PRESETS
        .iter()
        .find(|p| p.tag == tag)
        .ok_or_else(|| Error::invalid(format!("unknown environment '{tag}'")))
}

/// Instantiate an environment by name.
pub fn make_env(name: &str) -> Result<Box<dyn Environment>> {
    match name {
        "point_maze_2d" => Ok(Box::new(PointMaze::new())),
        "reacher_1d" => Ok(Box::new(Reacher::new())),
        "chain_tabular" => Ok(Box::new(ChainEnv::new())),
        other => Err(Error::invalid(format!("unknown environment '{other}'"))),
    }
}

/// `100 * (mean - random) / (expert - random)`; may exceed 100 or go negative.
pub fn normalized_score(mean_return: f64, random_return: f64, expert_return: f64) -> Result<f64> {
    let denom = expert_return - random_return;
    if !(denom > 0.0) || !denom.is_finite() {
        return Err(Error::invalid(format!(
            "degenerate score denominator: expert {expert_return} vs random {random_return}"
        )));
    }
    Ok(100.0 * (mean_return - random_return) / denom)
}

pub(crate) fn clip_action(action: &[f64], bound: f64) -> Vec<f64> {
    action.iter().map(|a| a.clamp(-bound, bound)).collect()
}

/// Scripted controllers used by the reference protocol.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ScriptedController {
    Expert,
    Random,
}

/// Mean undiscounted return of a scripted controller. With
/// `(SCORE_REF_EPISODES, SCORE_REF_SEED)` this is the protocol whose outputs
/// are frozen in the presets' `expert_return` / `random_return`.
pub fn scripted_return(
    env: &mut dyn Environment,
    controller: ScriptedController,
    episodes: usize,
    seed: u64,
) -> f64 {
    use rand::Rng;
    let spec = env.spec().clone();
    let mut rng = crate::rng::stream_rng(seed, crate::rng::streams::EVAL);
    let mut total = 0.0;
    for _ in 0..episodes {
        let mut state = env.reset(&mut rng);
        for _ in 0..spec.horizon {
            let action: Vec<f64> = match controller {
                ScriptedController::Expert => env.expert_action(&state),
                ScriptedController::Random => (0..spec.action_dim)
                    .map(|_| rng.gen_range(-spec.action_bound..=spec.action_bound))
                    .collect(),
            };
            let step = env.step(&action);
            total += step.reward;
            state = step.state;
            if step.done {
                break;
            }
        }
    }
    total / episodes as f64
}
