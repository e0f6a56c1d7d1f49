//! Finite chain MDP exposed both as a continuous-action environment and as an
//! exact [`TabularMdp`], so learner behavior can be checked against value
//! iteration.

use rand::Rng;
use rand_chacha::ChaCha8Rng;

use crate::tabular::TabularMdp;

use super::{clip_action, EnvSpec, Environment, Step};

pub const CHAIN_STATES: usize = 8;

#[derive(Debug, Clone)]
pub struct ChainEnv {
    spec: EnvSpec,
    state: usize,
}

impl ChainEnv {
    pub fn new() -> Self {
        ChainEnv {
            spec: EnvSpec {
                state_dim: 1,
                action_dim: 1,
                action_bound: 1.0,
                horizon: 40,
                gamma: 0.95,
                reward_max: 1.0,
            },
            state: 0,
        }
    }

    /// Encode a chain index into the 1-D observation in `[-1, 1]`.
    pub fn encode(idx: usize) -> f64 {
        2.0 * idx as f64 / (CHAIN_STATES - 1) as f64 - 1.0
    }

    pub fn decode(obs: f64) -> usize {
        let idx = ((obs + 1.0) / 2.0 * (CHAIN_STATES - 1) as f64).round();
        (idx.max(0.0) as usize).min(CHAIN_STATES - 1)
    }

    fn reward_at(state: usize) -> f64 {
        if state == CHAIN_STATES - 1 {
            1.0
        } else {
            0.0
        }
    }

    /// The same MDP as an exact tabular object: actions {left, right},
    /// deterministic moves, uniform initial distribution.
    pub fn tabular_mdp(&self) -> TabularMdp {
        let n = CHAIN_STATES;
        let mut transition = vec![0.0; n * 2 * n];
        let mut reward = vec![0.0; n * 2];
        for s in 0..n {
            let left = s.saturating_sub(1);
            let right = (s + 1).min(n - 1);
            transition[(s * 2) * n + left] = 1.0;
            transition[(s * 2 + 1) * n + right] = 1.0;
            // The environment pays on *entering* a state.
            reward[s * 2] = Self::reward_at(left);
            reward[s * 2 + 1] = Self::reward_at(right);
        }
        let d0 = vec![1.0 / n as f64; n];
        TabularMdp::new(n, 2, transition, reward, self.spec.gamma, d0)
            .expect("chain construction is valid")
    }
}

impl Default for ChainEnv {
    fn default() -> Self {
        Self::new()
    }
}

impl Environment for ChainEnv {
    fn tag(&self) -> &'static str {
        "chain_tabular"
    }

    fn spec(&self) -> &EnvSpec {
        &self.spec
    }

    fn reset(&mut self, rng: &mut ChaCha8Rng) -> Vec<f64> {
        self.state = rng.gen_range(0..CHAIN_STATES);
        vec![Self::encode(self.state)]
    }

    fn step(&mut self, action: &[f64]) -> Step {
        let a = clip_action(action, self.spec.action_bound);
        // Negative actions move left, the rest move right.
        self.state = if a[0] < 0.0 {
            self.state.saturating_sub(1)
        } else {
            (self.state + 1).min(CHAIN_STATES - 1)
        };
        Step {
            state: vec![Self::encode(self.state)],
            reward: Self::reward_at(self.state),
            done: false,
        }
    }

    fn expert_action(&self, _state: &[f64]) -> Vec<f64> {
        vec![1.0]
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::tabular::{policy_return, value_iteration, TabularPolicy};

    #[test]
    fn encode_decode_roundtrip() {
        for i in 0..CHAIN_STATES {
            assert_eq!(ChainEnv::decode(ChainEnv::encode(i)), i);
        }
    }

    #[test]
    fn env_rollout_matches_value_iteration() {
        // Discounted greedy-rollout return from every start state equals the
        // optimal value from value iteration (up to the gamma^H tail).
        let env = ChainEnv::new();
        let mdp = env.tabular_mdp();
        let out = value_iteration(&mdp, 1e-12).unwrap();

        let horizon = 700; // gamma^700 * Rmax/(1-gamma) < 1e-14
        let gamma = env.spec.gamma;
        for start in 0..CHAIN_STATES {
            let mut sim = ChainEnv::new();
            sim.state = start;
            let mut ret = 0.0;
            let mut disc = 1.0;
            let mut obs = vec![ChainEnv::encode(start)];
            for _ in 0..horizon {
                let a = sim.expert_action(&obs);
                let step = sim.step(&a);
                ret += disc * step.reward;
                disc *= gamma;
                obs = step.state;
            }
            let v_star = out.state_value(&mdp, start);
            assert!(
                (ret - v_star).abs() < 1e-9,
                "state {start}: rollout {ret} vs VI {v_star}"
            );
        }

        // And the greedy policy's exact return agrees with the VI values
        // averaged under d0.
        let eta = policy_return(&mdp, &out.greedy).unwrap();
        let eta_vi: f64 = (0..CHAIN_STATES)
            .map(|s| mdp.d0[s] * out.state_value(&mdp, s))
            .sum();
        assert!((eta - eta_vi).abs() < 1e-9);
    }

    #[test]
    fn always_right_is_optimal() {
        let env = ChainEnv::new();
        let mdp = env.tabular_mdp();
        let out = value_iteration(&mdp, 1e-12).unwrap();
        let right = TabularPolicy::deterministic(CHAIN_STATES, 2, &[1; CHAIN_STATES]).unwrap();
        let eta_right = policy_return(&mdp, &right).unwrap();
        let eta_greedy = policy_return(&mdp, &out.greedy).unwrap();
        assert!((eta_right - eta_greedy).abs() < 1e-9);
    }
}
