//! 1-D dense-reward reacher: drive a point onto a per-episode target.

use rand::Rng;
use rand_chacha::ChaCha8Rng;

use super::{clip_action, EnvSpec, Environment, Step};

const STEP_SIZE: f64 = 0.25;
const REWARD_WIDTH: f64 = 0.3;

#[derive(Debug, Clone)]
pub struct Reacher {
    spec: EnvSpec,
    pos: f64,
    target: f64,
}

impl Reacher {
    pub fn new() -> Self {
        Reacher {
            spec: EnvSpec {
                state_dim: 2,
                action_dim: 1,
                action_bound: 1.0,
                horizon: 30,
                gamma: 0.99,
                reward_max: 1.0,
            },
            pos: 0.0,
            target: 0.5,
        }
    }

    fn state(&self) -> Vec<f64> {
        vec![self.pos, self.target]
    }
}

impl Default for Reacher {
    fn default() -> Self {
        Self::new()
    }
}

impl Environment for Reacher {
    fn tag(&self) -> &'static str {
        "reacher_1d"
    }

    fn spec(&self) -> &EnvSpec {
        &self.spec
    }

    fn reset(&mut self, rng: &mut ChaCha8Rng) -> Vec<f64> {
        self.pos = rng.gen_range(-1.0..1.0);
        self.target = rng.gen_range(-0.8..0.8);
        self.state()
    }

    fn step(&mut self, action: &[f64]) -> Step {
        let a = clip_action(action, self.spec.action_bound);
        self.pos = (self.pos + STEP_SIZE * a[0]).clamp(-1.0, 1.0);
        // Linear reward cone around the target, zero beyond REWARD_WIDTH.
        let reward = (1.0 - (self.pos - self.target).abs() / REWARD_WIDTH).max(0.0);
        Step {
            state: self.state(),
            reward,
            done: false,
        }
    }

    fn expert_action(&self, state: &[f64]) -> Vec<f64> {
        vec![((state[1] - state[0]) / STEP_SIZE).clamp(-1.0, 1.0)]
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::stream_rng;

    #[test]
    fn zero_action_at_target_yields_maximal_reward() {
        let mut env = Reacher::new();
        let mut rng = stream_rng(1, 0);
        env.reset(&mut rng);
        env.pos = env.target;
        let step = env.step(&[0.0]);
        assert_eq!(step.reward, 1.0);
    }

    #[test]
    fn expert_converges_and_holds() {
        let mut env = Reacher::new();
        let mut rng = stream_rng(2, 0);
        let mut state = env.reset(&mut rng);
        let mut last_rewards = Vec::new();
        for t in 0..env.spec.horizon {
            let a = env.expert_action(&state);
            let step = env.step(&a);
            state = step.state;
            if t >= 10 {
                last_rewards.push(step.reward);
            }
        }
        assert!(last_rewards.iter().all(|r| *r > 0.99));
    }
}
