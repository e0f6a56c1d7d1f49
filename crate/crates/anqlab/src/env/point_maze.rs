//! 2-D sparse-goal maze.
//!
//! The agent moves a point through the unit square past a vertical wall; the
//! only reward is 1.0 on entering the goal region, which ends the episode.
//! Reaching the goal requires an up-over-down detour, so value information has
//! to propagate over dozens of steps.

use rand::Rng;
use rand_chacha::ChaCha8Rng;

use super::{clip_action, EnvSpec, Environment, Step};

const STEP_SIZE: f64 = 0.08;
const WALL_X: f64 = 0.5;
const WALL_TOP: f64 = 0.6;
const GOAL: [f64; 2] = [0.9, 0.1];
const GOAL_RADIUS: f64 = 0.08;
const START: [f64; 2] = [0.1, 0.1];

#[derive(Debug, Clone)]
pub struct PointMaze {
    spec: EnvSpec,
    pos: [f64; 2],
    finished: bool,
}

impl PointMaze {
    pub fn new() -> Self {
        PointMaze {
            spec: EnvSpec {
                state_dim: 2,
                action_dim: 2,
                action_bound: 1.0,
                horizon: 60,
                gamma: 0.99,
                reward_max: 1.0,
            },
            pos: START,
            finished: false,
        }
    }

    fn blocked(from: [f64; 2], to: [f64; 2]) -> bool {
        // Does the segment cross the vertical wall below its top?
        let (dx0, dx1) = (from[0] - WALL_X, to[0] - WALL_X);
        if dx0 == 0.0 && dx1 == 0.0 {
            return from[1].min(to[1]) <= WALL_TOP;
        }
        if dx0 * dx1 > 0.0 {
            return false;
        }
        let t = dx0 / (dx0 - dx1);
        let y_cross = from[1] + t * (to[1] - from[1]);
        y_cross <= WALL_TOP
    }
}

impl Default for PointMaze {
    fn default() -> Self {
        Self::new()
    }
}

impl Environment for PointMaze {
    fn tag(&self) -> &'static str {
        "point_maze_2d"
    }

    fn spec(&self) -> &EnvSpec {
        &self.spec
    }

    fn reset(&mut self, rng: &mut ChaCha8Rng) -> Vec<f64> {
        self.pos = [
            START[0] + rng.gen_range(-0.05..0.05),
            START[1] + rng.gen_range(-0.05..0.05),
        ];
        self.finished = false;
        self.pos.to_vec()
    }

    fn step(&mut self, action: &[f64]) -> Step {
        debug_assert!(!self.finished, "step after terminal");
        let a = clip_action(action, self.spec.action_bound);
        let proposal = [
            (self.pos[0] + STEP_SIZE * a[0]).clamp(0.0, 1.0),
            (self.pos[1] + STEP_SIZE * a[1]).clamp(0.0, 1.0),
        ];
        if !Self::blocked(self.pos, proposal) {
            self.pos = proposal;
        }
        let dist = ((self.pos[0] - GOAL[0]).powi(2) + (self.pos[1] - GOAL[1]).powi(2)).sqrt();
        let done = dist <= GOAL_RADIUS;
        let reward = if done { 1.0 } else { 0.0 };
        self.finished = done;
        Step {
            state: self.pos.to_vec(),
            reward,
            done,
        }
    }

    fn expert_action(&self, state: &[f64]) -> Vec<f64> {
        let (x, y) = (state[0], state[1]);
        // Three-leg route: climb above the wall, cross, descend to the goal.
        let target = if x < WALL_X + 0.08 && y < WALL_TOP + 0.12 {
            [x.min(0.3), WALL_TOP + 0.18]
        } else if y > WALL_TOP + 0.1 && x < GOAL[0] - 0.06 {
            [GOAL[0], WALL_TOP + 0.18]
        } else {
            GOAL
        };
        vec![
            ((target[0] - x) / STEP_SIZE).clamp(-1.0, 1.0),
            ((target[1] - y) / STEP_SIZE).clamp(-1.0, 1.0),
        ]
    }
}
