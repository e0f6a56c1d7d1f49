//! Exact finite-MDP machinery.
//!
//! Everything here is an oracle: value iteration, occupancy solves, and
//! brute-force constrained Bellman targets are computed to numerical precision
//! on small instances and used to check both the learner and the theoretical
//! bounds. All computations are pure functions of their inputs.

mod bounds;
mod constrained;
mod solve;

pub use bounds::{
    check_distribution_shift, check_performance_bound, random_mdp, random_policy,
    random_lipschitz_mdp, random_shift_instance, KlRoute, PerformanceBoundReport,
    ShiftInstance, ShiftReport,
};
pub use constrained::brute_force_constrained_target;
pub use solve::{
    occupancy, policy_return, policy_return_iterative, value_iteration, ValueIterationOut,
};

use rand::Rng;
use serde::Serialize;

use crate::error::{Error, Result};

const STOCHASTIC_TOL: f64 = 1e-12;

/// Interpolation data for MDPs whose transition kernel is Lipschitz in a
/// one-dimensional action coordinate: `P(.|s, a) = (1-a) P0(.|s) + a P1(.|s)`
/// for `a` in `[0, 1]`.
#[derive(Debug, Clone)]
pub struct LipschitzKernel {
    /// Anchor kernel at action 0, row-major `[s][s']`.
    pub p0: Vec<f64>,
    /// Anchor kernel at action 1.
    pub p1: Vec<f64>,
    /// Lipschitz constant in L1: `max_s ||P1(.|s) - P0(.|s)||_1`.
    pub k_p: f64,
    /// Action grid embedding the discrete actions into `[0, 1]`.
    pub action_grid: Vec<f64>,
}

/// An exact finite MDP.
#[derive(Debug, Clone)]
pub struct TabularMdp {
    pub n_states: usize,
    pub n_actions: usize,
    /// Row-stochastic transition tensor, flattened `[s][a][s']`.
    transition: Vec<f64>,
    /// Rewards `[s][a]`, all in `[0, r_max]`.
    reward: Vec<f64>,
    pub gamma: f64,
    /// Initial state distribution.
    pub d0: Vec<f64>,
    lipschitz: Option<LipschitzKernel>,
}

impl TabularMdp {
    pub fn new(
        n_states: usize,
        n_actions: usize,
        transition: Vec<f64>,
        reward: Vec<f64>,
        gamma: f64,
        d0: Vec<f64>,
    ) -> Result<Self> {
        let mdp = TabularMdp {
            n_states,
            n_actions,
            transition,
            reward,
            gamma,
            d0,
            lipschitz: None,
        };
        mdp.validate()?;
        Ok(mdp)
    }

    /// Build an MDP whose kernel interpolates linearly between two anchor
    /// kernels along a 1-D action coordinate. The discrete action set is the
    /// given grid, and `k_p` is computed exactly from the anchors.
    pub fn new_lipschitz(
        n_states: usize,
        p0: Vec<f64>,
        p1: Vec<f64>,
        action_grid: Vec<f64>,
        reward: Vec<f64>,
        gamma: f64,
        d0: Vec<f64>,
    ) -> Result<Self> {
        if action_grid.is_empty() || action_grid.iter().any(|a| !(0.0..=1.0).contains(a)) {
            return Err(Error::invalid("action grid must be nonempty within [0,1]"));
        }
        let n_actions = action_grid.len();
        let mut transition = vec![0.0; n_states * n_actions * n_states];
        for s in 0..n_states {
            for (j, &a) in action_grid.iter().enumerate() {
                for s2 in 0..n_states {
                    let v0 = p0[s * n_states + s2];
                    let v1 = p1[s * n_states + s2];
                    transition[(s * n_actions + j) * n_states + s2] = (1.0 - a) * v0 + a * v1;
                }
            }
        }
        let k_p = (0..n_states)
            .map(|s| {
                (0..n_states)
                    .map(|s2| (p1[s * n_states + s2] - p0[s * n_states + s2]).abs())
                    .sum::<f64>()
            })
            .fold(0.0, f64::max);
        let mdp = TabularMdp {
            n_states,
            n_actions,
            transition,
            reward,
            gamma,
            d0,
            lipschitz: Some(LipschitzKernel {
                p0,
                p1,
                k_p,
                action_grid,
            }),
        };
        mdp.validate()?;
        Ok(mdp)
    }

    fn validate(&self) -> Result<()> {
        if self.n_states == 0 || self.n_actions == 0 {
            return Err(Error::invalid("MDP needs at least one state and action"));
        }
        if !(0.0..1.0).contains(&self.gamma) {
            return Err(Error::invalid(format!(
                "discount must be in [0,1), got {}",
                self.gamma
            )));
        }
        if self.transition.len() != self.n_states * self.n_actions * self.n_states {
            return Err(Error::invalid("transition tensor has wrong size"));
        }
        if self.reward.len() != self.n_states * self.n_actions {
            return Err(Error::invalid("reward matrix has wrong size"));
        }
        if self.d0.len() != self.n_states {
            return Err(Error::invalid("d0 has wrong size"));
        }
        for s in 0..self.n_states {
            for a in 0..self.n_actions {
                let row = self.transition_row(s, a);
                let sum: f64 = row.iter().sum();
                if (sum - 1.0).abs() > STOCHASTIC_TOL || row.iter().any(|p| *p < -STOCHASTIC_TOL) {
                    return Err(Error::invalid(format!(
                        "transition row (s={s}, a={a}) is not a distribution (sum {sum})"
                    )));
                }
            }
        }
        let d0_sum: f64 = self.d0.iter().sum();
        if (d0_sum - 1.0).abs() > STOCHASTIC_TOL {
            return Err(Error::invalid(format!("d0 sums to {d0_sum}, expected 1")));
        }
        if self.reward.iter().any(|r| !r.is_finite() || *r < 0.0) {
            return Err(Error::invalid("rewards must be finite and >= 0"));
        }
        if let Some(lip) = &self.lipschitz {
            // Check the Lipschitz inequality on every grid pair.
            for s in 0..self.n_states {
                for (i, &ai) in lip.action_grid.iter().enumerate() {
                    for (j, &aj) in lip.action_grid.iter().enumerate().skip(i + 1) {
                        let l1: f64 = (0..self.n_states)
                            .map(|s2| {
                                (self.p(s, i, s2) - self.p(s, j, s2)).abs()
                            })
                            .sum();
                        if l1 > lip.k_p * (ai - aj).abs() + 1e-12 {
                            return Err(Error::invalid(format!(
                                "kernel violates its Lipschitz constant at s={s}, pair ({i},{j})"
                            )));
                        }
                    }
                }
            }
        }
        Ok(())
    }

    #[inline]
    pub fn p(&self, s: usize, a: usize, s2: usize) -> f64 {
        self.transition[(s * self.n_actions + a) * self.n_states + s2]
    }

    pub fn transition_row(&self, s: usize, a: usize) -> &[f64] {
        let base = (s * self.n_actions + a) * self.n_states;
        &self.transition[base..base + self.n_states]
    }

    #[inline]
    pub fn r(&self, s: usize, a: usize) -> f64 {
        self.reward[s * self.n_actions + a]
    }

    pub fn r_max(&self) -> f64 {
        self.reward.iter().copied().fold(0.0, f64::max)
    }

    pub fn lipschitz(&self) -> Option<&LipschitzKernel> {
        self.lipschitz.as_ref()
    }

    /// Kernel row at a continuous action `a` in `[0, 1]`. Only available for
    /// Lipschitz-constructed MDPs.
    pub fn interpolated_row(&self, s: usize, a: f64) -> Result<Vec<f64>> {
        let lip = self
            .lipschitz
            .as_ref()
            .ok_or_else(|| Error::invalid("MDP was not constructed with a Lipschitz kernel"))?;
        if !(0.0..=1.0).contains(&a) {
            return Err(Error::invalid(format!("action {a} outside [0,1]")));
        }
        Ok((0..self.n_states)
            .map(|s2| {
                (1.0 - a) * lip.p0[s * self.n_states + s2] + a * lip.p1[s * self.n_states + s2]
            })
            .collect())
    }

    /// Reward at a continuous action (interpolated between grid columns).
    /// Used only for reporting; the shift bound itself is reward-free.
    pub fn reward_row(&self, s: usize) -> &[f64] {
        &self.reward[s * self.n_actions..(s + 1) * self.n_actions]
    }
}

/// Per-state action distribution.
#[derive(Debug, Clone, Serialize)]
pub struct TabularPolicy {
    pub n_states: usize,
    pub n_actions: usize,
    /// Row-major `[s][a]`, rows sum to 1.
    pub probs: Vec<f64>,
}

impl TabularPolicy {
    pub fn new(n_states: usize, n_actions: usize, probs: Vec<f64>) -> Result<Self> {
        if probs.len() != n_states * n_actions {
            return Err(Error::invalid("policy matrix has wrong size"));
        }
        for s in 0..n_states {
            let sum: f64 = probs[s * n_actions..(s + 1) * n_actions].iter().sum();
            if (sum - 1.0).abs() > STOCHASTIC_TOL {
                return Err(Error::invalid(format!(
                    "policy row {s} sums to {sum}, expected 1"
                )));
            }
        }
        Ok(TabularPolicy {
            n_states,
            n_actions,
            probs,
        })
    }

    pub fn deterministic(n_states: usize, n_actions: usize, actions: &[usize]) -> Result<Self> {
        if actions.len() != n_states {
            return Err(Error::invalid("need one action index per state"));
        }
        let mut probs = vec![0.0; n_states * n_actions];
        for (s, &a) in actions.iter().enumerate() {
            if a >= n_actions {
                return Err(Error::invalid(format!("action index {a} out of range")));
            }
            probs[s * n_actions + a] = 1.0;
        }
        TabularPolicy::new(n_states, n_actions, probs)
    }

    #[inline]
    pub fn prob(&self, s: usize, a: usize) -> f64 {
        self.probs[s * self.n_actions + a]
    }

    pub fn row(&self, s: usize) -> &[f64] {
        &self.probs[s * self.n_actions..(s + 1) * self.n_actions]
    }

    /// Random softmax policy with temperature-controlled sharpness.
    pub fn random<R: Rng + ?Sized>(
        n_states: usize,
        n_actions: usize,
        sharpness: f64,
        rng: &mut R,
    ) -> Self {
        let mut probs = vec![0.0; n_states * n_actions];
        for s in 0..n_states {
            let logits: Vec<f64> = (0..n_actions)
                .map(|_| rng.gen_range(-1.0..1.0) * sharpness)
                .collect();
            let max = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            let mut row: Vec<f64> = logits.iter().map(|l| (l - max).exp()).collect();
            let sum: f64 = row.iter().sum();
            for v in &mut row {
                *v /= sum;
            }
            probs[s * n_actions..(s + 1) * n_actions].copy_from_slice(&row);
        }
        TabularPolicy {
            n_states,
            n_actions,
            probs,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    pub(crate) fn two_state_cycle(gamma: f64) -> TabularMdp {
        // Deterministic 2-cycle: state 0 -> 1 (reward 1), state 1 -> 0 (reward 0).
        TabularMdp::new(
            2,
            1,
            vec![0.0, 1.0, 1.0, 0.0],
            vec![1.0, 0.0],
            gamma,
            vec![1.0, 0.0],
        )
        .unwrap()
    }

    #[test]
    fn rejects_non_stochastic_rows() {
        let err = TabularMdp::new(
            2,
            1,
            vec![0.5, 0.4, 1.0, 0.0],
            vec![0.0, 0.0],
            0.9,
            vec![1.0, 0.0],
        );
        assert!(err.is_err());
    }

    #[test]
    fn lipschitz_construction_stores_exact_constant() {
        let p0 = vec![1.0, 0.0, 0.5, 0.5];
        let p1 = vec![0.0, 1.0, 0.5, 0.5];
        let mdp = TabularMdp::new_lipschitz(
            2,
            p0,
            p1,
            vec![0.0, 0.5, 1.0],
            vec![0.0; 6],
            0.9,
            vec![0.5, 0.5],
        )
        .unwrap();
        let lip = mdp.lipschitz().unwrap();
        assert!((lip.k_p - 2.0).abs() < 1e-15);
        let row = mdp.interpolated_row(0, 0.25).unwrap();
        assert!((row[0] - 0.75).abs() < 1e-15);
        assert!((row[1] - 0.25).abs() < 1e-15);
    }

    #[test]
    fn interpolated_row_requires_lipschitz() {
        let mdp = two_state_cycle(0.5);
        assert!(mdp.interpolated_row(0, 0.5).is_err());
    }
}
