//! Offline datasets: transitions, normalization stats, provenance.

mod file;
mod mixture;
mod rollout;

pub use file::{load_dataset, save_dataset};
pub use mixture::{mix_datasets, MixtureRecipe};
pub use rollout::{collect_dataset, rollout_behavior, BehaviorPolicy};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// One `(s, a, r, s', done)` record. Stored as `f32` so file round-trips are
/// bit-exact; training promotes to `f64`.
#[derive(Debug, Clone, PartialEq)]
pub struct Transition {
    pub state: Vec<f32>,
    pub action: Vec<f32>,
    pub reward: f32,
    pub next_state: Vec<f32>,
    pub done: bool,
}

/// Per-dimension state normalization statistics (population mean / std over
/// the stored transitions' states).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NormStats {
    pub mean: Vec<f64>,
    pub std: Vec<f64>,
}

impl NormStats {
    pub fn normalize(&self, state: &[f64], out: &mut [f64]) {
        for (k, v) in state.iter().enumerate() {
            out[k] = (v - self.mean[k]) / self.std[k];
        }
    }
}

/// How a dataset came to be; carried through mixtures and files.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
pub struct Provenance {
    pub source: String,
    pub seed: u64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub policy: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub expert_ratio: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub discard_ratio: Option<f64>,
    #[serde(default)]
    pub expert_with_replacement: bool,
    #[serde(default)]
    pub random_with_replacement: bool,
}

/// Columnar transition storage plus normalization stats and provenance.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub env_tag: String,
    pub state_dim: usize,
    pub action_dim: usize,
    /// `len x state_dim`, row-major.
    pub states: Vec<f32>,
    /// `len x action_dim`, row-major.
    pub actions: Vec<f32>,
    pub rewards: Vec<f32>,
    pub next_states: Vec<f32>,
    pub dones: Vec<u8>,
    pub stats: NormStats,
    pub provenance: Provenance,
}

impl Dataset {
    pub fn from_transitions(
        env_tag: &str,
        transitions: &[Transition],
        provenance: Provenance,
    ) -> Result<Self> {
        if transitions.is_empty() {
            return Err(Error::invalid("dataset must contain at least one transition"));
        }
        let state_dim = transitions[0].state.len();
        let action_dim = transitions[0].action.len();
        let n = transitions.len();
        let mut states = Vec::with_capacity(n * state_dim);
        let mut actions = Vec::with_capacity(n * action_dim);
        let mut rewards = Vec::with_capacity(n);
        let mut next_states = Vec::with_capacity(n * state_dim);
        let mut dones = Vec::with_capacity(n);
        for t in transitions {
            if t.state.len() != state_dim
                || t.next_state.len() != state_dim
                || t.action.len() != action_dim
            {
                return Err(Error::invalid("transition shape mismatch in dataset"));
            }
            states.extend_from_slice(&t.state);
            actions.extend_from_slice(&t.action);
            rewards.push(t.reward);
            next_states.extend_from_slice(&t.next_state);
            dones.push(u8::from(t.done));
        }
        let stats = compute_stats(&states, state_dim);
        Ok(Dataset {
            env_tag: env_tag.to_string(),
            state_dim,
            action_dim,
            states,
            actions,
            rewards,
            next_states,
            dones,
            stats,
            provenance,
        })
    }

    pub fn len(&self) -> usize {
        self.rewards.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rewards.is_empty()
    }

    pub fn transition(&self, i: usize) -> Transition {
        Transition {
            state: self.states[i * self.state_dim..(i + 1) * self.state_dim].to_vec(),
            action: self.actions[i * self.action_dim..(i + 1) * self.action_dim].to_vec(),
            reward: self.rewards[i],
            next_state: self.next_states[i * self.state_dim..(i + 1) * self.state_dim].to_vec(),
            done: self.dones[i] != 0,
        }
    }

    pub fn iter_transitions(&self) -> impl Iterator<Item = Transition> + '_ {
        (0..self.len()).map(|i| self.transition(i))
    }

    /// Recompute the stored stats from the current contents (used after load
    /// to validate the trailer).
    pub fn recompute_stats(&self) -> NormStats {
        compute_stats(&self.states, self.state_dim)
    }
}

fn compute_stats(states: &[f32], state_dim: usize) -> NormStats {
    let n = states.len() / state_dim;
    let mut mean = vec![0.0f64; state_dim];
    for row in states.chunks(state_dim) {
        for (k, v) in row.iter().enumerate() {
            mean[k] += *v as f64;
        }
    }
    for m in &mut mean {
        *m /= n as f64;
    }
    let mut var = vec![0.0f64; state_dim];
    for row in states.chunks(state_dim) {
        for (k, v) in row.iter().enumerate() {
            let d = *v as f64 - mean[k];
            var[k] += d * d;
        }
    }
    let std = var
        .iter()
        .map(|v| (v / n as f64).sqrt().max(1e-8))
        .collect();
    NormStats { mean, std }
}
