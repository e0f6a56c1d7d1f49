//! Frozen analytic critics and a reduced training harness around them.
//!
//! With the critic fixed to a known function of the action, the inner
//! maximization and the expectile value fit can be compared against
//! brute-force grid oracles. The harness reuses the exact same loss cores as
//! the full training loop, so agreement here validates those code paths.

use rand::Rng;

use crate::error::{Error, Result};
use crate::nnet::{Adam, Net, NetSpec, OutputActivation};
use crate::rng::{streams, stream_rng};

use super::losses::{
    mu_loss_core, optimized_action, penalty_weight, v_loss_core, Critic, RadiusMode,
};

/// Smooth frozen critic over the action box: an offset quadratic bowl plus
/// Gaussian bumps. The state input is ignored; gradients are analytic.
#[derive(Debug, Clone)]
pub struct SyntheticCritic {
    pub offset: f64,
    pub curvature: f64,
    pub center: Vec<f64>,
    pub bumps: Vec<Bump>,
}

#[derive(Debug, Clone)]
pub struct Bump {
    pub amplitude: f64,
    pub center: Vec<f64>,
    pub sigma: f64,
}

impl SyntheticCritic {
    /// Pure quadratic `offset - curvature * ||a - center||^2`.
    pub fn quadratic(offset: f64, curvature: f64, center: Vec<f64>) -> Self {
        SyntheticCritic {
            offset,
            curvature,
            center,
            bumps: Vec::new(),
        }
    }

    /// Random well-conditioned instance on `[-1, 1]^dim`: values stay within
    /// roughly `[1.5, 6.5]`, so relative-error comparisons are meaningful.
    pub fn random<R: Rng + ?Sized>(dim: usize, rng: &mut R) -> Self {
        let center: Vec<f64> = (0..dim).map(|_| rng.gen_range(-0.8..0.8)).collect();
        let n_bumps = rng.gen_range(0..=2);
        let bumps = (0..n_bumps)
            .map(|_| Bump {
                amplitude: rng.gen_range(0.3..1.0),
                center: (0..dim).map(|_| rng.gen_range(-1.0..1.0)).collect(),
                sigma: rng.gen_range(0.15..0.4),
            })
            .collect();
        SyntheticCritic {
            offset: 5.0,
            curvature: rng.gen_range(0.2..0.5),
            center,
            bumps,
        }
    }

    pub fn eval(&self, action: &[f64]) -> f64 {
        let sq: f64 = action
            .iter()
            .zip(&self.center)
            .map(|(a, c)| (a - c) * (a - c))
            .sum();
        let mut v = self.offset - self.curvature * sq;
        for b in &self.bumps {
            let d2: f64 = action
                .iter()
                .zip(&b.center)
                .map(|(a, c)| (a - c) * (a - c))
                .sum();
            v += b.amplitude * (-d2 / (2.0 * b.sigma * b.sigma)).exp();
        }
        v
    }

    pub fn grad(&self, action: &[f64]) -> Vec<f64> {
        let mut g: Vec<f64> = action
            .iter()
            .zip(&self.center)
            .map(|(a, c)| -2.0 * self.curvature * (a - c))
            .collect();
        for b in &self.bumps {
            let d2: f64 = action
                .iter()
                .zip(&b.center)
                .map(|(a, c)| (a - c) * (a - c))
                .sum();
            let e = b.amplitude * (-d2 / (2.0 * b.sigma * b.sigma)).exp();
            for (k, (a, c)) in action.iter().zip(&b.center).enumerate() {
                g[k] += e * (-(a - c) / (b.sigma * b.sigma));
            }
        }
        g
    }
}

impl Critic for SyntheticCritic {
    fn value(&self, _state: &[f64], action: &[f64]) -> f64 {
        self.eval(action)
    }

    fn value_and_action_grad(&self, _state: &[f64], action: &[f64]) -> (f64, Vec<f64>) {
        (self.eval(action), self.grad(action))
    }
}

/// Configuration of the frozen-critic harness.
#[derive(Debug, Clone)]
pub struct FrozenCfg {
    pub lambda: f64,
    pub alpha: f64,
    pub tau: f64,
    pub xi: f64,
    pub lr: f64,
    pub adv_weight_clip: (f64, f64),
    pub radius_mode: RadiusMode,
    pub action_bound: f64,
    pub hidden_dims: Vec<usize>,
    pub train_mu: bool,
    pub seed: u64,
}

impl Default for FrozenCfg {
    fn default() -> Self {
        FrozenCfg {
            lambda: 1.0,
            alpha: 0.0,
            tau: 0.99,
            xi: 0.01,
            lr: 1e-3,
            adv_weight_clip: (0.01, 30.0),
            radius_mode: RadiusMode::Uniform,
            action_bound: 1.0,
            hidden_dims: vec![32, 32],
            train_mu: true,
            seed: 0,
        }
    }
}

/// Trains the auxiliary policy and the state value against a frozen critic
/// (online = target), using the production loss cores. The dataset is a fixed
/// set of `(state, action)` pairs, consumed full-batch.
pub struct FrozenCriticTrainer {
    pub critic: SyntheticCritic,
    pub mu: Option<Net>,
    pub target_mu: Option<Net>,
    pub v: Net,
    mu_opt: Option<Adam>,
    v_opt: Adam,
    cfg: FrozenCfg,
    states: Vec<Vec<f64>>,
    actions: Vec<Vec<f64>>,
}

impl FrozenCriticTrainer {
    pub fn new(
        critic: SyntheticCritic,
        states: Vec<Vec<f64>>,
        actions: Vec<Vec<f64>>,
        cfg: FrozenCfg,
    ) -> Result<Self> {
        if states.is_empty() || states.len() != actions.len() {
            return Err(Error::invalid("frozen harness needs matching (s, a) pairs"));
        }
        let sd = states[0].len();
        let ad = actions[0].len();
        let v_spec = NetSpec::new(sd, &cfg.hidden_dims, 1, OutputActivation::Identity)?;
        let v = Net::init(v_spec, &mut stream_rng(cfg.seed, streams::NET_INIT_V))?;
        let v_opt = Adam::new(&v, cfg.lr);
        let (mu, target_mu, mu_opt) = if cfg.train_mu {
            let mu_spec = NetSpec::new(
                sd + ad,
                &cfg.hidden_dims,
                ad,
                OutputActivation::Bounded(2.0 * cfg.action_bound),
            )?;
            let mut net = Net::init(mu_spec, &mut stream_rng(cfg.seed, streams::NET_INIT_MU))?;
            super::scale_output_layer(&mut net, 0.01);
            let opt = Adam::new(&net, cfg.lr);
            (Some(net.clone()), Some(net), Some(opt))
        } else {
            (None, None, None)
        };
        Ok(FrozenCriticTrainer {
            critic,
            mu,
            target_mu,
            v,
            mu_opt,
            v_opt,
            cfg,
            states,
            actions,
        })
    }

    fn deltas(&self, net: Option<&Net>) -> Result<Vec<Vec<f64>>> {
        match net {
            None => Ok(self
                .actions
                .iter()
                .map(|a| vec![0.0; a.len()])
                .collect()),
            Some(net) => self
                .states
                .iter()
                .zip(&self.actions)
                .map(|(s, a)| {
                    let mut input = s.clone();
                    input.extend_from_slice(a);
                    net.forward(&input)
                })
                .collect(),
        }
    }

    /// Optimized actions under the *target* auxiliary policy (what the value
    /// fit regresses toward).
    pub fn optimized_actions_target(&self) -> Result<Vec<Vec<f64>>> {
        Ok(self
            .deltas(self.target_mu.as_ref())?
            .iter()
            .zip(&self.actions)
            .map(|(d, a)| optimized_action(a, d, self.cfg.action_bound))
            .collect())
    }

    /// Optimized actions under the online auxiliary policy.
    pub fn optimized_actions_online(&self) -> Result<Vec<Vec<f64>>> {
        Ok(self
            .deltas(self.mu.as_ref())?
            .iter()
            .zip(&self.actions)
            .map(|(d, a)| optimized_action(a, d, self.cfg.action_bound))
            .collect())
    }

    /// One iteration: value update, auxiliary-policy update, Polyak.
    pub fn step(&mut self) -> Result<()> {
        // Value fit toward frozen-critic values at target-optimized actions.
        let targets: Vec<f64> = self
            .optimized_actions_target()?
            .iter()
            .zip(&self.states)
            .map(|(opt, s)| self.critic.value(s, opt))
            .collect();
        let v_out = v_loss_core(&self.v, &self.states, &targets, self.cfg.tau)?;
        self.v_opt.apply(&mut self.v, &v_out.grads)?;

        if let Some(mu) = self.mu.as_ref() {
            let coefs: Vec<f64> = self
                .states
                .iter()
                .zip(&self.actions)
                .map(|(s, a)| {
                    let advantage = self.critic.value(s, a) - self.v.forward(s)?[0];
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
            let mu_out = mu_loss_core(
                mu,
                &self.states,
                &self.actions,
                &coefs,
                &self.critic,
                self.cfg.action_bound,
            )?;
            let mu = self.mu.as_mut().expect("mu exists");
            self.mu_opt
                .as_mut()
                .expect("mu optimizer exists")
                .apply(mu, &mu_out.grads)?;
            self.target_mu
                .as_mut()
                .expect("target mu exists")
                .polyak_from(self.mu.as_ref().expect("mu exists"), self.cfg.xi)?;
        }
        Ok(())
    }

    pub fn run(&mut self, iterations: usize) -> Result<()> {
        for _ in 0..iterations {
            self.step()?;
        }
        Ok(())
    }

    pub fn v_value(&self, state: &[f64]) -> Result<f64> {
        Ok(self.v.forward(state)?[0])
    }

    pub fn mean_mu_norm(&self) -> Result<f64> {
        let deltas = self.deltas(self.mu.as_ref())?;
        Ok(deltas
            .iter()
            .map(|d| d.iter().map(|x| x * x).sum::<f64>().sqrt())
            .sum::<f64>()
            / deltas.len() as f64)
    }

    /// Mean frozen-critic value at the online-optimized actions (the learned
    /// analogue of "mean Q" for ablation grids).
    pub fn mean_optimized_q(&self) -> Result<f64> {
        let opts = self.optimized_actions_online()?;
        Ok(self
            .states
            .iter()
            .zip(&opts)
            .map(|(s, a)| self.critic.value(s, a))
            .sum::<f64>()
            / opts.len() as f64)
    }
}
