//! Loss primitives shared by the training loop and the frozen-critic
//! verification harness: the asymmetric expectile loss, the adaptive penalty
//! weight, and the four per-batch loss cores with analytic gradients.

use std::fmt;
use std::sync::Arc;

use crate::error::{Error, Result};
use crate::nnet::{ForwardTrace, GradBuf, Net};

/// `L2_tau(x) = |tau - 1(x < 0)| x^2`.
pub fn expectile_loss(x: f64, tau: f64) -> f64 {
    let w = if x < 0.0 { 1.0 - tau } else { tau };
    w * x * x
}

/// Derivative of [`expectile_loss`] in `x`.
pub fn expectile_grad(x: f64, tau: f64) -> f64 {
    let w = if x < 0.0 { 1.0 - tau } else { tau };
    2.0 * w * x
}

/// How the per-sample neighborhood radius is modulated.
#[derive(Clone)]
pub enum RadiusMode {
    /// Radius shrinks with advantage: modulation `f = exp(-alpha A)`, penalty
    /// weight `1/f` clipped into the configured range.
    AdaptiveExpAdvantage,
    /// Fixed radius: penalty weight identically 1.
    Uniform,
    /// Arbitrary modulation `f(s, a, advantage)`; the penalty weight becomes
    /// `clip(1 / f, lo, hi)`.
    Custom {
        label: String,
        f: Arc<dyn Fn(&[f64], &[f64], f64) -> f64 + Send + Sync>,
    },
}

impl fmt::Debug for RadiusMode {
    fn fmt(&self, fm: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            RadiusMode::AdaptiveExpAdvantage => write!(fm, "AdaptiveExpAdvantage"),
            RadiusMode::Uniform => write!(fm, "Uniform"),
            RadiusMode::Custom { label, .. } => write!(fm, "Custom({label})"),
        }
    }
}

impl RadiusMode {
    pub fn tag(&self) -> String {
        match self {
            RadiusMode::AdaptiveExpAdvantage => "adaptive_exp_advantage".to_string(),
            RadiusMode::Uniform => "uniform".to_string(),
            RadiusMode::Custom { label, .. } => format!("custom:{label}"),
        }
    }
}

/// Radius modulation of the default adaptive mode, `exp(-alpha * advantage)`
/// with the argument floored so the reciprocal cannot overflow past the clip.
pub fn adaptive_radius_modulation(alpha: f64, advantage: f64, clip_hi: f64) -> f64 {
    (-(alpha * advantage)).max(-(clip_hi.ln() + 1.0)).exp()
}

/// Per-sample penalty weight `w(s, a)` applied inside the Lagrangian penalty.
/// Always positive and finite after clipping.
pub fn penalty_weight(
    mode: &RadiusMode,
    alpha: f64,
    clip: (f64, f64),
    state: &[f64],
    action: &[f64],
    advantage: f64,
) -> f64 {
    match mode {
        RadiusMode::Uniform => 1.0,
        RadiusMode::AdaptiveExpAdvantage => {
            let f = adaptive_radius_modulation(alpha, advantage, clip.1);
            (1.0 / f).clamp(clip.0, clip.1)
        }
        RadiusMode::Custom { f, .. } => {
            let modulation = f(state, action, advantage).max(0.0);
            (1.0 / modulation).clamp(clip.0, clip.1)
        }
    }
}

/// The adaptive-mode weight `clip(exp(alpha (q_target - v)), lo, hi)`.
pub fn adaptive_radius_weight(q_target: f64, v: f64, alpha: f64, clip: (f64, f64)) -> f64 {
    penalty_weight(
        &RadiusMode::AdaptiveExpAdvantage,
        alpha,
        clip,
        &[],
        &[],
        q_target - v,
    )
}

/// Exponentiated policy-extraction weight with overflow saturation:
/// `clip(exp(min(arg, ln(hi) + 1)), lo, hi)`.
pub fn exp_weight_clipped(arg: f64, clip: (f64, f64)) -> f64 {
    let capped = arg.min(clip.1.ln() + 1.0);
    capped.exp().clamp(clip.0, clip.1)
}

/// Black-box critic with an action gradient, so the inner maximization works
/// identically against a network ensemble or a frozen analytic critic.
pub trait Critic {
    fn value(&self, state: &[f64], action: &[f64]) -> f64;
    fn value_and_action_grad(&self, state: &[f64], action: &[f64]) -> (f64, Vec<f64>);
}

/// Pessimistic aggregate of a critic ensemble: the minimum over nets applied
/// to the concatenated `(s, a)` input. The action gradient flows through the
/// critic achieving the minimum (first index on ties). Scratch buffers live
/// behind a `RefCell` so batched evaluation stays allocation-free.
pub struct EnsembleMin<'a> {
    nets: &'a [Net],
    action_dim: usize,
    scratch: std::cell::RefCell<EnsScratch>,
}

#[derive(Default)]
struct EnsScratch {
    input: Vec<f64>,
    traces: Vec<ForwardTrace>,
}

impl<'a> EnsembleMin<'a> {
    pub fn new(nets: &'a [Net], action_dim: usize) -> Self {
        debug_assert!(!nets.is_empty());
        EnsembleMin {
            nets,
            action_dim,
            scratch: std::cell::RefCell::new(EnsScratch::default()),
        }
    }
}

#[cfg(test)]
fn concat(state: &[f64], action: &[f64]) -> Vec<f64> {
    let mut input = Vec::with_capacity(state.len() + action.len());
    input.extend_from_slice(state);
    input.extend_from_slice(action);
    input
}

fn concat_into(state: &[f64], action: &[f64], input: &mut Vec<f64>) {
    input.clear();
    input.extend_from_slice(state);
    input.extend_from_slice(action);
}

impl Critic for EnsembleMin<'_> {
    fn value(&self, state: &[f64], action: &[f64]) -> f64 {
        let mut scratch = self.scratch.borrow_mut();
        if scratch.traces.len() != self.nets.len() {
            scratch.traces = vec![ForwardTrace::new(); self.nets.len()];
        }
        let EnsScratch { input, traces } = &mut *scratch;
        concat_into(state, action, input);
        let mut best = f64::INFINITY;
        for (net, trace) in self.nets.iter().zip(traces.iter_mut()) {
            net.forward_trace(input, trace)
                .expect("critic input dims fixed");
            best = best.min(net.trace_output(trace)[0]);
        }
        best
    }

    fn value_and_action_grad(&self, state: &[f64], action: &[f64]) -> (f64, Vec<f64>) {
        let mut scratch = self.scratch.borrow_mut();
        if scratch.traces.len() != self.nets.len() {
            scratch.traces = vec![ForwardTrace::new(); self.nets.len()];
        }
        let EnsScratch { input, traces } = &mut *scratch;
        concat_into(state, action, input);
        let mut best_val = f64::INFINITY;
        let mut best_idx = 0usize;
        for (k, (net, trace)) in self.nets.iter().zip(traces.iter_mut()).enumerate() {
            net.forward_trace(input, trace)
                .expect("critic input dims fixed");
            let val = net.trace_output(trace)[0];
            if val < best_val {
                best_val = val;
                best_idx = k;
            }
        }
        let d_input = self.nets[best_idx]
            .input_gradient(&traces[best_idx], &[1.0])
            .expect("trace was just produced");
        let grad = d_input[input.len() - self.action_dim..].to_vec();
        (best_val, grad)
    }
}

/// Output of [`v_loss_core`]: the mean state value over the batch comes out
/// as a by-product for step metrics.
pub struct VLossOut {
    pub loss: f64,
    pub grads: GradBuf,
    pub mean_v: f64,
}

/// Expectile regression core (state-value fit): mean `L2_tau(target_i - V(s_i))`.
pub fn v_loss_core(v: &Net, states: &[Vec<f64>], targets: &[f64], tau: f64) -> Result<VLossOut> {
    if states.len() != targets.len() || states.is_empty() {
        return Err(Error::invalid("v_loss batch shape mismatch"));
    }
    let inv_b = 1.0 / states.len() as f64;
    let mut grads = GradBuf::zeros_like(v);
    let mut trace = ForwardTrace::new();
    let mut loss = 0.0;
    let mut mean_v = 0.0;
    for (s, &target) in states.iter().zip(targets) {
        v.forward_trace(s, &mut trace)?;
        let value = v.trace_output(&trace)[0];
        mean_v += value;
        let residual = target - value;
        loss += expectile_loss(residual, tau);
        // d/dV L2_tau(target - V) = -expectile_grad(residual)
        let upstream = [-expectile_grad(residual, tau) * inv_b];
        v.backward(&trace, &upstream, &mut grads, None)?;
    }
    loss *= inv_b;
    mean_v *= inv_b;
    if !loss.is_finite() {
        return Err(Error::numeric("non-finite state-value loss"));
    }
    Ok(VLossOut {
        loss,
        grads,
        mean_v,
    })
}

/// Output of [`q_loss_core`]: the mean of the per-sample ensemble minimum
/// comes out as a by-product for step metrics.
pub struct QLossOut {
    pub loss: f64,
    pub grads: Vec<GradBuf>,
    pub mean_min_q: f64,
}

/// Critic regression core: every critic regressed to the shared targets,
/// mean squared error per critic, summed over the ensemble.
pub fn q_loss_core(
    critics: &[Net],
    states: &[Vec<f64>],
    actions: &[Vec<f64>],
    targets: &[f64],
) -> Result<QLossOut> {
    if states.len() != targets.len() || states.len() != actions.len() || states.is_empty() {
        return Err(Error::invalid("q_loss batch shape mismatch"));
    }
    if targets.iter().any(|t| !t.is_finite()) {
        return Err(Error::numeric("non-finite Bellman target"));
    }
    let inv_b = 1.0 / states.len() as f64;
    let mut total = 0.0;
    let mut all_grads: Vec<GradBuf> = critics.iter().map(GradBuf::zeros_like).collect();
    let mut trace = ForwardTrace::new();
    let mut input = Vec::new();
    let mut mean_min_q = 0.0;
    for ((s, a), &target) in states.iter().zip(actions).zip(targets) {
        concat_into(s, a, &mut input);
        let mut min_q = f64::INFINITY;
        for (net, grads) in critics.iter().zip(all_grads.iter_mut()) {
            net.forward_trace(&input, &mut trace)?;
            let q = net.trace_output(&trace)[0];
            min_q = min_q.min(q);
            let err = q - target;
            total += err * err * inv_b;
            let upstream = [2.0 * err * inv_b];
            net.backward(&trace, &upstream, grads, None)?;
        }
        mean_min_q += min_q;
    }
    mean_min_q *= inv_b;
    if !total.is_finite() {
        return Err(Error::numeric("non-finite critic loss"));
    }
    Ok(QLossOut {
        loss: total,
        grads: all_grads,
        mean_min_q,
    })
}

/// Output of [`mu_loss_core`]: the mean perturbation norm comes out as a
/// by-product for step metrics.
pub struct MuLossOut {
    pub loss: f64,
    pub grads: GradBuf,
    pub mean_norm: f64,
}

/// Inner-maximization core, negated for minimization:
/// `-mean[ Q(s, clip_box(a + mu(s,a))) - coef_i * ||mu(s,a)||_2 ]`.
///
/// `penalty_coefs` carries the full per-sample coefficient `lambda * w(s,a)`.
/// The gradient flows through the critic's action input and through the norm.
pub fn mu_loss_core(
    mu: &Net,
    states: &[Vec<f64>],
    actions: &[Vec<f64>],
    penalty_coefs: &[f64],
    q_online: &dyn Critic,
    action_bound: f64,
) -> Result<MuLossOut> {
    if states.len() != actions.len() || states.len() != penalty_coefs.len() || states.is_empty() {
        return Err(Error::invalid("mu_loss batch shape mismatch"));
    }
    let inv_b = 1.0 / states.len() as f64;
    let action_dim = actions[0].len();
    let mut grads = GradBuf::zeros_like(mu);
    let mut trace = ForwardTrace::new();
    let mut loss = 0.0;
    let mut mean_norm = 0.0;
    let mut input = Vec::new();
    let mut upstream = vec![0.0; action_dim];
    let mut opt_action = vec![0.0; action_dim];
    let mut pass_mask = vec![true; action_dim];
    for ((s, a), &coef) in states.iter().zip(actions).zip(penalty_coefs) {
        concat_into(s, a, &mut input);
        mu.forward_trace(&input, &mut trace)?;
        let delta = mu.trace_output(&trace).to_vec();

        for k in 0..action_dim {
            let raw = a[k] + delta[k];
            opt_action[k] = raw.clamp(-action_bound, action_bound);
            pass_mask[k] = raw.abs() <= action_bound;
        }
        let (q_val, q_grad) = q_online.value_and_action_grad(s, &opt_action);
        let norm = delta.iter().map(|d| d * d).sum::<f64>().sqrt();
        mean_norm += norm;
        loss -= q_val - coef * norm;

        for k in 0..action_dim {
            let gq = if pass_mask[k] { q_grad[k] } else { 0.0 };
            let gn = if norm > 1e-12 { delta[k] / norm } else { 0.0 };
            upstream[k] = (-gq + coef * gn) * inv_b;
        }
        mu.backward(&trace, &upstream, &mut grads, None)?;
    }
    loss *= inv_b;
    mean_norm *= inv_b;
    if !loss.is_finite() {
        return Err(Error::numeric("non-finite inner-maximization loss"));
    }
    Ok(MuLossOut {
        loss,
        grads,
        mean_norm,
    })
}

/// Weighted regression core (policy extraction):
/// mean `w_i ||target_i - pi(s_i)||_2^2`.
pub fn pi_loss_core(
    pi: &Net,
    states: &[Vec<f64>],
    target_actions: &[Vec<f64>],
    weights: &[f64],
) -> Result<(f64, GradBuf)> {
    if states.len() != target_actions.len() || states.len() != weights.len() || states.is_empty() {
        return Err(Error::invalid("pi_loss batch shape mismatch"));
    }
    if weights.iter().any(|w| !w.is_finite() || *w < 0.0) {
        return Err(Error::numeric("invalid policy-extraction weight"));
    }
    let inv_b = 1.0 / states.len() as f64;
    let mut grads = GradBuf::zeros_like(pi);
    let mut trace = ForwardTrace::new();
    let mut loss = 0.0;
    for ((s, target), &w) in states.iter().zip(target_actions).zip(weights) {
        pi.forward_trace(s, &mut trace)?;
        let out = pi.trace_output(&trace);
        let mut sq = 0.0;
        let upstream: Vec<f64> = out
            .iter()
            .zip(target)
            .map(|(&p, &t)| {
                sq += (t - p) * (t - p);
                2.0 * w * (p - t) * inv_b
            })
            .collect();
        loss += w * sq;
        pi.backward(&trace, &upstream, &mut grads, None)?;
    }
    loss *= inv_b;
    if !loss.is_finite() {
        return Err(Error::numeric("non-finite policy-extraction loss"));
    }
    Ok((loss, grads))
}

/// Component-wise clip of `a + delta` into the action box.
pub fn optimized_action(action: &[f64], delta: &[f64], bound: f64) -> Vec<f64> {
    action
        .iter()
        .zip(delta)
        .map(|(a, d)| (a + d).clamp(-bound, bound))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nnet::{NetSpec, OutputActivation};
    use crate::rng::stream_rng;

    #[test]
    fn expectile_direct_values() {
        assert!((expectile_loss(2.0, 0.7) - 2.8).abs() < 1e-12);
        assert!((expectile_loss(-1.0, 0.7) - 0.3).abs() < 1e-12);
        // tau = 0.5 is symmetric: 0.5 x^2.
        for x in [-3.0, -0.2, 0.0, 0.4, 2.5] {
            assert!((expectile_loss(x, 0.5) - 0.5 * x * x).abs() < 1e-12);
        }
    }

    #[test]
    fn expectile_reflection_identity() {
        for &x in &[-2.0, -0.3, 0.0, 0.7, 1.9] {
            for &tau in &[0.1, 0.5, 0.7, 0.9, 0.99] {
                let lhs = expectile_loss(x, tau);
                let rhs = expectile_loss(-x, 1.0 - tau);
                assert!((lhs - rhs).abs() < 1e-12, "x={x}, tau={tau}");
            }
        }
    }

    #[test]
    fn adaptive_weight_examples() {
        // alpha = 0: weight 1 regardless of the advantage.
        for adv in [-5.0, 0.0, 17.0] {
            assert_eq!(adaptive_radius_weight(adv, 0.0, 0.0, (0.01, 30.0)), 1.0);
        }
        // Zero advantage: weight 1.
        assert_eq!(adaptive_radius_weight(3.0, 3.0, 1.0, (0.01, 30.0)), 1.0);
        // alpha = 1, advantage ln 4: weight 4.
        let w = adaptive_radius_weight(4f64.ln(), 0.0, 1.0, (0.01, 30.0));
        assert!((w - 4.0).abs() < 1e-12);
        // Clipping keeps extreme advantages finite.
        let w_hi = adaptive_radius_weight(1e6, 0.0, 1.0, (0.01, 30.0));
        assert_eq!(w_hi, 30.0);
        let w_lo = adaptive_radius_weight(-1e6, 0.0, 1.0, (0.01, 30.0));
        assert_eq!(w_lo, 0.01);
    }

    #[test]
    fn custom_mode_with_exp_neg_advantage_is_bit_identical_to_default() {
        let custom = RadiusMode::Custom {
            label: "exp_neg_adv".to_string(),
            f: Arc::new(|_s, _a, adv| (-adv).exp()),
        };
        let default = RadiusMode::AdaptiveExpAdvantage;
        let clip = (0.01, 30.0);
        for adv in [-40.0, -3.0, -0.1, 0.0, 0.4, 2.0, 5.0, 800.0] {
            let wd = penalty_weight(&default, 1.0, clip, &[], &[], adv);
            let wc = penalty_weight(&custom, 1.0, clip, &[], &[], adv);
            assert_eq!(wd.to_bits(), wc.to_bits(), "advantage {adv}");
        }
    }

    #[test]
    fn uniform_mode_weight_is_one() {
        for adv in [-3.0, 0.0, 9.0] {
            assert_eq!(
                penalty_weight(&RadiusMode::Uniform, 1.0, (0.01, 30.0), &[], &[], adv),
                1.0
            );
        }
    }

    #[test]
    fn exp_weight_saturates_instead_of_overflowing() {
        let clip = (0.0, 100.0);
        assert_eq!(exp_weight_clipped(1e9, clip), 100.0);
        assert_eq!(exp_weight_clipped(f64::INFINITY, clip), 100.0);
        assert!((exp_weight_clipped(0.0, clip) - 1.0).abs() < 1e-15);
    }

    #[test]
    fn ensemble_min_takes_the_smallest_critic() {
        let spec = NetSpec::new(3, &[], 1, OutputActivation::Identity).unwrap();
        let mut low = Net::zeros(spec.clone()).unwrap();
        low.layers_mut()[0].b[0] = -2.0;
        let mut high = Net::zeros(spec).unwrap();
        high.layers_mut()[0].b[0] = 5.0;
        let nets = vec![high, low];
        let ens = EnsembleMin::new(&nets, 1);
        assert_eq!(ens.value(&[0.0, 0.0], &[0.0]), -2.0);
    }

    #[test]
    fn ensemble_action_grad_follows_the_argmin_critic() {
        // Two linear critics in (s, a); the lower one determines the gradient.
        let spec = NetSpec::new(2, &[], 1, OutputActivation::Identity).unwrap();
        let mut a_net = Net::zeros(spec.clone()).unwrap();
        a_net.layers_mut()[0].w = vec![0.0, 3.0]; // q = 3a
        let mut b_net = Net::zeros(spec).unwrap();
        b_net.layers_mut()[0].w = vec![0.0, -0.5]; // q = -a/2
        b_net.layers_mut()[0].b[0] = -1.0;
        let nets = vec![a_net, b_net];
        let ens = EnsembleMin::new(&nets, 1);
        let (val, grad) = ens.value_and_action_grad(&[0.2], &[1.0]);
        assert!((val - (-1.5)).abs() < 1e-12);
        assert!((grad[0] - (-0.5)).abs() < 1e-12);
    }

    #[test]
    fn mu_loss_with_lambda_zero_reduces_to_negative_mean_q() {
        let mut rng = stream_rng(3, 0);
        let mu_spec = NetSpec::new(2, &[8], 1, OutputActivation::Bounded(2.0)).unwrap();
        let mu = Net::init(mu_spec, &mut rng).unwrap();
        let q_spec = NetSpec::new(2, &[8], 1, OutputActivation::Identity).unwrap();
        let q = Net::init(q_spec, &mut rng).unwrap();
        let nets = vec![q];
        let ens = EnsembleMin::new(&nets, 1);
        let states = vec![vec![0.3], vec![-0.4]];
        let actions = vec![vec![0.1], vec![0.5]];
        let coefs = vec![0.0, 0.0];
        let loss = mu_loss_core(&mu, &states, &actions, &coefs, &ens, 1.0)
            .unwrap()
            .loss;
        // Reference: -mean Q(s, clip(a + mu)).
        let mut expect = 0.0;
        for (s, a) in states.iter().zip(&actions) {
            let delta = mu.forward(&concat(s, a)).unwrap();
            let opt = optimized_action(a, &delta, 1.0);
            expect -= ens.value(s, &opt);
        }
        expect /= 2.0;
        assert!((loss - expect).abs() < 1e-12);
    }

    #[test]
    fn frozen_linear_q_with_dominant_penalty_drives_mu_to_zero() {
        // Q(s, a) = w . a with ||w|| < coef: the penalized objective
        // w . delta - coef ||delta|| is uniquely maximized at delta = 0, so
        // the gradient at mu = 0 must vanish (subgradient convention).
        let q_spec = NetSpec::new(2, &[], 1, OutputActivation::Identity).unwrap();
        let mut q = Net::zeros(q_spec).unwrap();
        q.layers_mut()[0].w = vec![0.0, 0.7]; // d q / d a = 0.7
        let mu_spec = NetSpec::new(2, &[], 1, OutputActivation::Identity).unwrap();
        let mu = Net::zeros(mu_spec).unwrap(); // outputs exactly 0
        let nets = vec![q];
        let ens = EnsembleMin::new(&nets, 1);
        let grads = mu_loss_core(
            &mu,
            &[vec![0.5]],
            &[vec![0.0]],
            &[2.0], // coef > ||w||
            &ens,
            1.0,
        )
        .unwrap()
        .grads;
        // At delta = 0 the norm subgradient is 0; the remaining gradient pulls
        // toward larger Q, magnitude 0.7 on the bias.
        assert!((grads.layers[0].db[0] - (-0.7)).abs() < 1e-12);
        // A few optimizer steps with the penalty active stay near zero: the
        // fixed point of the penalized objective. Verified end-to-end in the
        // frozen-critic tests.
    }

    #[test]
    fn single_sample_pi_regression_recovers_the_target() {
        let spec = NetSpec::new(1, &[16, 16], 1, OutputActivation::Bounded(1.0)).unwrap();
        let mut rng = stream_rng(5, 0);
        let mut pi = Net::init(spec, &mut rng).unwrap();
        let mut opt = crate::nnet::Adam::new(&pi, 1e-2);
        let states = vec![vec![0.3]];
        let targets = vec![vec![0.62]];
        let weights = vec![1.7];
        for _ in 0..3000 {
            let (_, grads) = pi_loss_core(&pi, &states, &targets, &weights).unwrap();
            opt.apply(&mut pi, &grads).unwrap();
        }
        let out = pi.forward(&[0.3]).unwrap();
        assert!(
            (out[0] - 0.62).abs() < 1e-4,
            "single-target weighted regression should interpolate, got {}",
            out[0]
        );
    }
}
