//! Adaptive-moment optimizer with an optional cosine learning-rate schedule.

use crate::error::{Error, Result};

use super::{GradBuf, Net};

/// Optimizer state for one network: first/second moment accumulators shaped
/// like the parameters, a step counter, and the learning-rate schedule.
#[derive(Debug, Clone)]
pub struct Adam {
    m: GradBuf,
    v: GradBuf,
    step: u64,
    base_lr: f64,
    /// When set, the learning rate follows a half-cosine from `base_lr` down
    /// to 0 over this many optimizer steps.
    cosine_horizon: Option<u64>,
    beta1: f64,
    beta2: f64,
    eps: f64,
}

impl Adam {
    pub fn new(net: &Net, base_lr: f64) -> Self {
        Adam {
            m: GradBuf::zeros_like(net),
            v: GradBuf::zeros_like(net),
            step: 0,
            base_lr,
            cosine_horizon: None,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        }
    }

    pub fn with_cosine_horizon(mut self, steps: u64) -> Self {
        self.cosine_horizon = Some(steps.max(1));
        self
    }

    pub fn step_count(&self) -> u64 {
        self.step
    }

    /// Learning rate the *next* `apply` call will use.
    pub fn current_lr(&self) -> f64 {
        match self.cosine_horizon {
            None => self.base_lr,
            Some(horizon) => {
                let t = self.step.min(horizon) as f64 / horizon as f64;
                self.base_lr * 0.5 * (1.0 + (std::f64::consts::PI * t).cos())
            }
        }
    }

    /// One update. Non-finite gradients abort with a numeric error naming the
    /// offending step so the caller can attach context.
    pub fn apply(&mut self, net: &mut Net, grads: &GradBuf) -> Result<()> {
        if !grads.all_finite() {
            return Err(Error::numeric(format!(
                "non-finite gradient at optimizer step {}",
                self.step
            )));
        }
        let lr = self.current_lr();
        self.step += 1;
        let t = self.step as f64;
        let bc1 = 1.0 - self.beta1.powf(t);
        let bc2 = 1.0 - self.beta2.powf(t);

        for ((layer, g), (ml, vl)) in net
            .layers
            .iter_mut()
            .zip(&grads.layers)
            .zip(self.m.layers.iter_mut().zip(self.v.layers.iter_mut()))
        {
            update_slice(
                &mut layer.w,
                &g.dw,
                &mut ml.dw,
                &mut vl.dw,
                lr,
                self.beta1,
                self.beta2,
                self.eps,
                bc1,
                bc2,
            );
            update_slice(
                &mut layer.b,
                &g.db,
                &mut ml.db,
                &mut vl.db,
                lr,
                self.beta1,
                self.beta2,
                self.eps,
                bc1,
                bc2,
            );
        }
        Ok(())
    }
}

#[allow(clippy::too_many_arguments)]
fn update_slice(
    params: &mut [f64],
    grads: &[f64],
    m: &mut [f64],
    v: &mut [f64],
    lr: f64,
    beta1: f64,
    beta2: f64,
    eps: f64,
    bc1: f64,
    bc2: f64,
) {
    for i in 0..params.len() {
        let g = grads[i];
        m[i] = beta1 * m[i] + (1.0 - beta1) * g;
        v[i] = beta2 * v[i] + (1.0 - beta2) * g * g;
        let m_hat = m[i] / bc1;
        let v_hat = v[i] / bc2;
        params[i] -= lr * m_hat / (v_hat.sqrt() + eps);
    }
}
