use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::network::ParamStore;
use crate::tensor::{Scalar, Tensor};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OptimizerConfig {
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    pub initial_lr: f64,
    /// The learning rate halves after this many epochs within a round.
    pub halve_every: usize,
    /// Clear Adam moments at each round boundary.
    pub reset_moments_each_round: bool,
}

impl Default for OptimizerConfig {
    fn default() -> Self {
        OptimizerConfig {
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            initial_lr: 1e-4,
            halve_every: 10,
            reset_moments_each_round: false,
        }
    }
}

impl OptimizerConfig {
    /// `initial_lr · 0.5^floor(epoch / halve_every)`.
    pub fn lr(&self, epoch_in_round: usize) -> f64 {
        let halvings = epoch_in_round / self.halve_every.max(1);
        self.initial_lr * 0.5f64.powi(halvings.min(1000) as i32)
    }

    pub fn validate(&self) -> Result<()> {
        let in_unit = |b: f64| (0.0..1.0).contains(&b);
        if !in_unit(self.beta1) || !in_unit(self.beta2) {
            return Err(Error::Config("beta1 and beta2 must lie in [0, 1)".into()));
        }
        if !(self.eps > 0.0 && self.initial_lr > 0.0 && self.eps.is_finite() && self.initial_lr.is_finite()) {
            return Err(Error::Config("eps and initial_lr must be positive".into()));
        }
        if self.halve_every == 0 {
            return Err(Error::Config("halve_every must be positive".into()));
        }
        Ok(())
    }
}

/// Adam moment accumulators, one pair per parameter.
#[derive(Debug, Clone, PartialEq)]
pub struct AdamState<T: Scalar> {
    pub step: u64,
    pub m: Vec<Tensor<T>>,
    pub v: Vec<Tensor<T>>,
}

impl<T: Scalar> AdamState<T> {
    pub fn new(params: &ParamStore<T>) -> Self {
        let zeros = || params.values().iter().map(|p| Tensor::zeros(p.shape())).collect();
        AdamState {
            step: 0,
            m: zeros(),
            v: zeros(),
        }
    }

    pub fn reset(&mut self) {
        self.step = 0;
        for t in self.m.iter_mut().chain(self.v.iter_mut()) {
            t.data_mut().fill(T::zero());
        }
    }
}

/// One bias-corrected Adam update. `grads[i]` belongs to parameter `i`.
pub fn adam_step<T: Scalar>(
    params: &mut ParamStore<T>,
    grads: &[Option<Tensor<T>>],
    state: &mut AdamState<T>,
    lr: f64,
    cfg: &OptimizerConfig,
) -> Result<()> {
    if grads.len() != params.len() || state.m.len() != params.len() {
        return Err(Error::Contract(format!(
            "adam_step: {} parameters, {} gradients, {} moment slots",
            params.len(),
            grads.len(),
            state.m.len()
        )));
    }
    for id in params.ids() {
        let g = grads[id.index()]
            .as_ref()
            .ok_or_else(|| Error::Contract(format!("missing gradient for parameter {}", params.name(id))))?;
        if g.shape() != params.get(id).shape() {
            return Err(Error::Contract(format!(
                "gradient for {} has shape {}, parameter has {}",
                params.name(id),
                g.shape(),
                params.get(id).shape()
            )));
        }
    }
    state.step += 1;
    let t = state.step.min(i32::MAX as u64) as i32;
    let (b1, b2) = (T::lit(cfg.beta1), T::lit(cfg.beta2));
    let (one_m_b1, one_m_b2) = (T::lit(1.0 - cfg.beta1), T::lit(1.0 - cfg.beta2));
    let c1 = T::lit(1.0 - cfg.beta1.powi(t));
    let c2 = T::lit(1.0 - cfg.beta2.powi(t));
    let (lr, eps) = (T::lit(lr), T::lit(cfg.eps));
    for id in params.ids() {
        let i = id.index();
        let g = grads[i].as_ref().expect("checked above").data();
        let m = state.m[i].data_mut();
        let v = state.v[i].data_mut();
        let p = params.get_mut(id).data_mut();
        for j in 0..p.len() {
            m[j] = b1 * m[j] + one_m_b1 * g[j];
            v[j] = b2 * v[j] + one_m_b2 * g[j] * g[j];
            let m_hat = m[j] / c1;
            let v_hat = v[j] / c2;
            p[j] -= lr * m_hat / (v_hat.sqrt() + eps);
        }
    }
    Ok(())
}
