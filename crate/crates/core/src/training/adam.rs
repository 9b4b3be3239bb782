//! Adam with bias correction.

use crate::error::{Error, Result};
use crate::model::ModelParams;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AdamConfig {
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        Self {
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        }
    }
}

/// First and second moments in parameter layout, plus the step count.
#[derive(Debug, Clone, PartialEq)]
pub struct AdamState {
    pub m: ModelParams,
    pub v: ModelParams,
    pub step: u64,
}

impl AdamState {
    pub fn new(like: &ModelParams) -> Self {
        Self {
            m: like.zeros_like(),
            v: like.zeros_like(),
            step: 0,
        }
    }
}

/// One update of `p` in place. A non-finite gradient leaves `p` and `state`
/// untouched and reports divergence.
pub fn adam_step(
    p: &mut ModelParams,
    g: &ModelParams,
    state: &mut AdamState,
    lr: f64,
    cfg: &AdamConfig,
) -> Result<()> {
    if !g.all_finite() {
        return Err(Error::Diverged("non-finite gradient".into()));
    }
    state.step += 1;
    let t = state.step as i32;
    let c1 = 1.0 - cfg.beta1.powi(t);
    let c2 = 1.0 - cfg.beta2.powi(t);
    let grads = g.tensors();
    let ms = state.m.tensors_mut();
    let vs = state.v.tensors_mut();
    for (k, (_, params)) in p.tensors_mut().into_iter().enumerate() {
        let (gs, m, v) = (grads[k].1, &mut *ms[k].1, &mut *vs[k].1);
        for i in 0..params.len() {
            m[i] = cfg.beta1 * m[i] + (1.0 - cfg.beta1) * gs[i];
            v[i] = cfg.beta2 * v[i] + (1.0 - cfg.beta2) * gs[i] * gs[i];
            let m_hat = m[i] / c1;
            let v_hat = v[i] / c2;
            params[i] -= lr * m_hat / (v_hat.sqrt() + cfg.eps);
        }
    }
    Ok(())
}
