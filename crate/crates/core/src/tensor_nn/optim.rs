//! AdamW with decoupled weight decay.

use super::Scalar;
use crate::error::{Error, Result};

/// Hyperparameters. Defaults: `lr = 1e-3`, `beta1 = 0.9`, `beta2 = 0.999`,
/// `eps = 1e-8`, `weight_decay = 0.01`.
#[derive(Clone, Copy, Debug)]
pub struct AdamWConfig {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    pub weight_decay: f64,
}

impl Default for AdamWConfig {
    fn default() -> Self {
        Self { lr: 1e-3, beta1: 0.9, beta2: 0.999, eps: 1e-8, weight_decay: 0.01 }
    }
}

impl AdamWConfig {
    fn validate(&self) -> Result<()> {
        if !(self.lr > 0.0 && self.lr.is_finite()) {
            return Err(Error::Domain(format!("learning rate must be positive, got {}", self.lr)));
        }
        for (name, b) in [("beta1", self.beta1), ("beta2", self.beta2)] {
            if !(0.0..1.0).contains(&b) {
                return Err(Error::Domain(format!("{name} must lie in [0, 1), got {b}")));
            }
        }
        if !(self.eps > 0.0) {
            return Err(Error::Domain(format!("eps must be positive, got {}", self.eps)));
        }
        if !(self.weight_decay >= 0.0 && self.weight_decay.is_finite()) {
            return Err(Error::Domain(format!(
                "weight decay must be non-negative, got {}",
                self.weight_decay
            )));
        }
        Ok(())
    }
}

/// First and second moment estimates, one pair per parameter tensor.
#[derive(Clone, Debug)]
pub struct AdamWState<T> {
    m: Vec<Vec<T>>,
    v: Vec<Vec<T>>,
    step: u64,
}

impl<T: Scalar> AdamWState<T> {
    pub fn new(sizes: &[usize]) -> Self {
        Self {
            m: sizes.iter().map(|&s| vec![T::zero(); s]).collect(),
            v: sizes.iter().map(|&s| vec![T::zero(); s]).collect(),
            step: 0,
        }
    }

    pub fn step_count(&self) -> u64 {
        self.step
    }
}

/// One update:
/// `m = b1 m + (1-b1) g`, `v = b2 v + (1-b2) g^2`, hat-corrected,
/// `p <- p - lr * m_hat / (sqrt(v_hat) + eps) - lr * wd * p`.
/// The decay term multiplies the incoming parameter value, not the
/// gradient-adjusted one.
pub fn adamw_step<T: Scalar>(
    params: &mut [&mut [T]],
    grads: &[&[T]],
    state: &mut AdamWState<T>,
    cfg: &AdamWConfig,
) -> Result<()> {
    cfg.validate()?;
    if params.len() != grads.len() || params.len() != state.m.len() {
        return Err(Error::Shape(format!(
            "{} parameter tensors, {} gradients, {} moment pairs",
            params.len(),
            grads.len(),
            state.m.len()
        )));
    }
    for (i, (p, g)) in params.iter().zip(grads).enumerate() {
        if p.len() != g.len() || p.len() != state.m[i].len() {
            return Err(Error::Shape(format!(
                "tensor {i}: {} parameters, {} gradients, {} moments",
                p.len(),
                g.len(),
                state.m[i].len()
            )));
        }
    }

    state.step += 1;
    let t = state.step as i32;
    let b1 = T::from_f64(cfg.beta1);
    let b2 = T::from_f64(cfg.beta2);
    let one_m_b1 = T::from_f64(1.0 - cfg.beta1);
    let one_m_b2 = T::from_f64(1.0 - cfg.beta2);
    let inv_bc1 = T::from_f64(1.0 / (1.0 - cfg.beta1.powi(t)));
    let inv_bc2 = T::from_f64(1.0 / (1.0 - cfg.beta2.powi(t)));
    let lr = T::from_f64(cfg.lr);
    let eps = T::from_f64(cfg.eps);
    let decay = T::from_f64(cfg.lr * cfg.weight_decay);

    for ((p, g), (m, v)) in params
        .iter_mut()
        .zip(grads)
        .zip(state.m.iter_mut().zip(state.v.iter_mut()))
    {
        for k in 0..p.len() {
            let gk = g[k];
            m[k] = b1 * m[k] + one_m_b1 * gk;
            v[k] = b2 * v[k] + one_m_b2 * gk * gk;
            let m_hat = m[k] * inv_bc1;
            let v_hat = v[k] * inv_bc2;
            let pk = p[k];
            p[k] = pk - lr * m_hat / (v_hat.sqrt() + eps) - decay * pk;
        }
    }
    Ok(())
}
