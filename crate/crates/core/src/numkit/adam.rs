use serde::{Deserialize, Serialize};

use super::mlp::{Dense, GradTape, MlpNet};
use crate::error::{Error, Result};
use crate::scalar::Scalar;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct AdamConfig {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        AdamConfig {
            lr: 1e-4,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        }
    }
}

impl AdamConfig {
    pub fn with_lr(lr: f64) -> Self {
        AdamConfig {
            lr,
            ..Self::default()
        }
    }
}

/// First and second moment estimates for every parameter of one network.
#[derive(Clone, Debug)]
pub struct AdamState<T> {
    pub config: AdamConfig,
    m: Vec<Dense<T>>,
    v: Vec<Dense<T>>,
    step: u64,
}

impl<T: Scalar> AdamState<T> {
    pub fn new(net: &MlpNet<T>, config: AdamConfig) -> Self {
        let zeros: Vec<Dense<T>> = net
            .layers()
            .iter()
            .map(|l| Dense::zeros(l.fan_in(), l.fan_out()))
            .collect();
        AdamState {
            config,
            m: zeros.clone(),
            v: zeros,
            step: 0,
        }
    }

    pub fn step(&self) -> u64 {
        self.step
    }

    pub fn first_moments(&self) -> &[Dense<T>] {
        &self.m
    }
}

/// One bias-corrected Adam update of `net` from the gradients in `tape`.
pub fn adam_step<T: Scalar>(net: &mut MlpNet<T>, tape: &GradTape<T>, state: &mut AdamState<T>) -> Result<()> {
    if !tape.is_populated() {
        return Err(Error::usage("adam_step on a tape with no backward pass"));
    }
    if state.m.len() != net.layers().len() {
        return Err(Error::usage("optimizer state was built for a different network"));
    }
    if let Some(bad) = tape.to_flat().iter().position(|g| !g.is_finite()) {
        return Err(Error::non_finite(format!(
            "gradient entry {bad} is not finite; refusing optimizer step"
        )));
    }

    state.step += 1;
    let cfg = state.config;
    let t = state.step as i32;
    let b1 = T::lit(cfg.beta1);
    let b2 = T::lit(cfg.beta2);
    let one = T::one();
    let eps = T::lit(cfg.eps);
    let c1 = one - b1.powi(t);
    let c2 = one - b2.powi(t);
    let lr = T::lit(cfg.lr);

    let update = |p: &mut T, g: T, m: &mut T, v: &mut T| {
        *m = b1 * *m + (one - b1) * g;
        *v = b2 * *v + (one - b2) * g * g;
        let m_hat = *m / c1;
        let v_hat = *v / c2;
        *p -= lr * m_hat / (v_hat.sqrt() + eps);
    };

    for (((layer, grad), m), v) in net
        .layers_mut()
        .iter_mut()
        .zip(tape.grads())
        .zip(state.m.iter_mut())
        .zip(state.v.iter_mut())
    {
        ndarray::Zip::from(&mut layer.weight)
            .and(&grad.weight)
            .and(&mut m.weight)
            .and(&mut v.weight)
            .for_each(|p, &g, m, v| update(p, g, m, v));
        ndarray::Zip::from(&mut layer.bias)
            .and(&grad.bias)
            .and(&mut m.bias)
            .and(&mut v.bias)
            .for_each(|p, &g, m, v| update(p, g, m, v));
    }

    if !net.all_finite() {
        return Err(Error::non_finite(format!(
            "parameters became non-finite after optimizer step {}",
            state.step
        )));
    }
    Ok(())
}
