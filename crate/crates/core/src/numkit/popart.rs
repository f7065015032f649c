//! Adaptive target normalization with output-preserving rescaling of the
//! final layer.

use serde::{Deserialize, Serialize};

use super::mlp::MlpNet;
use crate::error::{Error, Result};
use crate::scalar::Scalar;

/// Step-size schedule used when folding a batch into the running moments.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PopArtSchedule {
    /// `beta / (1 - (1 - beta)^t)`: an exponential moving average with the
    /// initialization bias removed, so the first batch fully replaces the
    /// initial moments.
    BiasCorrected,
    /// `beta / (1 + t * beta)`: starts at `beta`, decays like `1/t`.
    Harmonic,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PopArtConfig {
    pub beta: f64,
    pub sigma_min: f64,
    pub nu_init: f64,
    pub schedule: PopArtSchedule,
}

impl Default for PopArtConfig {
    fn default() -> Self {
        PopArtConfig {
            beta: 3e-4,
            sigma_min: 1e-4,
            nu_init: 100.0,
            schedule: PopArtSchedule::BiasCorrected,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct PopArtStats<T> {
    pub config: PopArtConfig,
    mu: T,
    nu: T,
    step: u64,
    skipped: u64,
}

impl<T: Scalar> PopArtStats<T> {
    pub fn new(config: PopArtConfig) -> Result<Self> {
        if !(config.beta > 0.0 && config.beta <= 1.0) {
            return Err(Error::config(format!("popart beta must be in (0, 1], got {}", config.beta)));
        }
        if !(config.sigma_min > 0.0) || !(config.nu_init > 0.0) {
            return Err(Error::config("popart sigma_min and nu_init must be positive"));
        }
        Ok(PopArtStats {
            config,
            mu: T::zero(),
            nu: T::lit(config.nu_init),
            step: 0,
            skipped: 0,
        })
    }

    pub fn mu(&self) -> T {
        self.mu
    }

    pub fn nu(&self) -> T {
        self.nu
    }

    pub fn step(&self) -> u64 {
        self.step
    }

    /// Number of non-finite targets dropped so far.
    pub fn skipped(&self) -> u64 {
        self.skipped
    }

    pub fn sigma(&self) -> T {
        let floor = T::lit(self.config.sigma_min);
        let var = self.nu - self.mu * self.mu;
        var.max(floor * floor).sqrt()
    }

    pub fn normalize(&self, y: T) -> T {
        (y - self.mu) / self.sigma()
    }

    pub fn denormalize(&self, x: T) -> T {
        x * self.sigma() + self.mu
    }

    fn step_size(&self, t: u64) -> T {
        let beta = self.config.beta;
        let b = match self.config.schedule {
            PopArtSchedule::BiasCorrected => beta / (1.0 - (1.0 - beta).powf(t as f64)),
            PopArtSchedule::Harmonic => beta / (1.0 + t as f64 * beta),
        };
        T::lit(b.min(1.0))
    }

    /// Folds `targets` into the running moments, then rescales the output
    /// layer of every network in `nets` so `sigma * f(x) + mu` is unchanged
    /// for every input.
    pub fn update(&mut self, nets: &mut [&mut MlpNet<T>], targets: &[T]) -> Result<()> {
        let mut sum = T::zero();
        let mut sum_sq = T::zero();
        let mut n = 0usize;
        for &y in targets {
            if y.is_finite() {
                sum += y;
                sum_sq += y * y;
                n += 1;
            } else {
                self.skipped += 1;
            }
        }
        if n == 0 {
            if targets.is_empty() {
                return Err(Error::usage("popart update with an empty target batch"));
            }
            log::warn!("popart update skipped: all {} targets non-finite", targets.len());
            return Ok(());
        }
        let count = T::from_usize(n).unwrap();
        let batch_mu = sum / count;
        let batch_nu = sum_sq / count;

        let old_mu = self.mu;
        let old_sigma = self.sigma();
        let t = self.step + 1;
        let b = self.step_size(t);
        let mu = (T::one() - b) * self.mu + b * batch_mu;
        let nu = (T::one() - b) * self.nu + b * batch_nu;
        // keep nu >= mu^2 so the variance never goes negative through rounding
        self.mu = mu;
        self.nu = nu.max(mu * mu);
        self.step = t;
        let new_sigma = self.sigma();

        let scale = old_sigma / new_sigma;
        for net in nets.iter_mut() {
            let out = net.output_layer_mut();
            out.weight.mapv_inplace(|w| w * scale);
            out.bias
                .mapv_inplace(|b| (old_sigma * b + old_mu - self.mu) / new_sigma);
        }
        Ok(())
    }
}
