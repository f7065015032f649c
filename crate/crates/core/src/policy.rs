//! Tanh-squashed diagonal Gaussian policy.
//!
//! The trunk emits `2 * action_dim` values per state: the pre-squash means
//! followed by the log standard deviations. Log-stds are clamped to
//! `[log_std_min, log_std_max]` (gradients stop at the clamp).

use ndarray::{s, Array1, Array2, ArrayView1, ArrayView2, Axis};
use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numkit::{GradTape, MlpNet};
use crate::scalar::Scalar;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PolicyConfig {
    pub log_std_min: f64,
    pub log_std_max: f64,
    /// Added inside the change-of-variables log term.
    pub squash_eps: f64,
    /// Foreign actions are clamped to `[-1 + action_clamp, 1 - action_clamp]` before `atanh`.
    pub action_clamp: f64,
    /// Log-probabilities are clipped to `[-log_prob_clip, log_prob_clip]`.
    pub log_prob_clip: f64,
}

impl Default for PolicyConfig {
    fn default() -> Self {
        PolicyConfig {
            log_std_min: -10.0,
            log_std_max: 2.0,
            squash_eps: 1e-6,
            action_clamp: 1e-6,
            log_prob_clip: 1000.0,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct SquashedGaussianPolicy<T> {
    trunk: MlpNet<T>,
    action_dim: usize,
    config: PolicyConfig,
}

/// Tolerance for foreign actions that sit a hair outside `[-1, 1]`.
const ACTION_RANGE_SLACK: f64 = 1e-6;

impl<T: Scalar> SquashedGaussianPolicy<T> {
    pub fn new<R: Rng + ?Sized>(
        state_dim: usize,
        action_dim: usize,
        hidden: &[usize],
        config: PolicyConfig,
        rng: &mut R,
    ) -> Result<Self> {
        let mut sizes = vec![state_dim];
        sizes.extend_from_slice(hidden);
        sizes.push(2 * action_dim);
        Self::from_trunk(MlpNet::new(&sizes, rng)?, config)
    }

    pub fn from_trunk(trunk: MlpNet<T>, config: PolicyConfig) -> Result<Self> {
        let out = trunk.output_dim();
        if out % 2 != 0 || out == 0 {
            return Err(Error::config(format!(
                "policy trunk must emit 2 * action_dim values, got width {out}"
            )));
        }
        if !(config.log_std_min < config.log_std_max) {
            return Err(Error::config("policy log_std_min must be below log_std_max"));
        }
        if !(config.squash_eps > 0.0 && config.action_clamp > 0.0 && config.action_clamp < 1.0) {
            return Err(Error::config("policy squash_eps and action_clamp must be small positive numbers"));
        }
        Ok(SquashedGaussianPolicy {
            trunk,
            action_dim: out / 2,
            config,
        })
    }

    pub fn trunk(&self) -> &MlpNet<T> {
        &self.trunk
    }

    pub fn trunk_mut(&mut self) -> &mut MlpNet<T> {
        &mut self.trunk
    }

    pub fn action_dim(&self) -> usize {
        self.action_dim
    }

    pub fn state_dim(&self) -> usize {
        self.trunk.input_dim()
    }

    pub fn config(&self) -> &PolicyConfig {
        &self.config
    }

    fn split_head(&self, raw: &Array2<T>) -> Result<(Array2<T>, Array2<T>)> {
        if raw.iter().any(|v| !v.is_finite()) {
            return Err(Error::non_finite("policy trunk produced a non-finite output"));
        }
        let d = self.action_dim;
        let mean = raw.slice(s![.., ..d]).to_owned();
        let lo = T::lit(self.config.log_std_min);
        let hi = T::lit(self.config.log_std_max);
        let log_std = raw.slice(s![.., d..]).mapv(|v| v.max(lo).min(hi));
        Ok((mean, log_std))
    }

    /// Pre-squash means and clamped log-stds for a batch of states.
    pub fn distribution(&self, states: ArrayView2<T>) -> Result<(Array2<T>, Array2<T>)> {
        let raw = self.trunk.forward_batch(states)?;
        self.split_head(&raw)
    }

    fn action_bound(&self) -> T {
        T::one() - T::lit(self.config.action_clamp)
    }

    /// Draws `a = tanh(u)`, `u ~ N(mean, diag(std^2))` for each row and returns
    /// the actions with their log-densities.
    pub fn sample_batch<R: Rng + ?Sized>(
        &self,
        states: ArrayView2<T>,
        rng: &mut R,
    ) -> Result<(Array2<T>, Array1<T>)> {
        let (mean, log_std) = self.distribution(states)?;
        let n = mean.nrows();
        let d = self.action_dim;
        let bound = self.action_bound();
        let half_ln_2pi = T::lit(0.5 * (2.0 * std::f64::consts::PI).ln());
        let eps = T::lit(self.config.squash_eps);
        let clip = T::lit(self.config.log_prob_clip);
        let mut actions = Array2::zeros((n, d));
        let mut log_probs = Array1::zeros(n);
        for i in 0..n {
            let mut lp = T::zero();
            for j in 0..d {
                let noise: f64 = rng.sample(StandardNormal);
                let noise = T::lit(noise);
                let ls = log_std[[i, j]];
                let u = mean[[i, j]] + ls.exp() * noise;
                let a = u.tanh();
                lp += -T::lit(0.5) * noise * noise - ls - half_ln_2pi - (T::one() - a * a + eps).ln();
                actions[[i, j]] = a.max(-bound).min(bound);
            }
            log_probs[i] = lp.max(-clip).min(clip);
        }
        Ok((actions, log_probs))
    }

    pub fn sample_action<R: Rng + ?Sized>(&self, state: &[T], rng: &mut R) -> Result<(Vec<T>, T)> {
        let x = ArrayView1::from(state).insert_axis(Axis(0));
        let (a, lp) = self.sample_batch(x, rng)?;
        Ok((a.row(0).to_vec(), lp[0]))
    }

    /// Deterministic action `tanh(mean)`, used for evaluation.
    pub fn mean_action(&self, state: &[T]) -> Result<Vec<T>> {
        let x = ArrayView1::from(state).insert_axis(Axis(0));
        Ok(self.mean_batch(x)?.row(0).to_vec())
    }

    pub fn mean_batch(&self, states: ArrayView2<T>) -> Result<Array2<T>> {
        let (mean, _) = self.distribution(states)?;
        Ok(mean.mapv(|m| m.tanh()))
    }

    fn check_actions(&self, actions: ArrayView2<T>) -> Result<()> {
        if actions.ncols() != self.action_dim {
            return Err(Error::Shape {
                context: "policy action width",
                expected: self.action_dim,
                actual: actions.ncols(),
            });
        }
        let limit = T::lit(1.0 + ACTION_RANGE_SLACK);
        if let Some(bad) = actions.iter().find(|a| !(a.abs() <= limit)) {
            return Err(Error::data(format!("action {bad} lies outside [-1, 1]")));
        }
        Ok(())
    }

    /// Per-row log-density of foreign actions plus the pre-squash values
    /// `u = atanh(clamped action)` and a mask of rows whose value hit the clip.
    fn log_prob_parts(
        &self,
        mean: &Array2<T>,
        log_std: &Array2<T>,
        actions: ArrayView2<T>,
    ) -> (Array1<T>, Array2<T>, Vec<bool>) {
        let n = mean.nrows();
        let d = self.action_dim;
        let bound = self.action_bound();
        let half = T::lit(0.5);
        let half_ln_2pi = T::lit(0.5 * (2.0 * std::f64::consts::PI).ln());
        let eps = T::lit(self.config.squash_eps);
        let clip = T::lit(self.config.log_prob_clip);
        let mut u_all = Array2::zeros((n, d));
        let mut lps = Array1::zeros(n);
        let mut clipped = vec![false; n];
        for i in 0..n {
            let mut lp = T::zero();
            for j in 0..d {
                let a = actions[[i, j]].max(-bound).min(bound);
                let u = half * ((T::one() + a) / (T::one() - a)).ln();
                u_all[[i, j]] = u;
                let ls = log_std[[i, j]];
                let z = (u - mean[[i, j]]) / ls.exp();
                lp += -half * z * z - ls - half_ln_2pi - (T::one() - a * a + eps).ln();
            }
            if !(lp > -clip && lp < clip) {
                clipped[i] = true;
            }
            lps[i] = if lp.is_nan() { -clip } else { lp.max(-clip).min(clip) };
        }
        (lps, u_all, clipped)
    }

    pub fn log_prob_batch(&self, states: ArrayView2<T>, actions: ArrayView2<T>) -> Result<Array1<T>> {
        self.check_actions(actions)?;
        let (mean, log_std) = self.distribution(states)?;
        if actions.nrows() != mean.nrows() {
            return Err(Error::Shape {
                context: "policy log_prob batch",
                expected: mean.nrows(),
                actual: actions.nrows(),
            });
        }
        Ok(self.log_prob_parts(&mean, &log_std, actions).0)
    }

    pub fn log_prob(&self, state: &[T], action: &[T]) -> Result<T> {
        let x = ArrayView1::from(state).insert_axis(Axis(0));
        let a = ArrayView1::from(action).insert_axis(Axis(0));
        Ok(self.log_prob_batch(x, a)?[0])
    }

    /// Forward and backward pass of `L = (1/B) sum_b -w_b log pi(a_b | s_b)`.
    ///
    /// Leaves the trunk gradients in `tape` and returns `L`. Rows whose
    /// log-probability was clipped, and log-std coordinates sitting at a clamp,
    /// contribute no gradient.
    pub fn weighted_nll_backward(
        &self,
        states: ArrayView2<T>,
        actions: ArrayView2<T>,
        weights: ArrayView1<T>,
        tape: &mut GradTape<T>,
    ) -> Result<T> {
        self.check_actions(actions)?;
        let n = states.nrows();
        if actions.nrows() != n || weights.len() != n {
            return Err(Error::Shape {
                context: "policy nll batch",
                expected: n,
                actual: actions.nrows().min(weights.len()),
            });
        }
        if n == 0 {
            return Err(Error::usage("empty actor batch"));
        }
        let raw = self.trunk.forward_train(states, tape)?;
        let (mean, log_std) = self.split_head(&raw)?;
        let (lps, u, clipped) = self.log_prob_parts(&mean, &log_std, actions);
        let d = self.action_dim;
        let inv_n = T::one() / T::from_usize(n).unwrap();
        let lo = T::lit(self.config.log_std_min);
        let hi = T::lit(self.config.log_std_max);

        let mut loss = T::zero();
        let mut grad = Array2::zeros(raw.raw_dim());
        for i in 0..n {
            let w = weights[i];
            loss -= w * lps[i];
            if clipped[i] || w == T::zero() {
                continue;
            }
            let c = w * inv_n;
            for j in 0..d {
                let std = log_std[[i, j]].exp();
                let z = (u[[i, j]] - mean[[i, j]]) / std;
                grad[[i, j]] = -c * z / std;
                let r = raw[[i, d + j]];
                if r > lo && r < hi {
                    grad[[i, d + j]] = -c * (z * z - T::one());
                }
            }
        }
        loss *= inv_n;
        if !loss.is_finite() {
            return Err(Error::non_finite("actor loss"));
        }
        self.trunk.backward(tape, grad.view())?;
        Ok(loss)
    }
}
