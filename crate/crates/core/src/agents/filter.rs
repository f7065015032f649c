//! Advantage filters that turn advantage estimates into BC sample weights.

use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, StudentsT};

use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FilterKind {
    /// `1{A > 0}`
    Binary,
    /// `min(exp(beta * A), clip_max)`
    Exponential,
    /// Paired t-test of dataset-action against policy-action advantages.
    TtestAnnealed,
    /// Ensemble of sigmoid classifiers trained on advantage signs.
    Classifier,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct FilterConfig {
    pub kind: FilterKind,
    pub beta: f64,
    pub clip_max: f64,
    /// Feed `A / sigma` (PopArt-standardized) to the exponential filter.
    pub popart_rescale: bool,
    pub ttest: TtestConfig,
    pub classifier: ClassifierConfig,
}

impl Default for FilterConfig {
    fn default() -> Self {
        FilterConfig {
            kind: FilterKind::Binary,
            beta: 1.0,
            clip_max: 20.0,
            popart_rescale: true,
            ttest: TtestConfig::default(),
            classifier: ClassifierConfig::default(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TtestConfig {
    pub k_estimates: usize,
    pub p_start: f64,
    pub p_end: f64,
    /// Fraction of training over which the threshold falls linearly from
    /// `p_start` to `p_end`.
    pub anneal_fraction: f64,
}

impl Default for TtestConfig {
    fn default() -> Self {
        TtestConfig {
            k_estimates: 8,
            p_start: 1.0,
            p_end: 0.05,
            anneal_fraction: 0.5,
        }
    }
}

impl TtestConfig {
    pub fn threshold(&self, step: usize, total_steps: usize) -> f64 {
        let span = self.anneal_fraction * total_steps as f64;
        if span <= 0.0 {
            return self.p_end;
        }
        let frac = (step as f64 / span).min(1.0);
        self.p_start + (self.p_end - self.p_start) * frac
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ClassifierConfig {
    pub ensemble_size: usize,
    pub hidden: Vec<usize>,
    pub lr: f64,
    pub confidence_threshold: f64,
    pub max_disagreement: f64,
}

impl Default for ClassifierConfig {
    fn default() -> Self {
        ClassifierConfig {
            ensemble_size: 3,
            hidden: vec![64, 64],
            lr: 3e-4,
            confidence_threshold: 0.6,
            max_disagreement: 0.2,
        }
    }
}

impl FilterConfig {
    pub fn validate(&self) -> Result<()> {
        if self.kind == FilterKind::Exponential && !(self.beta > 0.0 && self.beta.is_finite()) {
            return Err(Error::config(format!("agent.filter.beta must be positive, got {}", self.beta)));
        }
        if !(self.clip_max > 0.0) {
            return Err(Error::config(format!("agent.filter.clip_max must be positive, got {}", self.clip_max)));
        }
        let t = &self.ttest;
        if t.k_estimates < 2 {
            return Err(Error::config("agent.filter.ttest.k_estimates must be at least 2"));
        }
        if !(0.0..=1.0).contains(&t.p_end) || !(0.0..=1.0).contains(&t.p_start) || t.p_end > t.p_start {
            return Err(Error::config(
                "agent.filter.ttest thresholds must satisfy 0 <= p_end <= p_start <= 1",
            ));
        }
        if !(0.0..=1.0).contains(&t.anneal_fraction) {
            return Err(Error::config("agent.filter.ttest.anneal_fraction must lie in [0, 1]"));
        }
        let c = &self.classifier;
        if c.ensemble_size == 0 {
            return Err(Error::config("agent.filter.classifier.ensemble_size must be positive"));
        }
        if !(c.lr > 0.0) {
            return Err(Error::config("agent.filter.classifier.lr must be positive"));
        }
        if !(0.0..=1.0).contains(&c.confidence_threshold) || !(c.max_disagreement >= 0.0) {
            return Err(Error::config("agent.filter.classifier thresholds out of range"));
        }
        Ok(())
    }

    /// Weight for one advantage under the binary or exponential filter.
    pub fn weight(&self, advantage: f64) -> f64 {
        match self.kind {
            FilterKind::Exponential => (self.beta * advantage).exp().min(self.clip_max),
            _ => binary_weight(advantage),
        }
    }
}

pub fn binary_weight(advantage: f64) -> f64 {
    if advantage > 0.0 {
        1.0
    } else {
        0.0
    }
}

/// Binary or exponential weights for a batch of advantages.
pub fn apply_filter(filter: &FilterConfig, advantages: &[f64]) -> Vec<f64> {
    advantages.iter().map(|&a| filter.weight(a)).collect()
}

/// One-sided p-value of `H1: mean(d) > 0` for paired differences `d`, using
/// Student's t with `k - 1` degrees of freedom. `None` when the differences
/// have zero variance and the statistic is undefined.
pub fn one_sided_p_value(diffs: &[f64]) -> Option<f64> {
    let k = diffs.len();
    if k < 2 {
        return None;
    }
    let n = k as f64;
    let mean = diffs.iter().sum::<f64>() / n;
    let var = diffs.iter().map(|d| (d - mean).powi(2)).sum::<f64>() / (n - 1.0);
    if !(var > 0.0) {
        return None;
    }
    let t = mean / (var / n).sqrt();
    let dist = StudentsT::new(0.0, 1.0, n - 1.0).ok()?;
    Some(1.0 - dist.cdf(t))
}

/// Approves iff the dataset-action advantages exceed the paired
/// policy-action advantages at confidence `p_threshold`. Degenerate
/// zero-variance samples approve iff the mean difference is positive.
pub fn paired_ttest_approve(dataset: &[f64], policy: &[f64], p_threshold: f64) -> bool {
    if p_threshold >= 1.0 {
        return true;
    }
    let diffs: Vec<f64> = dataset.iter().zip(policy).map(|(a, b)| a - b).collect();
    match one_sided_p_value(&diffs) {
        Some(p) => p <= p_threshold,
        None => diffs.iter().sum::<f64>() > 0.0,
    }
}

/// `softmax_b(tau * std_b)` over the batch.
pub fn uncertainty_weights(stds: &[f64], tau_temp: f64) -> Vec<f64> {
    let logits: Vec<f64> = stds.iter().map(|s| tau_temp * s).collect();
    let max = logits.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let exps: Vec<f64> = logits.iter().map(|l| (l - max).exp()).collect();
    let z: f64 = exps.iter().sum();
    exps.iter().map(|e| e / z).collect()
}
