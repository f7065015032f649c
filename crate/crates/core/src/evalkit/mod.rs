//! Scoring learning curves, advantage histograms and report files.

mod report;

use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, StudentsT};

use crate::error::{Error, Result};

pub use report::{emit_report, load_run_curves, load_runs, RunLogs, LOG_FILE};

pub const SMOOTHING_COEFF: f64 = 0.65;
pub const SCORE_WINDOW: usize = 10;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LearningCurve {
    pub seed: String,
    pub steps: Vec<usize>,
    pub returns: Vec<f64>,
}

impl LearningCurve {
    pub fn validate(&self) -> Result<()> {
        if self.steps.len() != self.returns.len() {
            return Err(Error::data(format!(
                "curve {} has {} steps but {} returns",
                self.seed,
                self.steps.len(),
                self.returns.len()
            )));
        }
        if self.steps.windows(2).any(|w| w[0] >= w[1]) {
            return Err(Error::data(format!("curve {} steps are not strictly increasing", self.seed)));
        }
        Ok(())
    }
}

/// `y'_0 = y_0`, `y'_t = coeff * y'_{t-1} + (1 - coeff) * y_t`.
pub fn smooth(values: &[f64], coeff: f64) -> Result<Vec<f64>> {
    let (&first, rest) = values
        .split_first()
        .ok_or_else(|| Error::usage("cannot smooth an empty curve"))?;
    let mut out = Vec::with_capacity(values.len());
    out.push(first);
    let mut prev = first;
    for &y in rest {
        prev = coeff * prev + (1.0 - coeff) * y;
        out.push(prev);
    }
    Ok(out)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ScoreReport {
    pub mean: f64,
    /// Two standard deviations of the cross-seed curve, averaged over the window.
    pub spread: f64,
    /// Half-width of a 95% Student-t confidence interval over per-seed window means.
    pub ci95: f64,
    pub n_seeds: usize,
    pub window: usize,
}

/// Pointwise cross-seed mean and population std of the smoothed curves.
pub fn cross_seed_curves(curves: &[LearningCurve], coeff: f64) -> Result<(Vec<f64>, Vec<f64>)> {
    let first = curves.first().ok_or_else(|| Error::usage("score needs at least one curve"))?;
    for c in curves {
        c.validate()?;
        if c.steps != first.steps {
            return Err(Error::data(format!(
                "curve {} is not aligned with curve {}",
                c.seed, first.seed
            )));
        }
    }
    let smoothed = curves
        .iter()
        .map(|c| smooth(&c.returns, coeff))
        .collect::<Result<Vec<_>>>()?;
    let k = curves.len() as f64;
    let len = first.steps.len();
    let mut mean = Vec::with_capacity(len);
    let mut std = Vec::with_capacity(len);
    for t in 0..len {
        let m = smoothed.iter().map(|s| s[t]).sum::<f64>() / k;
        let v = smoothed.iter().map(|s| (s[t] - m).powi(2)).sum::<f64>() / k;
        mean.push(m);
        std.push(v.sqrt());
    }
    Ok((mean, std))
}

/// Smooths each seed's curve, forms the cross-seed mean and std curves, and
/// averages both over the final `window` evaluations.
pub fn score(curves: &[LearningCurve], window: usize) -> Result<ScoreReport> {
    if window == 0 {
        return Err(Error::usage("score window must be positive"));
    }
    let (mean, std) = cross_seed_curves(curves, SMOOTHING_COEFF)?;
    let len = mean.len();
    let w = window.min(len);
    let tail = len - w;
    let avg = |xs: &[f64]| xs.iter().sum::<f64>() / xs.len() as f64;
    let n = curves.len();
    let ci95 = if n > 1 {
        let per_seed: Vec<f64> = curves
            .iter()
            .map(|c| smooth(&c.returns, SMOOTHING_COEFF).map(|s| avg(&s[tail..])))
            .collect::<Result<_>>()?;
        let m = avg(&per_seed);
        let sd = (per_seed.iter().map(|x| (x - m).powi(2)).sum::<f64>() / (n as f64 - 1.0)).sqrt();
        let t = StudentsT::new(0.0, 1.0, n as f64 - 1.0)
            .map_err(|e| Error::data(e.to_string()))?
            .inverse_cdf(0.975);
        t * sd / (n as f64).sqrt()
    } else {
        0.0
    };
    Ok(ScoreReport {
        mean: avg(&mean[tail..]),
        spread: 2.0 * avg(&std[tail..]),
        ci95,
        n_seeds: n,
        window: w,
    })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Histogram {
    /// `bins + 1` increasing edges.
    pub edges: Vec<f64>,
    pub counts: Vec<u64>,
    pub negatives: u64,
}

impl Histogram {
    pub fn total(&self) -> u64 {
        self.counts.iter().sum()
    }

    pub fn negative_fraction(&self) -> f64 {
        self.negatives as f64 / self.total().max(1) as f64
    }
}

fn percentile(sorted: &[f64], q: f64) -> f64 {
    let rank = (q * (sorted.len() - 1) as f64).round() as usize;
    sorted[rank]
}

/// Uniform bins over `[-R, R]` with `R = max(|p1|, |p99|)`; the outer edges
/// stretch to cover the observed minimum and maximum. Non-finite values are
/// dropped.
pub fn advantage_histogram(advantages: &[f64], bins: usize) -> Histogram {
    let bins = bins.max(1);
    let mut sorted: Vec<f64> = advantages.iter().copied().filter(|a| a.is_finite()).collect();
    sorted.sort_by(f64::total_cmp);
    let r = if sorted.is_empty() {
        1e-9
    } else {
        percentile(&sorted, 0.01).abs().max(percentile(&sorted, 0.99).abs()).max(1e-9)
    };
    let width = 2.0 * r / bins as f64;
    let mut edges: Vec<f64> = (0..=bins).map(|i| -r + i as f64 * width).collect();
    edges[bins] = r;
    if let (Some(&lo), Some(&hi)) = (sorted.first(), sorted.last()) {
        edges[0] = edges[0].min(lo);
        edges[bins] = edges[bins].max(hi);
    }
    let mut counts = vec![0u64; bins];
    for &a in &sorted {
        let i = (((a + r) / width).floor().max(0.0) as usize).min(bins - 1);
        counts[i] += 1;
    }
    Histogram {
        edges,
        counts,
        negatives: sorted.iter().filter(|&&a| a < 0.0).count() as u64,
    }
}
