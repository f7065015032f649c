//! Replay over a fixed offline dataset: uniform sampling for critic updates
//! and advantage-proportional sampling for actor updates. Batches carry
//! transitions and indices only; there are no importance weights.

mod tree;

use ndarray::{Array1, Array2};
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::datasets::Dataset;
use crate::error::{Error, Result};
use crate::Scalar;

pub use tree::PriorityTree;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PriorityScheme {
    /// `max(A, epsilon)`
    ClippedAdvantage,
    /// `1{A >= 0} + epsilon`
    Binary,
}

impl PriorityScheme {
    pub fn raw_priority(self, advantage: f64, epsilon: f64) -> f64 {
        match self {
            PriorityScheme::ClippedAdvantage => advantage.max(epsilon),
            PriorityScheme::Binary => f64::from(u8::from(advantage >= 0.0)) + epsilon,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SamplingMode {
    /// Independent draws `u ~ U[0, total)`; with flat priorities this picks
    /// the same indices as uniform sampling from the same random stream.
    Multinomial,
    /// Batch slot `i` draws `u` from the `i`-th of `B` equal sub-intervals.
    Stratified,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ReplayConfig {
    pub alpha: f64,
    pub epsilon: f64,
    pub scheme: PriorityScheme,
    pub sampling: SamplingMode,
}

impl Default for ReplayConfig {
    fn default() -> Self {
        ReplayConfig {
            alpha: 0.6,
            epsilon: 1e-3,
            scheme: PriorityScheme::ClippedAdvantage,
            sampling: SamplingMode::Multinomial,
        }
    }
}

impl ReplayConfig {
    pub fn validate(&self) -> Result<()> {
        if !(0.0..=1.0).contains(&self.alpha) {
            return Err(Error::config(format!("replay.alpha must lie in [0, 1], got {}", self.alpha)));
        }
        if !(self.epsilon > 0.0 && self.epsilon.is_finite()) {
            return Err(Error::config(format!("replay.epsilon must be positive, got {}", self.epsilon)));
        }
        Ok(())
    }
}

/// A minibatch in the network scalar type. `dones` is 1 for true terminals.
#[derive(Clone, Debug, PartialEq)]
pub struct Batch<T> {
    pub indices: Vec<usize>,
    pub states: Array2<T>,
    pub actions: Array2<T>,
    pub rewards: Array1<T>,
    pub next_states: Array2<T>,
    pub dones: Array1<T>,
    pub returns_to_go: Option<Array1<T>>,
}

impl<T> Batch<T> {
    pub fn len(&self) -> usize {
        self.indices.len()
    }

    pub fn is_empty(&self) -> bool {
        self.indices.is_empty()
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct ReplayStats {
    pub nan_priorities_skipped: u64,
    pub zero_total_fallbacks: u64,
}

#[derive(Clone, Debug)]
pub struct ReplayBuffer {
    data: Dataset,
    tree: PriorityTree,
    config: ReplayConfig,
    stats: ReplayStats,
}

impl ReplayBuffer {
    /// Wraps `data` with every priority at the cold-start value 1.
    pub fn new(data: Dataset, config: ReplayConfig) -> Result<Self> {
        config.validate()?;
        data.validate()?;
        let tree = PriorityTree::new(data.len(), config.alpha, config.epsilon)?;
        Ok(ReplayBuffer {
            data,
            tree,
            config,
            stats: ReplayStats::default(),
        })
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn data(&self) -> &Dataset {
        &self.data
    }

    pub fn tree(&self) -> &PriorityTree {
        &self.tree
    }

    pub fn config(&self) -> &ReplayConfig {
        &self.config
    }

    pub fn stats(&self) -> ReplayStats {
        self.stats
    }

    pub fn gather<T: Scalar>(&self, indices: Vec<usize>) -> Result<Batch<T>> {
        let d = &self.data;
        let (sd, ad, b) = (d.state_dim(), d.action_dim(), indices.len());
        if let Some(&bad) = indices.iter().find(|&&i| i >= d.len()) {
            return Err(Error::usage(format!("replay index {bad} out of range for {} rows", d.len())));
        }
        let conv = |x: &f32| T::from_f32_lossless(*x);
        let states = Array2::from_shape_fn((b, sd), |(r, c)| conv(&d.state(indices[r])[c]));
        let actions = Array2::from_shape_fn((b, ad), |(r, c)| conv(&d.action(indices[r])[c]));
        let next_states = Array2::from_shape_fn((b, sd), |(r, c)| conv(&d.next_state(indices[r])[c]));
        let rewards = indices.iter().map(|&i| conv(&d.reward(i))).collect();
        let dones = indices
            .iter()
            .map(|&i| if d.done(i) { T::one() } else { T::zero() })
            .collect();
        let returns_to_go = d
            .has_returns()
            .then(|| indices.iter().map(|&i| conv(&d.return_to_go(i).unwrap_or_default())).collect());
        Ok(Batch {
            indices,
            states,
            actions,
            rewards,
            next_states,
            dones,
            returns_to_go,
        })
    }

    pub fn uniform_indices<R: Rng + ?Sized>(&self, batch_size: usize, rng: &mut R) -> Result<Vec<usize>> {
        let n = self.len();
        if n == 0 {
            return Err(Error::usage("cannot sample from an empty replay buffer"));
        }
        Ok((0..batch_size)
            .map(|_| ((rng.random::<f64>() * n as f64) as usize).min(n - 1))
            .collect())
    }

    pub fn prioritized_indices<R: Rng + ?Sized>(&mut self, batch_size: usize, rng: &mut R) -> Result<Vec<usize>> {
        if self.is_empty() {
            return Err(Error::usage("cannot sample from an empty replay buffer"));
        }
        let total = self.tree.total();
        if !(total > 0.0 && total.is_finite()) {
            self.stats.zero_total_fallbacks += 1;
            log::warn!("total priority is {total}; falling back to uniform sampling");
            return self.uniform_indices(batch_size, rng);
        }
        let segment = total / batch_size.max(1) as f64;
        (0..batch_size)
            .map(|slot| {
                let u = match self.config.sampling {
                    SamplingMode::Multinomial => rng.random::<f64>() * total,
                    SamplingMode::Stratified => (slot as f64 + rng.random::<f64>()) * segment,
                };
                self.tree.sample_prefix(u)
            })
            .collect()
    }

    /// I.i.d. uniform indices with replacement.
    pub fn sample_uniform<T: Scalar, R: Rng + ?Sized>(&self, batch_size: usize, rng: &mut R) -> Result<Batch<T>> {
        let idx = self.uniform_indices(batch_size, rng)?;
        self.gather(idx)
    }

    /// Indices drawn proportionally to the exponentiated priorities.
    pub fn sample_prioritized<T: Scalar, R: Rng + ?Sized>(
        &mut self,
        batch_size: usize,
        rng: &mut R,
    ) -> Result<Batch<T>> {
        let idx = self.prioritized_indices(batch_size, rng)?;
        self.gather(idx)
    }

    /// Stores the scheme's raw priority for each advantage. NaN advantages
    /// are skipped and counted.
    pub fn update_priorities(&mut self, indices: &[usize], advantages: &[f64]) -> Result<()> {
        if indices.len() != advantages.len() {
            return Err(Error::Shape {
                context: "update_priorities advantages",
                expected: indices.len(),
                actual: advantages.len(),
            });
        }
        for (&i, &adv) in indices.iter().zip(advantages) {
            if adv.is_nan() {
                self.stats.nan_priorities_skipped += 1;
                continue;
            }
            let raw = self.config.scheme.raw_priority(adv, self.config.epsilon);
            self.tree.set_priority(i, raw)?;
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::datasets::{Tag, Transition};
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn buffer(n: usize, config: ReplayConfig) -> ReplayBuffer {
        let mut d = Dataset::new(1, 1, false);
        for i in 0..n {
            let t = Transition {
                s: vec![i as f32],
                a: vec![0.0],
                r: i as f32,
                s_next: vec![i as f32 + 1.0],
                done: i % 2 == 0,
            };
            d.push(&t, Tag::Random, None).unwrap();
        }
        ReplayBuffer::new(d, config).unwrap()
    }

    #[test]
    fn scheme_formulas() {
        let c = PriorityScheme::ClippedAdvantage;
        let b = PriorityScheme::Binary;
        assert_eq!(c.raw_priority(0.2, 1e-3), 0.2);
        assert_eq!(c.raw_priority(-0.5, 1e-3), 1e-3);
        assert_eq!(b.raw_priority(0.2, 1e-3), 1.001);
        assert_eq!(b.raw_priority(-0.5, 1e-3), 1e-3);
        assert_eq!(b.raw_priority(0.0, 1e-3), 1.001);
    }

    #[test]
    fn gather_matches_rows() {
        let buf = buffer(5, ReplayConfig::default());
        let b: Batch<f64> = buf.gather(vec![3, 0]).unwrap();
        assert_eq!(b.states[[0, 0]], 3.0);
        assert_eq!(b.next_states[[1, 0]], 1.0);
        assert_eq!(b.rewards.to_vec(), vec![3.0, 0.0]);
        assert_eq!(b.dones.to_vec(), vec![0.0, 1.0]);
        assert!(buf.gather::<f64>(vec![5]).is_err());
    }

    #[test]
    fn flat_priorities_match_uniform_draws() {
        let cfg = ReplayConfig {
            alpha: 0.0,
            ..Default::default()
        };
        let mut buf = buffer(37, cfg);
        buf.update_priorities(&[1, 2, 3], &[5.0, -1.0, 0.3]).unwrap();
        let mut r1 = ChaCha8Rng::seed_from_u64(7);
        let mut r2 = ChaCha8Rng::seed_from_u64(7);
        for _ in 0..50 {
            let u = buf.uniform_indices(64, &mut r1).unwrap();
            let p = buf.prioritized_indices(64, &mut r2).unwrap();
            assert_eq!(u, p);
        }
    }

    #[test]
    fn nan_advantages_are_skipped() {
        let mut buf = buffer(3, ReplayConfig::default());
        buf.update_priorities(&[0, 1], &[f64::NAN, 2.0]).unwrap();
        assert_eq!(buf.stats().nan_priorities_skipped, 1);
        assert_eq!(buf.tree().leaf(0), 1.0);
        assert!((buf.tree().leaf(1) - 2f64.powf(0.6)).abs() < 1e-15);
        assert!(buf.update_priorities(&[0], &[1.0, 2.0]).is_err());
    }

    #[test]
    fn two_element_three_to_one() {
        let cfg = ReplayConfig {
            alpha: 1.0,
            ..Default::default()
        };
        let mut buf = buffer(2, cfg);
        buf.update_priorities(&[0, 1], &[3.0, 1.0]).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let idx = buf.prioritized_indices(100_000, &mut rng).unwrap();
        let f = idx.iter().filter(|&&i| i == 0).count() as f64 / 1e5;
        assert!((f - 0.75).abs() < 0.02, "{f}");
    }

    #[test]
    fn stratified_draws_cover_every_stratum() {
        let cfg = ReplayConfig {
            alpha: 1.0,
            sampling: SamplingMode::Stratified,
            ..Default::default()
        };
        let mut buf = buffer(4, cfg);
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        assert_eq!(buf.prioritized_indices(4, &mut rng).unwrap(), vec![0, 1, 2, 3]);
    }

    #[test]
    fn empty_buffer_is_a_usage_error() {
        let mut buf = buffer(0, ReplayConfig::default());
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        assert!(matches!(buf.uniform_indices(4, &mut rng), Err(Error::Usage(_))));
        assert!(matches!(buf.prioritized_indices(4, &mut rng), Err(Error::Usage(_))));
    }
}
