//! Offline dataset factory: recording behavior snapshots, performance tiers,
//! composition recipes, the Mountain-Car expert/random/adversarial sets, and
//! the on-disk format.

mod behavior;
mod collect;
mod io;
mod mountain_car;
mod recipes;

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub use behavior::{
    Behavior, FixedSchedule, GradedSchedule, GradedScripted, MountainCarAntiExpert, MountainCarExpert,
    PendulumAntiExpert, PendulumExpert, SnapshotSource, UniformRandom,
};
pub use collect::{
    collect_snapshots, record_block, tier_for_return, tier_interval, BlockMeta, CollectConfig, RecordingBlock,
    TierBin, TierStore,
};
pub use io::{fnv1a64, load, manifest_path, save, DatasetManifest, DATASET_FORMAT_VERSION};
pub use mountain_car::{build_mountain_car_sets, MountainCarSetConfig, MountainCarSets};
pub use recipes::{compose, Recipe};

/// Performance tier of the policy that recorded a transition.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Tier {
    VeryBad,
    Bad,
    Okay,
    Good,
    Expert,
}

impl Tier {
    pub const ALL: [Tier; 5] = [Tier::VeryBad, Tier::Bad, Tier::Okay, Tier::Good, Tier::Expert];

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Tier::VeryBad => "very_bad",
            Tier::Bad => "bad",
            Tier::Okay => "okay",
            Tier::Good => "good",
            Tier::Expert => "expert",
        }
    }
}

/// Provenance tag stored with every transition.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Tag {
    Tier(Tier),
    /// Uniform-random Mountain-Car rollouts.
    Random,
    /// Mined worst-case Mountain-Car moves.
    Adversarial,
}

impl Tag {
    pub fn code(self) -> u8 {
        match self {
            Tag::Tier(t) => t as u8,
            Tag::Random => 5,
            Tag::Adversarial => 6,
        }
    }

    pub fn from_code(code: u8) -> Option<Tag> {
        Some(match code {
            0..=4 => Tag::Tier(Tier::ALL[code as usize]),
            5 => Tag::Random,
            6 => Tag::Adversarial,
            _ => return None,
        })
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Tag::Tier(t) => t.as_str(),
            Tag::Random => "random",
            Tag::Adversarial => "adversarial",
        }
    }
}

impl fmt::Display for Tag {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Tag {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        (0..=6)
            .filter_map(Tag::from_code)
            .find(|t| t.as_str() == s)
            .ok_or_else(|| Error::data(format!("unknown transition tag {s:?}")))
    }
}

/// One `(s, a, r, s', done)` experience tuple.
#[derive(Clone, Debug, PartialEq)]
pub struct Transition {
    pub s: Vec<f32>,
    pub a: Vec<f32>,
    pub r: f32,
    pub s_next: Vec<f32>,
    /// True terminal; timeouts are stored as `false` so they bootstrap.
    pub done: bool,
}

/// Column-major store of transitions plus per-row provenance and optional
/// discounted return-to-go annotations.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct Dataset {
    state_dim: usize,
    action_dim: usize,
    states: Vec<f32>,
    actions: Vec<f32>,
    rewards: Vec<f32>,
    next_states: Vec<f32>,
    dones: Vec<bool>,
    tags: Vec<Tag>,
    returns_to_go: Option<Vec<f32>>,
}

impl Dataset {
    pub fn new(state_dim: usize, action_dim: usize, with_returns: bool) -> Self {
        Dataset {
            state_dim,
            action_dim,
            returns_to_go: with_returns.then(Vec::new),
            ..Default::default()
        }
    }

    pub fn state_dim(&self) -> usize {
        self.state_dim
    }

    pub fn action_dim(&self) -> usize {
        self.action_dim
    }

    pub fn len(&self) -> usize {
        self.rewards.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rewards.is_empty()
    }

    pub fn has_returns(&self) -> bool {
        self.returns_to_go.is_some()
    }

    pub fn push(&mut self, t: &Transition, tag: Tag, return_to_go: Option<f32>) -> Result<()> {
        if t.s.len() != self.state_dim || t.s_next.len() != self.state_dim {
            return Err(Error::Shape {
                context: "Dataset::push state",
                expected: self.state_dim,
                actual: t.s.len(),
            });
        }
        if t.a.len() != self.action_dim {
            return Err(Error::Shape {
                context: "Dataset::push action",
                expected: self.action_dim,
                actual: t.a.len(),
            });
        }
        if !t.r.is_finite() {
            return Err(Error::data("transition reward is not finite"));
        }
        match (&mut self.returns_to_go, return_to_go) {
            (Some(col), Some(g)) => col.push(g),
            (None, None) => {}
            (Some(_), None) => return Err(Error::data("dataset expects return-to-go annotations")),
            (None, Some(_)) => return Err(Error::data("dataset does not store return-to-go annotations")),
        }
        self.states.extend_from_slice(&t.s);
        self.actions.extend_from_slice(&t.a);
        self.rewards.push(t.r);
        self.next_states.extend_from_slice(&t.s_next);
        self.dones.push(t.done);
        self.tags.push(tag);
        Ok(())
    }

    /// Appends row `i` of `other`.
    pub fn push_row_from(&mut self, other: &Dataset, i: usize) -> Result<()> {
        let rtg = other.returns_to_go.as_ref().map(|c| c[i]);
        let rtg = match (self.has_returns(), rtg) {
            (false, _) => None,
            (true, g) => g,
        };
        self.push(&other.get(i), other.tags[i], rtg)
    }

    pub fn extend_from(&mut self, other: &Dataset) -> Result<()> {
        for i in 0..other.len() {
            self.push_row_from(other, i)?;
        }
        Ok(())
    }

    pub fn get(&self, i: usize) -> Transition {
        let sd = self.state_dim;
        let ad = self.action_dim;
        Transition {
            s: self.states[i * sd..(i + 1) * sd].to_vec(),
            a: self.actions[i * ad..(i + 1) * ad].to_vec(),
            r: self.rewards[i],
            s_next: self.next_states[i * sd..(i + 1) * sd].to_vec(),
            done: self.dones[i],
        }
    }

    pub fn state(&self, i: usize) -> &[f32] {
        &self.states[i * self.state_dim..(i + 1) * self.state_dim]
    }

    pub fn action(&self, i: usize) -> &[f32] {
        &self.actions[i * self.action_dim..(i + 1) * self.action_dim]
    }

    pub fn next_state(&self, i: usize) -> &[f32] {
        &self.next_states[i * self.state_dim..(i + 1) * self.state_dim]
    }

    pub fn reward(&self, i: usize) -> f32 {
        self.rewards[i]
    }

    pub fn done(&self, i: usize) -> bool {
        self.dones[i]
    }

    pub fn tag(&self, i: usize) -> Tag {
        self.tags[i]
    }

    pub fn tags(&self) -> &[Tag] {
        &self.tags
    }

    pub fn return_to_go(&self, i: usize) -> Option<f32> {
        self.returns_to_go.as_ref().map(|c| c[i])
    }

    pub fn retag(&mut self, tag: Tag) {
        self.tags.iter_mut().for_each(|t| *t = tag);
    }

    pub fn count_tag(&self, tag: Tag) -> usize {
        self.tags.iter().filter(|&&t| t == tag).count()
    }

    /// Validates dimensions and finiteness of every column.
    pub fn validate(&self) -> Result<()> {
        let n = self.len();
        let ok = self.states.len() == n * self.state_dim
            && self.next_states.len() == n * self.state_dim
            && self.actions.len() == n * self.action_dim
            && self.dones.len() == n
            && self.tags.len() == n
            && self.returns_to_go.as_ref().is_none_or(|c| c.len() == n);
        if !ok {
            return Err(Error::data("dataset columns have inconsistent lengths"));
        }
        let finite = self
            .states
            .iter()
            .chain(&self.actions)
            .chain(&self.rewards)
            .chain(&self.next_states)
            .all(|x| x.is_finite());
        if !finite {
            return Err(Error::data("dataset contains non-finite values"));
        }
        Ok(())
    }
}

/// Discounted return-to-go `G_t = r_t + gamma * G_{t+1}` within one episode.
pub fn returns_to_go(rewards: &[f64], gamma: f64) -> Vec<f64> {
    let mut out = vec![0.0; rewards.len()];
    let mut acc = 0.0;
    for (i, r) in rewards.iter().enumerate().rev() {
        acc = r + gamma * acc;
        out[i] = acc;
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn three_step_return_to_go() {
        let g = returns_to_go(&[1.0, 2.0, 3.0], 0.99);
        let expected0 = 1.0 + 0.99 * 2.0 + 0.99 * 0.99 * 3.0;
        assert!((g[0] - expected0).abs() < 1e-12);
        assert!((g[1] - (2.0 + 0.99 * 3.0)).abs() < 1e-12);
        assert_eq!(g[2], 3.0);
    }

    #[test]
    fn tag_codes_round_trip() {
        for code in 0..=6u8 {
            let tag = Tag::from_code(code).unwrap();
            assert_eq!(tag.code(), code);
            assert_eq!(tag.as_str().parse::<Tag>().unwrap(), tag);
        }
        assert!(Tag::from_code(7).is_none());
    }

    #[test]
    fn push_checks_shapes_and_annotations() {
        let mut d = Dataset::new(2, 1, false);
        let t = Transition {
            s: vec![0.0, 1.0],
            a: vec![0.5],
            r: 1.0,
            s_next: vec![1.0, 1.0],
            done: false,
        };
        d.push(&t, Tag::Random, None).unwrap();
        assert!(d.push(&t, Tag::Random, Some(1.0)).is_err());
        let bad = Transition { a: vec![], ..t.clone() };
        assert!(d.push(&bad, Tag::Random, None).is_err());
        assert_eq!(d.get(0), t);
        d.validate().unwrap();
    }
}
