//! Recording policy snapshots into blocks and binning blocks into tiers.

use rand::RngCore;
use serde::{Deserialize, Serialize};

use super::behavior::{Behavior, SnapshotSource};
use super::{returns_to_go, Dataset, Tag, Tier, Transition};
use crate::envlab::{Env, EnvId, EnvSpec};
use crate::error::{Error, Result};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct CollectConfig {
    pub episodes_per_block: usize,
    /// Stop once every tier holds at least this many transitions; blocks
    /// landing in an already full tier are dropped.
    pub target_per_tier: usize,
    pub max_blocks: usize,
    /// Discount for the return-to-go annotation stored with each transition.
    pub return_gamma: f64,
}

impl Default for CollectConfig {
    fn default() -> Self {
        CollectConfig {
            episodes_per_block: 10,
            target_per_tier: 40_000,
            max_blocks: 5_000,
            return_gamma: 0.99,
        }
    }
}

/// Description of one recording block inside a concatenated tier store.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BlockMeta {
    pub tier: Tier,
    pub average_return: f64,
    pub policy: String,
    pub uniform_random: bool,
    pub episodes: usize,
    /// First row of the block in the stored dataset.
    pub start: usize,
    pub len: usize,
}

#[derive(Clone, Debug, PartialEq)]
pub struct RecordingBlock {
    pub policy: String,
    pub uniform_random: bool,
    pub episodes: usize,
    /// Empty for blocks reloaded from disk.
    pub episode_returns: Vec<f64>,
    /// Mean undiscounted episode return of the recorded policy.
    pub average_return: f64,
    pub data: Dataset,
}

/// Tier index of a block with the given average return. The five tiers
/// split `range` evenly; returns outside the range fall into the end tiers.
pub fn tier_for_return(average_return: f64, range: (f64, f64)) -> Tier {
    let width = (range.1 - range.0) / 5.0;
    let idx = ((average_return - range.0) / width).floor();
    let idx = if idx.is_nan() { 0.0 } else { idx.clamp(0.0, 4.0) };
    Tier::ALL[idx as usize]
}

pub fn tier_interval(tier: Tier, range: (f64, f64)) -> (f64, f64) {
    let width = (range.1 - range.0) / 5.0;
    let i = tier.index() as f64;
    (range.0 + i * width, range.0 + (i + 1.0) * width)
}

/// Runs `behavior` for `episodes` episodes. Returns `None` if any action or
/// reward is non-finite.
pub fn record_block(
    env: &mut dyn Env,
    behavior: &mut dyn Behavior,
    episodes: usize,
    return_gamma: f64,
    rng: &mut dyn RngCore,
) -> Result<Option<RecordingBlock>> {
    let spec = env.spec().clone();
    let mut data = Dataset::new(spec.state_dim, spec.action_dim, true);
    let mut episode_returns = Vec::with_capacity(episodes);
    for _ in 0..episodes {
        let mut obs = env.reset(rng);
        let mut rows = Vec::new();
        let mut rewards = Vec::new();
        loop {
            let a = behavior.act(&obs, rng);
            if a.len() != spec.action_dim {
                return Err(Error::Shape {
                    context: "behavior action",
                    expected: spec.action_dim,
                    actual: a.len(),
                });
            }
            if a.iter().any(|x| !x.is_finite()) {
                return Ok(None);
            }
            let step = env.step(&a);
            if !step.reward.is_finite() {
                return Ok(None);
            }
            rows.push(Transition {
                s: obs.iter().map(|&x| x as f32).collect(),
                a: a.iter().map(|&x| x as f32).collect(),
                r: step.reward as f32,
                s_next: step.state.iter().map(|&x| x as f32).collect(),
                done: step.terminal,
            });
            rewards.push(step.reward);
            let finished = step.done();
            obs = step.state;
            if finished {
                break;
            }
        }
        let g = returns_to_go(&rewards, return_gamma);
        for (t, g) in rows.iter().zip(g) {
            data.push(t, Tag::Tier(Tier::VeryBad), Some(g as f32))?;
        }
        episode_returns.push(rewards.iter().sum());
    }
    let average_return = episode_returns.iter().sum::<f64>() / episodes.max(1) as f64;
    Ok(Some(RecordingBlock {
        policy: behavior.name(),
        uniform_random: behavior.is_uniform_random(),
        episodes,
        episode_returns,
        average_return,
        data,
    }))
}

#[derive(Clone, Debug, PartialEq)]
pub struct TierBin {
    pub tier: Tier,
    pub return_interval: (f64, f64),
    pub blocks: Vec<RecordingBlock>,
}

impl TierBin {
    pub fn len(&self) -> usize {
        self.blocks.iter().map(|b| b.data.len()).sum()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

/// Recorded blocks grouped into five tiers by their average return.
#[derive(Clone, Debug, PartialEq)]
pub struct TierStore {
    pub env: EnvId,
    pub state_dim: usize,
    pub action_dim: usize,
    pub return_range: (f64, f64),
    pub bins: Vec<TierBin>,
}

impl TierStore {
    pub fn new(spec: &EnvSpec) -> Self {
        TierStore {
            env: spec.id,
            state_dim: spec.state_dim,
            action_dim: spec.action_dim,
            return_range: spec.return_range,
            bins: Tier::ALL
                .iter()
                .map(|&tier| TierBin {
                    tier,
                    return_interval: tier_interval(tier, spec.return_range),
                    blocks: Vec::new(),
                })
                .collect(),
        }
    }

    pub fn bin(&self, tier: Tier) -> &TierBin {
        &self.bins[tier.index()]
    }

    /// Files the block under the tier of its average return and retags its
    /// transitions accordingly.
    pub fn insert(&mut self, mut block: RecordingBlock) -> Tier {
        let tier = tier_for_return(block.average_return, self.return_range);
        block.data.retag(Tag::Tier(tier));
        self.bins[tier.index()].blocks.push(block);
        tier
    }

    pub fn counts(&self) -> [usize; 5] {
        let mut c = [0; 5];
        for bin in &self.bins {
            c[bin.tier.index()] = bin.len();
        }
        c
    }

    /// Concatenates all blocks, tier by tier, into one dataset plus block table.
    pub fn to_dataset(&self) -> Result<(Dataset, Vec<BlockMeta>)> {
        let mut out = Dataset::new(self.state_dim, self.action_dim, true);
        let mut metas = Vec::new();
        for bin in &self.bins {
            for b in &bin.blocks {
                metas.push(BlockMeta {
                    tier: bin.tier,
                    average_return: b.average_return,
                    policy: b.policy.clone(),
                    uniform_random: b.uniform_random,
                    episodes: b.episodes,
                    start: out.len(),
                    len: b.data.len(),
                });
                out.extend_from(&b.data)?;
            }
        }
        Ok((out, metas))
    }

    /// Rebuilds the store from a concatenated dataset and its block table.
    /// Tiers are recomputed from the block returns.
    pub fn from_dataset(spec: &EnvSpec, data: &Dataset, blocks: &[BlockMeta]) -> Result<Self> {
        if data.state_dim() != spec.state_dim || data.action_dim() != spec.action_dim {
            return Err(Error::data(format!(
                "tier store dimensions ({}, {}) do not match {} ({}, {})",
                data.state_dim(),
                data.action_dim(),
                spec.id,
                spec.state_dim,
                spec.action_dim
            )));
        }
        let mut store = TierStore::new(spec);
        for m in blocks {
            if m.start + m.len > data.len() {
                return Err(Error::data(format!(
                    "block [{}, {}) exceeds dataset of {} rows",
                    m.start,
                    m.start + m.len,
                    data.len()
                )));
            }
            let mut part = Dataset::new(data.state_dim(), data.action_dim(), data.has_returns());
            for i in m.start..m.start + m.len {
                part.push_row_from(data, i)?;
            }
            store.insert(RecordingBlock {
                policy: m.policy.clone(),
                uniform_random: m.uniform_random,
                episodes: m.episodes,
                episode_returns: Vec::new(),
                average_return: m.average_return,
                data: part,
            });
        }
        Ok(store)
    }
}

/// Records blocks from `source` until every tier reaches the target size,
/// the source runs dry, or `max_blocks` blocks have been recorded. Blocks
/// with non-finite actions or rewards are discarded.
pub fn collect_snapshots(
    env: &mut dyn Env,
    source: &mut dyn SnapshotSource,
    config: &CollectConfig,
    rng: &mut dyn RngCore,
) -> Result<TierStore> {
    if config.episodes_per_block == 0 {
        return Err(Error::config("episodes_per_block must be positive"));
    }
    let mut store = TierStore::new(env.spec());
    let mut recorded = 0;
    while recorded < config.max_blocks {
        if store.counts().iter().all(|&c| c >= config.target_per_tier) {
            break;
        }
        let Some(mut behavior) = source.next_behavior(rng) else {
            break;
        };
        recorded += 1;
        let Some(block) = record_block(env, behavior.as_mut(), config.episodes_per_block, config.return_gamma, rng)?
        else {
            log::warn!("discarding block from {}: non-finite action or reward", behavior.name());
            continue;
        };
        let tier = tier_for_return(block.average_return, store.return_range);
        if store.bin(tier).len() >= config.target_per_tier {
            continue;
        }
        log::debug!(
            "block {recorded}: {} return {:.1} -> {}",
            block.policy,
            block.average_return,
            tier.as_str()
        );
        store.insert(block);
    }
    log::info!("collected tiers {:?} from {recorded} blocks", store.counts());
    Ok(store)
}
