//! The nine tier-mixing recipes.

use std::fmt;
use std::str::FromStr;

use rand::seq::index;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::collect::TierStore;
use super::io::DatasetManifest;
use super::{Dataset, Tier};
use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Recipe {
    /// Even split over Expert and Good.
    GreatExpert,
    /// Even split over Expert, Good and Okay.
    OkayExpert,
    BadExpert,
    /// Even split over all five tiers.
    VeryBadExpert,
    /// Expert data outnumbered `noise_ratio : 1` by the four lower tiers.
    Signal { noise_ratio: u32 },
    /// Bottom tier only, without uniform-random blocks.
    Stitching,
}

impl Recipe {
    /// Noise ratios of the four Signal recipes, spaced geometrically.
    pub const SIGNAL_RATIOS: [(&'static str, u32); 4] =
        [("signal-1m", 8), ("signal-2m", 16), ("signal-3m", 32), ("signal-4.5m", 64)];

    pub const ALL: [Recipe; 9] = [
        Recipe::GreatExpert,
        Recipe::OkayExpert,
        Recipe::BadExpert,
        Recipe::VeryBadExpert,
        Recipe::Signal { noise_ratio: 8 },
        Recipe::Signal { noise_ratio: 16 },
        Recipe::Signal { noise_ratio: 32 },
        Recipe::Signal { noise_ratio: 64 },
        Recipe::Stitching,
    ];

    pub fn name(self) -> String {
        match self {
            Recipe::GreatExpert => "great-expert".into(),
            Recipe::OkayExpert => "okay-expert".into(),
            Recipe::BadExpert => "bad-expert".into(),
            Recipe::VeryBadExpert => "verybad-expert".into(),
            Recipe::Signal { noise_ratio } => Self::SIGNAL_RATIOS
                .iter()
                .find(|(_, r)| *r == noise_ratio)
                .map(|(n, _)| n.to_string())
                .unwrap_or_else(|| format!("signal-x{noise_ratio}")),
            Recipe::Stitching => "stitching".into(),
        }
    }

    /// Exact per-tier sample counts for a total `budget`.
    pub fn allocation(self, budget: usize) -> Vec<(Tier, usize)> {
        use Tier::*;
        let even = |tiers: &[Tier]| even_split(budget, tiers);
        match self {
            Recipe::GreatExpert => even(&[Expert, Good]),
            Recipe::OkayExpert => even(&[Expert, Good, Okay]),
            Recipe::BadExpert => even(&[Expert, Good, Okay, Bad]),
            Recipe::VeryBadExpert => even(&[Expert, Good, Okay, Bad, VeryBad]),
            Recipe::Signal { noise_ratio } => {
                let expert = (budget as f64 / (1.0 + noise_ratio as f64)).round() as usize;
                let mut out = vec![(Expert, expert)];
                out.extend(even_split(budget - expert, &[Good, Okay, Bad, VeryBad]));
                out
            }
            Recipe::Stitching => vec![(VeryBad, budget)],
        }
    }
}

/// Splits `n` over `tiers`; the remainder goes one each to the leading tiers.
fn even_split(n: usize, tiers: &[Tier]) -> Vec<(Tier, usize)> {
    let k = tiers.len();
    tiers
        .iter()
        .enumerate()
        .map(|(i, &t)| (t, n / k + usize::from(i < n % k)))
        .collect()
}

impl fmt::Display for Recipe {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.name())
    }
}

impl FromStr for Recipe {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let lower = s.to_ascii_lowercase().replace('_', "-");
        if let Some(r) = Recipe::ALL.iter().find(|r| r.name() == lower) {
            return Ok(*r);
        }
        if let Some(ratio) = lower.strip_prefix("signal-x").and_then(|r| r.parse().ok()) {
            return Ok(Recipe::Signal { noise_ratio: ratio });
        }
        let names: Vec<String> = Recipe::ALL.iter().map(|r| r.name()).collect();
        Err(Error::config(format!("unknown recipe {s:?}; expected one of {}", names.join(", "))))
    }
}

/// Draws the recipe's per-tier counts from the store without replacement.
pub fn compose(recipe: Recipe, store: &TierStore, budget: usize, seed: u64) -> Result<(Dataset, DatasetManifest)> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let plan = recipe.allocation(budget);
    let exclude_random = recipe == Recipe::Stitching;

    let mut pools = Vec::with_capacity(plan.len());
    let mut deficits = Vec::new();
    for &(tier, need) in &plan {
        let pool: Vec<(usize, usize)> = store
            .bin(tier)
            .blocks
            .iter()
            .enumerate()
            .filter(|(_, b)| !(exclude_random && b.uniform_random))
            .flat_map(|(bi, b)| (0..b.data.len()).map(move |r| (bi, r)))
            .collect();
        if pool.len() < need {
            deficits.push(format!("{}: need {need}, have {} (short {})", tier.as_str(), pool.len(), need - pool.len()));
        }
        pools.push(pool);
    }
    if !deficits.is_empty() {
        return Err(Error::Composition(format!(
            "recipe {recipe} at budget {budget} cannot be filled: {}",
            deficits.join("; ")
        )));
    }

    let has_returns = store
        .bins
        .iter()
        .flat_map(|b| &b.blocks)
        .all(|b| b.data.has_returns());
    let mut out = Dataset::new(store.state_dim, store.action_dim, has_returns);
    for ((tier, need), pool) in plan.iter().zip(&pools) {
        let mut picks = index::sample(&mut rng, pool.len(), *need).into_vec();
        picks.sort_unstable();
        let bin = store.bin(*tier);
        for p in picks {
            let (bi, row) = pool[p];
            out.push_row_from(&bin.blocks[bi].data, row)?;
        }
    }
    let manifest = DatasetManifest::describe(&out, &recipe.name(), store.env, seed)?;
    Ok((out, manifest))
}
