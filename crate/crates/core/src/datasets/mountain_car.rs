//! Expert, random:expert and adversarial:expert Mountain-Car datasets.

use rand::{Rng, RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::behavior::Behavior;
use super::collect::tier_for_return;
use super::io::DatasetManifest;
use super::{returns_to_go, Dataset, Tag, Tier, Transition};
use crate::envlab::{Env, EnvId, MountainCar1D, MountainCarConfig};
use crate::error::{Error, Result};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct MountainCarSetConfig {
    pub env: MountainCarConfig,
    pub expert_transitions: usize,
    /// Non-expert transitions per expert transition in the mixed sets.
    pub noise_ratio: usize,
    pub return_gamma: f64,
    /// Give up mining adversarial moves after this many random steps.
    pub max_mining_steps: usize,
}

impl Default for MountainCarSetConfig {
    fn default() -> Self {
        MountainCarSetConfig {
            env: MountainCarConfig::default(),
            expert_transitions: 10_000,
            noise_ratio: 9,
            return_gamma: 0.99,
            max_mining_steps: 5_000_000,
        }
    }
}

pub struct MountainCarSets {
    pub expert: (Dataset, DatasetManifest),
    pub random_expert: (Dataset, DatasetManifest),
    pub adversarial_expert: (Dataset, DatasetManifest),
}

struct Episode {
    rows: Vec<Transition>,
    returns_to_go: Vec<f64>,
    worst_case: Vec<bool>,
    total_return: f64,
}

fn rollout(env: &mut MountainCar1D, policy: &mut dyn FnMut(&[f64], &mut dyn RngCore) -> Vec<f64>, gamma: f64, rng: &mut dyn RngCore) -> Episode {
    let mut obs = env.reset(rng);
    let mut rows = Vec::new();
    let mut rewards = Vec::new();
    let mut worst_case = Vec::new();
    loop {
        let a = policy(&obs, rng);
        worst_case.push(env.is_worst_case(a[0]));
        let step = env.step(&a);
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
    Episode {
        rows,
        returns_to_go: returns_to_go(&rewards, gamma),
        worst_case,
        total_return: rewards.iter().sum(),
    }
}

/// Builds the three Mountain-Car datasets. Expert rows come from `expert`,
/// whose average return must land in the Expert tier; random rows from a
/// uniform policy; adversarial rows are uniform-random moves that satisfy
/// the worst-case predicate.
pub fn build_mountain_car_sets(
    expert: &mut dyn Behavior,
    config: &MountainCarSetConfig,
    seed: u64,
) -> Result<MountainCarSets> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut env = MountainCar1D::new(config.env.clone())?;
    let gamma = config.return_gamma;
    let n_expert = config.expert_transitions;
    let n_noise = n_expert * config.noise_ratio;

    let mut expert_rows = Dataset::new(1, 1, true);
    let mut returns = Vec::new();
    while expert_rows.len() < n_expert {
        let ep = rollout(&mut env, &mut |o, r| expert.act(o, r), gamma, &mut rng);
        returns.push(ep.total_return);
        for (t, g) in ep.rows.iter().zip(&ep.returns_to_go) {
            if expert_rows.len() == n_expert {
                break;
            }
            expert_rows.push(t, Tag::Tier(Tier::Expert), Some(*g as f32))?;
        }
    }
    if !returns.is_empty() {
        let avg = returns.iter().sum::<f64>() / returns.len() as f64;
        let tier = tier_for_return(avg, env.spec().return_range);
        if tier != Tier::Expert {
            return Err(Error::Composition(format!(
                "expert policy {} averages return {avg:.1}, which is in tier {}",
                expert.name(),
                tier.as_str()
            )));
        }
    }

    let mut uniform = |_: &[f64], r: &mut dyn RngCore| vec![r.random_range(-1.0..=1.0)];

    let mut random = expert_rows.clone();
    let mut taken = 0;
    while taken < n_noise {
        let ep = rollout(&mut env, &mut uniform, gamma, &mut rng);
        for (t, g) in ep.rows.iter().zip(&ep.returns_to_go) {
            if taken == n_noise {
                break;
            }
            random.push(t, Tag::Random, Some(*g as f32))?;
            taken += 1;
        }
    }

    let mut adversarial = expert_rows.clone();
    let (mut mined, mut scanned) = (0, 0);
    while mined < n_noise {
        if scanned >= config.max_mining_steps {
            return Err(Error::Composition(format!(
                "mined only {mined} of {n_noise} worst-case transitions in {scanned} random steps (rate {:.3})",
                mined as f64 / scanned.max(1) as f64
            )));
        }
        let ep = rollout(&mut env, &mut uniform, gamma, &mut rng);
        scanned += ep.rows.len();
        for ((t, g), &bad) in ep.rows.iter().zip(&ep.returns_to_go).zip(&ep.worst_case) {
            if bad && mined < n_noise {
                adversarial.push(t, Tag::Adversarial, Some(*g as f32))?;
                mined += 1;
            }
        }
    }
    log::info!(
        "mined {mined} worst-case transitions from {scanned} random steps (rate {:.3})",
        mined as f64 / scanned.max(1) as f64
    );

    let id = EnvId::MountainCar;
    Ok(MountainCarSets {
        expert: (
            expert_rows.clone(),
            DatasetManifest::describe(&expert_rows, "mc-expert", id, seed)?,
        ),
        random_expert: (
            random.clone(),
            DatasetManifest::describe(&random, "mc-random-expert", id, seed)?,
        ),
        adversarial_expert: (
            adversarial.clone(),
            DatasetManifest::describe(&adversarial, "mc-adversarial-expert", id, seed)?,
        ),
    })
}
