//! In-process continuous-control environments with a uniform reset/step
//! interface. Actions live in `[-1, 1]^action_dim`.

mod mountain_car;
mod pendulum;

use std::fmt;
use std::str::FromStr;

use rand::RngCore;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub use mountain_car::{MountainCar1D, MountainCarConfig, VALLEY_POSITION};
pub use pendulum::{Pendulum, PendulumConfig};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EnvId {
    MountainCar,
    Pendulum,
}

impl EnvId {
    pub fn as_str(self) -> &'static str {
        match self {
            EnvId::MountainCar => "mountain_car",
            EnvId::Pendulum => "pendulum",
        }
    }
}

impl fmt::Display for EnvId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for EnvId {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "mountain_car" | "mountain-car" => Ok(EnvId::MountainCar),
            "pendulum" => Ok(EnvId::Pendulum),
            other => Err(Error::config(format!(
                "unknown environment {other:?} (expected mountain_car or pendulum)"
            ))),
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct EnvSpec {
    pub id: EnvId,
    pub state_dim: usize,
    pub action_dim: usize,
    pub max_episode_steps: usize,
    /// Range of undiscounted episode returns, split evenly into performance tiers.
    pub return_range: (f64, f64),
}

impl EnvSpec {
    pub fn validate(&self) -> Result<()> {
        if self.max_episode_steps == 0 {
            return Err(Error::config("max_episode_steps must be positive"));
        }
        if !(self.return_range.0 < self.return_range.1) {
            return Err(Error::config("return_range low must be below high"));
        }
        if self.state_dim == 0 || self.action_dim == 0 {
            return Err(Error::config("state and action dimensions must be positive"));
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Step {
    pub state: Vec<f64>,
    pub reward: f64,
    /// Reached a true terminal state; the bootstrap term is cut.
    pub terminal: bool,
    /// Hit the episode step cap.
    pub truncated: bool,
}

impl Step {
    pub fn done(&self) -> bool {
        self.terminal || self.truncated
    }
}

pub trait Env: Send {
    fn spec(&self) -> &EnvSpec;

    /// Samples a start state and zeroes the step counter.
    fn reset(&mut self, rng: &mut dyn RngCore) -> Vec<f64>;

    /// Advances one tick. Out-of-range actions are clamped and counted.
    fn step(&mut self, action: &[f64]) -> Step;

    fn observe(&self) -> Vec<f64>;

    /// Number of actions that had to be clamped into `[-1, 1]`.
    fn clamped_actions(&self) -> u64;

    /// Whether the last episode ended at the task's goal (if the task has one).
    fn reached_goal(&self) -> bool {
        false
    }

    fn as_mountain_car(&self) -> Option<&MountainCar1D> {
        None
    }
}

/// Environment constants exposed through run configuration.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct EnvConfig {
    pub mountain_car: MountainCarConfig,
    pub pendulum: PendulumConfig,
}

pub fn make_env(id: EnvId, config: &EnvConfig) -> Result<Box<dyn Env>> {
    Ok(match id {
        EnvId::MountainCar => Box::new(MountainCar1D::new(config.mountain_car.clone())?),
        EnvId::Pendulum => Box::new(Pendulum::new(config.pendulum.clone())?),
    })
}

/// True iff taking `action` in the environment's current state is an
/// adversarial Mountain-Car move: the car is climbing and the push opposes
/// its motion.
pub fn worst_case_label(env: &dyn Env, action: &[f64]) -> Result<bool> {
    let mc = env
        .as_mountain_car()
        .ok_or_else(|| Error::usage(format!("worst-case labels are defined only for mountain_car, not {}", env.spec().id)))?;
    Ok(mc.is_worst_case(action[0]))
}

pub(crate) fn clamp_action(a: f64, warnings: &mut u64) -> f64 {
    if a.is_nan() {
        *warnings += 1;
        return 0.0;
    }
    if !(-1.0..=1.0).contains(&a) {
        *warnings += 1;
        return a.clamp(-1.0, 1.0);
    }
    a
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn env_ids_parse() {
        assert_eq!("mountain_car".parse::<EnvId>().unwrap(), EnvId::MountainCar);
        assert_eq!("pendulum".parse::<EnvId>().unwrap(), EnvId::Pendulum);
        assert!("cartpole".parse::<EnvId>().is_err());
    }

    #[test]
    fn worst_case_label_rejects_pendulum() {
        let mut env = make_env(EnvId::Pendulum, &EnvConfig::default()).unwrap();
        env.reset(&mut ChaCha8Rng::seed_from_u64(0));
        assert!(matches!(worst_case_label(env.as_ref(), &[0.5]), Err(Error::Usage(_))));
    }
}
