//! Scripted behavior policies of graded quality used to fill the tier store.

use rand::{Rng, RngCore};
use rand_distr::StandardNormal;

use crate::envlab::{EnvConfig, EnvId, PendulumConfig};

/// A recording policy: maps an observation to an action in `[-1, 1]^d`.
pub trait Behavior: Send {
    fn name(&self) -> String;

    /// Pure uniform-random policies are excluded from the Stitching recipe.
    fn is_uniform_random(&self) -> bool {
        false
    }

    fn act(&mut self, obs: &[f64], rng: &mut dyn RngCore) -> Vec<f64>;
}

pub struct UniformRandom {
    pub action_dim: usize,
}

impl Behavior for UniformRandom {
    fn name(&self) -> String {
        "uniform_random".into()
    }

    fn is_uniform_random(&self) -> bool {
        true
    }

    fn act(&mut self, _obs: &[f64], rng: &mut dyn RngCore) -> Vec<f64> {
        (0..self.action_dim).map(|_| rng.random_range(-1.0..=1.0)).collect()
    }
}

/// Bang-bang Mountain-Car controller: push in the direction of motion.
/// The compressed observation's sign is the direction of travel.
#[derive(Clone, Copy, Debug, Default)]
pub struct MountainCarExpert;

impl Behavior for MountainCarExpert {
    fn name(&self) -> String {
        "mountain_car_bang_bang".into()
    }

    fn act(&mut self, obs: &[f64], _rng: &mut dyn RngCore) -> Vec<f64> {
        vec![if obs[0] >= 0.0 { 1.0 } else { -1.0 }]
    }
}

/// Pushes against the motion, wasting momentum.
#[derive(Clone, Copy, Debug, Default)]
pub struct MountainCarAntiExpert;

impl Behavior for MountainCarAntiExpert {
    fn name(&self) -> String {
        "mountain_car_brake".into()
    }

    fn act(&mut self, obs: &[f64], _rng: &mut dyn RngCore) -> Vec<f64> {
        vec![if obs[0] >= 0.0 { -1.0 } else { 1.0 }]
    }
}

/// Energy-pumping swing-up with a PD balance controller near the top.
#[derive(Clone, Debug)]
pub struct PendulumExpert {
    /// `3 g / (2 l)`: the potential-energy scale at the upright position.
    energy_scale: f64,
    max_torque: f64,
    balance_cos: f64,
    kp: f64,
    kd: f64,
}

impl PendulumExpert {
    pub fn new(config: &PendulumConfig) -> Self {
        PendulumExpert {
            energy_scale: 3.0 * config.gravity / (2.0 * config.length),
            max_torque: config.max_torque,
            balance_cos: 0.85,
            kp: 30.0,
            kd: 6.0,
        }
    }
}

impl Behavior for PendulumExpert {
    fn name(&self) -> String {
        "pendulum_energy_pump".into()
    }

    fn act(&mut self, obs: &[f64], _rng: &mut dyn RngCore) -> Vec<f64> {
        let (cos, sin, theta_dot) = (obs[0], obs[1], obs[2]);
        let theta = sin.atan2(cos);
        let a = if cos > self.balance_cos {
            -(self.kp * theta + self.kd * theta_dot) / (3.0 * self.max_torque)
        } else {
            let energy = 0.5 * theta_dot * theta_dot + self.energy_scale * cos;
            let direction = if theta_dot >= 0.0 { 1.0 } else { -1.0 };
            direction * (self.energy_scale - energy)
        };
        vec![a.clamp(-1.0, 1.0)]
    }
}

/// Full torque against the swing, draining energy.
#[derive(Clone, Copy, Debug, Default)]
pub struct PendulumAntiExpert;

impl Behavior for PendulumAntiExpert {
    fn name(&self) -> String {
        "pendulum_brake".into()
    }

    fn act(&mut self, obs: &[f64], _rng: &mut dyn RngCore) -> Vec<f64> {
        let theta_dot = obs[2];
        let a = if theta_dot > 0.0 {
            -1.0
        } else if theta_dot < 0.0 {
            1.0
        } else {
            0.0
        };
        vec![a]
    }
}

/// Follows `expert`, but at each step with probability `corruption` uses
/// `adversary` instead; Gaussian action noise is added and the result clipped.
pub struct GradedScripted {
    pub expert: Box<dyn Behavior>,
    pub adversary: Box<dyn Behavior>,
    pub corruption: f64,
    pub noise_std: f64,
}

impl Behavior for GradedScripted {
    fn name(&self) -> String {
        format!(
            "{}+{}@{:.3}~{}",
            self.expert.name(),
            self.adversary.name(),
            self.corruption,
            self.noise_std
        )
    }

    fn act(&mut self, obs: &[f64], rng: &mut dyn RngCore) -> Vec<f64> {
        let mut a = if rng.random::<f64>() < self.corruption {
            self.adversary.act(obs, rng)
        } else {
            self.expert.act(obs, rng)
        };
        if self.noise_std > 0.0 {
            for x in &mut a {
                let z: f64 = rng.sample(StandardNormal);
                *x += self.noise_std * z;
            }
        }
        for x in &mut a {
            *x = x.clamp(-1.0, 1.0);
        }
        a
    }
}

/// Supplies the policy snapshot recorded in the next block.
pub trait SnapshotSource {
    /// `None` ends collection.
    fn next_behavior(&mut self, rng: &mut dyn RngCore) -> Option<Box<dyn Behavior>>;
}

/// Plays a fixed list of snapshots once, in order.
pub struct FixedSchedule {
    queue: std::collections::VecDeque<Box<dyn Behavior>>,
}

impl FixedSchedule {
    pub fn new(behaviors: Vec<Box<dyn Behavior>>) -> Self {
        FixedSchedule { queue: behaviors.into() }
    }
}

impl SnapshotSource for FixedSchedule {
    fn next_behavior(&mut self, _rng: &mut dyn RngCore) -> Option<Box<dyn Behavior>> {
        self.queue.pop_front()
    }
}

/// Endless stream of snapshots with corruption drawn uniformly from `[0, 1]`,
/// interleaved with pure uniform-random snapshots.
#[derive(Clone, Debug)]
pub struct GradedSchedule {
    pub env: EnvId,
    pub env_config: EnvConfig,
    pub action_dim: usize,
    pub random_fraction: f64,
    pub noise_std: f64,
}

impl GradedSchedule {
    pub fn new(env: EnvId, env_config: EnvConfig) -> Self {
        GradedSchedule {
            env,
            env_config,
            action_dim: 1,
            random_fraction: 0.1,
            noise_std: 0.1,
        }
    }

    pub fn graded(&self, corruption: f64) -> GradedScripted {
        let (expert, adversary): (Box<dyn Behavior>, Box<dyn Behavior>) = match self.env {
            EnvId::MountainCar => (Box::new(MountainCarExpert), Box::new(MountainCarAntiExpert)),
            EnvId::Pendulum => (
                Box::new(PendulumExpert::new(&self.env_config.pendulum)),
                Box::new(PendulumAntiExpert),
            ),
        };
        GradedScripted {
            expert,
            adversary,
            corruption,
            noise_std: self.noise_std,
        }
    }
}

impl SnapshotSource for GradedSchedule {
    fn next_behavior(&mut self, rng: &mut dyn RngCore) -> Option<Box<dyn Behavior>> {
        if rng.random::<f64>() < self.random_fraction {
            return Some(Box::new(UniformRandom {
                action_dim: self.action_dim,
            }));
        }
        let corruption = rng.random::<f64>();
        Some(Box::new(self.graded(corruption)))
    }
}
