//! Continuous Mountain Car with a compressed scalar observation.
//!
//! The observation is `sign(v) * (x - x_min) / (x_max - x_min)` where
//! `sign(v)` is `+1` for `v >= 0` and `-1` otherwise: a single number in
//! `[-1, 1]` carrying position and direction of travel but not speed.

use rand::{Rng, RngCore};
use serde::{Deserialize, Serialize};

use super::{clamp_action, Env, EnvId, EnvSpec, Step};
use crate::error::{Error, Result};

/// Bottom of the valley, where `sin(3x)` is minimal.
pub const VALLEY_POSITION: f64 = -std::f64::consts::PI / 6.0;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct MountainCarConfig {
    pub min_position: f64,
    pub max_position: f64,
    pub goal_position: f64,
    pub max_speed: f64,
    pub power: f64,
    pub gravity: f64,
    pub goal_reward: f64,
    /// Per-step penalty is `fuel_coeff * a^2`.
    pub fuel_coeff: f64,
    pub max_episode_steps: usize,
    pub start_low: f64,
    pub start_high: f64,
    /// Minimum push magnitude for a move against the motion to count as a
    /// deliberate reversal.
    pub reversal_threshold: f64,
}

impl Default for MountainCarConfig {
    fn default() -> Self {
        MountainCarConfig {
            min_position: -1.2,
            max_position: 0.6,
            goal_position: 0.45,
            max_speed: 0.07,
            power: 0.0015,
            gravity: 0.0025,
            goal_reward: 100.0,
            fuel_coeff: 0.1,
            max_episode_steps: 300,
            start_low: -0.6,
            start_high: -0.4,
            reversal_threshold: 0.25,
        }
    }
}

#[derive(Clone, Debug)]
pub struct MountainCar1D {
    config: MountainCarConfig,
    spec: EnvSpec,
    position: f64,
    velocity: f64,
    steps: usize,
    at_goal: bool,
    clamped: u64,
}

impl MountainCar1D {
    pub fn new(config: MountainCarConfig) -> Result<Self> {
        if !(config.min_position < config.goal_position && config.goal_position <= config.max_position) {
            return Err(Error::config("mountain car goal must lie inside the track"));
        }
        if !(config.start_low <= config.start_high) {
            return Err(Error::config("mountain car start interval is empty"));
        }
        let spec = EnvSpec {
            id: EnvId::MountainCar,
            state_dim: 1,
            action_dim: 1,
            max_episode_steps: config.max_episode_steps,
            return_range: (
                -(config.max_episode_steps as f64) * config.fuel_coeff,
                config.goal_reward,
            ),
        };
        spec.validate()?;
        Ok(MountainCar1D {
            position: (config.start_low + config.start_high) / 2.0,
            velocity: 0.0,
            config,
            spec,
            steps: 0,
            at_goal: false,
            clamped: 0,
        })
    }

    pub fn config(&self) -> &MountainCarConfig {
        &self.config
    }

    pub fn position(&self) -> f64 {
        self.position
    }

    pub fn velocity(&self) -> f64 {
        self.velocity
    }

    /// Places the car at an arbitrary physical state (tests and labeling).
    pub fn set_state(&mut self, position: f64, velocity: f64) {
        self.position = position.clamp(self.config.min_position, self.config.max_position);
        self.velocity = velocity.clamp(-self.config.max_speed, self.config.max_speed);
    }

    pub fn encode(&self, position: f64, velocity: f64) -> f64 {
        let frac = (position - self.config.min_position) / (self.config.max_position - self.config.min_position);
        if velocity >= 0.0 {
            frac
        } else {
            -frac
        }
    }

    /// Climbing either slope and pushing against the motion.
    pub fn is_worst_case(&self, action: f64) -> bool {
        let v = self.velocity;
        let climbing = (self.position > VALLEY_POSITION && v > 0.0) || (self.position < VALLEY_POSITION && v < 0.0);
        climbing && action * v < 0.0 && action.abs() >= self.config.reversal_threshold
    }
}

impl Env for MountainCar1D {
    fn spec(&self) -> &EnvSpec {
        &self.spec
    }

    fn reset(&mut self, rng: &mut dyn RngCore) -> Vec<f64> {
        self.position = rng.random_range(self.config.start_low..=self.config.start_high);
        self.velocity = 0.0;
        self.steps = 0;
        self.at_goal = false;
        self.observe()
    }

    fn step(&mut self, action: &[f64]) -> Step {
        let c = &self.config;
        let a = clamp_action(action[0], &mut self.clamped);
        self.velocity = (self.velocity + a * c.power - c.gravity * (3.0 * self.position).cos())
            .clamp(-c.max_speed, c.max_speed);
        self.position = (self.position + self.velocity).clamp(c.min_position, c.max_position);
        if self.position <= c.min_position && self.velocity < 0.0 {
            self.velocity = 0.0;
        }
        self.steps += 1;

        let mut reward = -c.fuel_coeff * a * a;
        let terminal = self.position >= c.goal_position;
        if terminal {
            reward += c.goal_reward;
            self.at_goal = true;
        }
        Step {
            state: self.observe(),
            reward,
            terminal,
            truncated: !terminal && self.steps >= c.max_episode_steps,
        }
    }

    fn observe(&self) -> Vec<f64> {
        vec![self.encode(self.position, self.velocity)]
    }

    fn clamped_actions(&self) -> u64 {
        self.clamped
    }

    fn reached_goal(&self) -> bool {
        self.at_goal
    }

    fn as_mountain_car(&self) -> Option<&MountainCar1D> {
        Some(self)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn env() -> MountainCar1D {
        MountainCar1D::new(MountainCarConfig::default()).unwrap()
    }

    fn rollout(env: &mut MountainCar1D, seed: u64, policy: impl Fn(f64) -> f64) -> (f64, bool) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut obs = env.reset(&mut rng);
        let mut ret = 0.0;
        loop {
            let s = env.step(&[policy(obs[0])]);
            ret += s.reward;
            obs = s.state.clone();
            if s.done() {
                return (ret, s.terminal);
            }
        }
    }

    #[test]
    fn reset_is_in_range_and_seeded() {
        let mut e = env();
        let a = e.reset(&mut ChaCha8Rng::seed_from_u64(5));
        let b = e.reset(&mut ChaCha8Rng::seed_from_u64(5));
        assert_eq!(a, b);
        assert!(a[0] >= -1.0 && a[0] <= 1.0);
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        for _ in 0..1000 {
            e.reset(&mut rng);
            assert!(e.position() >= -0.6 && e.position() <= -0.4);
            assert_eq!(e.velocity(), 0.0);
        }
    }

    #[test]
    fn goal_adjacent_full_push_terminates_with_bonus() {
        let mut e = env();
        e.set_state(0.44, 0.02);
        let s = e.step(&[1.0]);
        assert!(s.terminal && s.done());
        assert!((s.reward - (100.0 - 0.1)).abs() < 1e-12);
    }

    #[test]
    fn zero_action_at_valley_rest_costs_nothing() {
        let mut e = env();
        e.set_state(VALLEY_POSITION, 0.0);
        let s = e.step(&[0.0]);
        assert_eq!(s.reward, 0.0);
        assert!((e.position() - VALLEY_POSITION).abs() < 1e-9);
    }

    #[test]
    fn constant_push_fails_but_bang_bang_succeeds() {
        let mut e = env();
        let (ret, reached) = rollout(&mut e, 1, |_| 1.0);
        assert!(!reached);
        assert!((ret + 30.0).abs() < 1e-9);
        let (ret, reached) = rollout(&mut e, 1, |s| if s >= 0.0 { 1.0 } else { -1.0 });
        assert!(reached);
        assert!(ret > 80.0);
    }

    #[test]
    fn compression_keeps_direction_but_not_speed() {
        let e = env();
        assert_eq!(e.encode(-0.3, 0.01), e.encode(-0.3, 0.06));
        assert_eq!(e.encode(-0.3, 0.01), -e.encode(-0.3, -0.01));
        assert_ne!(e.encode(-0.3, 0.01), e.encode(-0.3, -0.01));
    }

    #[test]
    fn out_of_range_action_is_clamped_and_counted() {
        let mut e = env();
        e.set_state(-0.5, 0.0);
        let s = e.step(&[3.0]);
        assert!((s.reward + 0.1).abs() < 1e-12);
        assert_eq!(e.clamped_actions(), 1);
    }

    #[test]
    fn worst_case_examples() {
        let mut e = env();
        e.set_state(-0.2, 0.03);
        assert!(e.is_worst_case(-0.8));
        assert!(!e.is_worst_case(0.8));
        e.set_state(VALLEY_POSITION, 0.0);
        assert!(!e.is_worst_case(0.0));
        // descending the right slope: pushing against motion is not a reversal of progress
        e.set_state(-0.2, -0.03);
        assert!(!e.is_worst_case(0.8));
    }
}
