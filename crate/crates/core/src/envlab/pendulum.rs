//! Pendulum swing-up. The pole starts hanging down; the per-step reward is
//! `(max_return / T) * ((1 + cos(theta)) / 2)^2` with `theta = 0` upright, so
//! returns lie in `[0, max_return]`.

use rand::{Rng, RngCore};
use serde::{Deserialize, Serialize};

use super::{clamp_action, Env, EnvId, EnvSpec, Step};
use crate::error::{Error, Result};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PendulumConfig {
    pub gravity: f64,
    pub mass: f64,
    pub length: f64,
    pub dt: f64,
    pub max_speed: f64,
    /// Torque applied for action `1.0`.
    pub max_torque: f64,
    pub max_episode_steps: usize,
    pub max_return: f64,
    /// Start angle is `pi + U(-start_angle_noise, start_angle_noise)`.
    pub start_angle_noise: f64,
    pub start_speed_noise: f64,
}

impl Default for PendulumConfig {
    fn default() -> Self {
        PendulumConfig {
            gravity: 10.0,
            mass: 1.0,
            length: 1.0,
            dt: 0.05,
            max_speed: 8.0,
            max_torque: 3.0,
            max_episode_steps: 200,
            max_return: 1000.0,
            start_angle_noise: 0.2,
            start_speed_noise: 0.5,
        }
    }
}

#[derive(Clone, Debug)]
pub struct Pendulum {
    config: PendulumConfig,
    spec: EnvSpec,
    theta: f64,
    theta_dot: f64,
    steps: usize,
    clamped: u64,
}

impl Pendulum {
    pub fn new(config: PendulumConfig) -> Result<Self> {
        if !(config.dt > 0.0 && config.max_torque > 0.0 && config.length > 0.0 && config.mass > 0.0) {
            return Err(Error::config("pendulum constants must be positive"));
        }
        let spec = EnvSpec {
            id: EnvId::Pendulum,
            state_dim: 3,
            action_dim: 1,
            max_episode_steps: config.max_episode_steps,
            return_range: (0.0, config.max_return),
        };
        spec.validate()?;
        Ok(Pendulum {
            config,
            spec,
            theta: std::f64::consts::PI,
            theta_dot: 0.0,
            steps: 0,
            clamped: 0,
        })
    }

    pub fn config(&self) -> &PendulumConfig {
        &self.config
    }

    pub fn theta(&self) -> f64 {
        self.theta
    }

    pub fn theta_dot(&self) -> f64 {
        self.theta_dot
    }

    pub fn set_state(&mut self, theta: f64, theta_dot: f64) {
        self.theta = theta;
        self.theta_dot = theta_dot;
    }

    /// Angular acceleration per unit of gravity term: `3 g / (2 l)`.
    pub fn gravity_gain(&self) -> f64 {
        3.0 * self.config.gravity / (2.0 * self.config.length)
    }

    /// Angular acceleration per unit torque: `3 / (m l^2)`.
    pub fn torque_gain(&self) -> f64 {
        3.0 / (self.config.mass * self.config.length * self.config.length)
    }
}

impl Env for Pendulum {
    fn spec(&self) -> &EnvSpec {
        &self.spec
    }

    fn reset(&mut self, rng: &mut dyn RngCore) -> Vec<f64> {
        let c = &self.config;
        self.theta = std::f64::consts::PI + rng.random_range(-c.start_angle_noise..=c.start_angle_noise);
        self.theta_dot = rng.random_range(-c.start_speed_noise..=c.start_speed_noise);
        self.steps = 0;
        self.observe()
    }

    fn step(&mut self, action: &[f64]) -> Step {
        let a = clamp_action(action[0], &mut self.clamped);
        let torque = a * self.config.max_torque;
        let acc = self.gravity_gain() * self.theta.sin() + self.torque_gain() * torque;
        let c = &self.config;
        self.theta_dot = (self.theta_dot + acc * c.dt).clamp(-c.max_speed, c.max_speed);
        self.theta += self.theta_dot * c.dt;
        // keep the raw angle bounded; observations only see cos/sin
        self.theta = (self.theta + std::f64::consts::PI).rem_euclid(2.0 * std::f64::consts::PI) - std::f64::consts::PI;
        self.steps += 1;

        let upright = 0.5 * (1.0 + self.theta.cos());
        let reward = c.max_return / c.max_episode_steps as f64 * upright * upright;
        Step {
            state: self.observe(),
            reward,
            terminal: false,
            truncated: self.steps >= c.max_episode_steps,
        }
    }

    fn observe(&self) -> Vec<f64> {
        vec![self.theta.cos(), self.theta.sin(), self.theta_dot]
    }

    fn clamped_actions(&self) -> u64 {
        self.clamped
    }
}
