//! Offline reinforcement learning with advantage-filtered behavioral cloning
//! and advantage-prioritized experience sampling.

pub mod agents;
pub mod datasets;
pub mod envlab;
pub mod error;
pub mod evalkit;
pub mod numkit;
pub mod policy;
pub mod replay;
pub mod scalar;
pub mod seeding;

pub use error::{Error, LoadError, Result};
pub use scalar::Scalar;

pub type Mlp32 = numkit::MlpNet<f32>;
pub type Mlp64 = numkit::MlpNet<f64>;
pub type Policy32 = policy::SquashedGaussianPolicy<f32>;
pub type Policy64 = policy::SquashedGaussianPolicy<f64>;
pub type Agent32 = agents::AfbcAgent<f32>;
pub type Agent64 = agents::AfbcAgent<f64>;
