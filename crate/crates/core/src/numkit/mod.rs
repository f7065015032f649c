//! Minimal dense numeric core: fixed-architecture perceptrons with a
//! hand-written reverse pass, Adam, and the PopArt output-normalization head.

mod adam;
pub mod checkpoint;
mod mlp;
mod popart;

pub use adam::{adam_step, AdamConfig, AdamState};
pub use mlp::{Dense, GradTape, MlpNet};
pub use popart::{PopArtConfig, PopArtSchedule, PopArtStats};
