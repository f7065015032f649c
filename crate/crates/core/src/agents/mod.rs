//! Behavioral cloning, advantage-filtered behavioral cloning with critic
//! ensembles, advantage filters and the training loop.

mod agent;
mod classifier;
mod filter;
mod train;
mod value;

pub use agent::{critic_input, ActorStats, AdvantageEstimator, AfbcAgent, AgentConfig, CriticStats};
pub use classifier::AdvantageClassifier;
pub use filter::{
    apply_filter, binary_weight, one_sided_p_value, paired_ttest_approve, uncertainty_weights, ClassifierConfig,
    FilterConfig, FilterKind, TtestConfig,
};
pub use train::{evaluate_policy, read_log, train, EvalEnv, EvalResult, LogRecord, Mode, TrainConfig, TrainLog};
pub use value::{mc_advantage, ValueNet};
