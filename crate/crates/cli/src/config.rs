//! Run configuration files. The grammar is documented in `docs/config.md`.

use std::path::{Path, PathBuf};

use afbc::agents::{AgentConfig, FilterKind, Mode, TrainConfig};
use afbc::datasets::Recipe;
use afbc::envlab::{EnvConfig, EnvId, MountainCarConfig, PendulumConfig};
use afbc::replay::ReplayConfig;
use serde::{Deserialize, Serialize};

use crate::CliError;

/// File name of the resolved-config snapshot written into every run directory.
pub const SNAPSHOT_FILE: &str = "config.resolved.toml";

/// Recipes built in-process from the scripted Mountain-Car expert.
pub const MOUNTAIN_CAR_RECIPES: [&str; 3] = ["mc-expert", "mc-random-expert", "mc-adversarial-expert"];

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Precision {
    F32,
    #[default]
    F64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct EnvironmentSection {
    pub id: EnvId,
    pub mountain_car: MountainCarConfig,
    pub pendulum: PendulumConfig,
}

impl Default for EnvironmentSection {
    fn default() -> Self {
        EnvironmentSection {
            id: EnvId::MountainCar,
            mountain_car: MountainCarConfig::default(),
            pendulum: PendulumConfig::default(),
        }
    }
}

impl EnvironmentSection {
    pub fn env_config(&self) -> EnvConfig {
        EnvConfig {
            mountain_car: self.mountain_car.clone(),
            pendulum: self.pendulum.clone(),
        }
    }
}

/// Where the training data comes from: a saved dataset file, a recipe over a
/// saved tier store, or one of the built-in Mountain-Car sets.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct DatasetSection {
    pub path: Option<PathBuf>,
    pub recipe: Option<String>,
    pub tiers: Option<PathBuf>,
    pub budget: Option<usize>,
    /// Seed for composing or building the dataset; independent of the
    /// training seed so several training seeds can share one dataset.
    pub seed: u64,
    /// Transitions of expert data in the built-in Mountain-Car sets.
    pub expert_transitions: usize,
    /// Non-expert transitions per expert transition in the Mountain-Car mixtures.
    pub noise_ratio: usize,
}

impl Default for DatasetSection {
    fn default() -> Self {
        DatasetSection {
            path: None,
            recipe: Some("mc-expert".into()),
            tiers: None,
            budget: None,
            seed: 0,
            expert_transitions: 10_000,
            noise_ratio: 9,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RunConfig {
    pub seed: u64,
    pub out: Option<PathBuf>,
    pub precision: Precision,
    pub environment: EnvironmentSection,
    pub dataset: DatasetSection,
    pub train: TrainConfig,
    pub agent: AgentConfig,
    pub replay: ReplayConfig,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            seed: 0,
            out: None,
            precision: Precision::F64,
            environment: EnvironmentSection::default(),
            dataset: DatasetSection::default(),
            train: TrainConfig::default(),
            agent: AgentConfig::default(),
            replay: ReplayConfig::default(),
        }
    }
}

/// A parsed, defaulted and range-checked configuration plus the warnings
/// raised for fields that have no effect.
#[derive(Clone, Debug, PartialEq)]
pub struct Validated {
    pub config: RunConfig,
    pub warnings: Vec<String>,
}

pub fn validate_config(path: &Path) -> Result<Validated, CliError> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| CliError::Config(format!("cannot read config {}: {e}", path.display())))?;
    parse_config(&text).map_err(|e| match e {
        CliError::Config(msg) => CliError::Config(format!("{}: {msg}", path.display())),
        other => other,
    })
}

pub fn parse_config(text: &str) -> Result<Validated, CliError> {
    let table: toml::Table = text.parse().map_err(|e: toml::de::Error| CliError::Config(e.to_string()))?;
    let config: RunConfig = toml::from_str(text).map_err(|e| CliError::Config(e.to_string()))?;
    check(&config)?;
    let warnings = ignored_fields(&table, &config);
    Ok(Validated { config, warnings })
}

/// Resolved snapshot with every default materialized.
pub fn to_snapshot(config: &RunConfig) -> Result<String, CliError> {
    toml::to_string(config).map_err(|e| CliError::Config(format!("cannot serialize config: {e}")))
}

pub fn write_snapshot(config: &RunConfig, dir: &Path) -> Result<PathBuf, CliError> {
    std::fs::create_dir_all(dir)?;
    let path = dir.join(SNAPSHOT_FILE);
    std::fs::write(&path, to_snapshot(config)?)?;
    Ok(path)
}

fn check(c: &RunConfig) -> Result<(), CliError> {
    if c.seed > i64::MAX as u64 {
        return Err(CliError::Config(format!("seed must be at most {}, got {}", i64::MAX, c.seed)));
    }
    c.train.validate()?;
    c.agent.validate()?;
    c.replay.validate()?;
    afbc::envlab::make_env(c.environment.id, &c.environment.env_config())
        .map_err(|e| CliError::Config(format!("environment.{}: {e}", c.environment.id)))?;

    let d = &c.dataset;
    match (&d.path, &d.recipe) {
        (Some(_), Some(_)) => {
            return Err(CliError::Config("dataset: set either dataset.path or dataset.recipe, not both".into()))
        }
        (None, None) => return Err(CliError::Config("dataset: one of dataset.path or dataset.recipe is required".into())),
        (Some(_), None) => {}
        (None, Some(recipe)) => check_recipe(c, recipe)?,
    }
    Ok(())
}

fn check_recipe(c: &RunConfig, recipe: &str) -> Result<(), CliError> {
    let d = &c.dataset;
    if MOUNTAIN_CAR_RECIPES.contains(&recipe) {
        if c.environment.id != EnvId::MountainCar {
            return Err(CliError::Config(format!(
                "dataset.recipe {recipe:?} needs environment.id = \"mountain_car\", got {:?}",
                c.environment.id.as_str()
            )));
        }
        if d.expert_transitions == 0 {
            return Err(CliError::Config("dataset.expert_transitions must be positive".into()));
        }
        return Ok(());
    }
    recipe.parse::<Recipe>().map_err(|e| CliError::Config(format!("dataset.recipe: {e}")))?;
    if d.tiers.is_none() {
        return Err(CliError::Config(format!("dataset.tiers is required for recipe {recipe:?}")));
    }
    match d.budget {
        Some(b) if b > 0 => Ok(()),
        _ => Err(CliError::Config(format!("dataset.budget must be positive for recipe {recipe:?}"))),
    }
}

fn present(table: &toml::Table, path: &[&str]) -> bool {
    let mut cur = table;
    for (i, key) in path.iter().enumerate() {
        match cur.get(*key) {
            Some(toml::Value::Table(t)) if i + 1 < path.len() => cur = t,
            Some(_) if i + 1 == path.len() => return true,
            _ => return false,
        }
    }
    false
}

fn ignored_fields(table: &toml::Table, c: &RunConfig) -> Vec<String> {
    let mut out = Vec::new();
    let kind = c.agent.filter.kind;
    let kind_name = match kind {
        FilterKind::Binary => "binary",
        FilterKind::Exponential => "exponential",
        FilterKind::TtestAnnealed => "ttest_annealed",
        FilterKind::Classifier => "classifier",
    };
    if c.train.mode == Mode::Bc && present(table, &["agent", "filter"]) {
        out.push("agent.filter is ignored in bc mode".to_string());
    } else {
        if kind != FilterKind::Exponential {
            for key in ["beta", "clip_max", "popart_rescale"] {
                if present(table, &["agent", "filter", key]) {
                    out.push(format!("agent.filter.{key} is ignored by the {kind_name} filter"));
                }
            }
        }
        if kind != FilterKind::TtestAnnealed && present(table, &["agent", "filter", "ttest"]) {
            out.push(format!("agent.filter.ttest is ignored by the {kind_name} filter"));
        }
        if kind != FilterKind::Classifier && present(table, &["agent", "filter", "classifier"]) {
            out.push(format!("agent.filter.classifier is ignored by the {kind_name} filter"));
        }
    }
    if c.train.mode != Mode::AfbcPer && present(table, &["replay"]) {
        out.push("replay settings are ignored outside afbc_per mode".to_string());
    }
    if c.dataset.path.is_some() {
        for key in ["tiers", "budget"] {
            if present(table, &["dataset", key]) {
                out.push(format!("dataset.{key} is ignored when dataset.path is set"));
            }
        }
    }
    out
}
