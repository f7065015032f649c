//! Run checkpoints: the actor and critics in the core checkpoint format, with
//! the environment and policy settings needed for evaluation stored as meta
//! entries.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use afbc::agents::AfbcAgent;
use afbc::envlab::{EnvConfig, EnvId};
use afbc::numkit::checkpoint;
use afbc::policy::{PolicyConfig, SquashedGaussianPolicy};
use afbc::{LoadError, Scalar};

use crate::CliError;

pub const CHECKPOINT_FILE: &str = "checkpoint.bin";

pub fn save<T: Scalar>(
    path: &Path,
    agent: &AfbcAgent<T>,
    env: EnvId,
    env_config: &EnvConfig,
    steps: usize,
) -> Result<(), CliError> {
    let mut meta = BTreeMap::new();
    meta.insert("env".to_string(), env.as_str().to_string());
    meta.insert("env_config".to_string(), json(env_config)?);
    meta.insert("policy".to_string(), json(&agent.config().policy)?);
    meta.insert("steps".to_string(), steps.to_string());
    let mut nets: Vec<(String, &afbc::numkit::MlpNet<T>)> = vec![("actor".to_string(), agent.actor().trunk())];
    for (j, c) in agent.critics().iter().enumerate() {
        nets.push((format!("critic{j}"), c));
    }
    let named: Vec<(&str, &afbc::numkit::MlpNet<T>)> = nets.iter().map(|(n, net)| (n.as_str(), *net)).collect();
    checkpoint::save(path, &meta, &named)?;
    Ok(())
}

/// What `evaluate` needs from a checkpoint.
pub struct Loaded<T> {
    pub env: EnvId,
    pub env_config: EnvConfig,
    pub policy: SquashedGaussianPolicy<T>,
    pub steps: usize,
}

/// Reads a checkpoint file, or `checkpoint.bin` inside a run directory.
pub fn load<T: Scalar>(path: &Path) -> Result<Loaded<T>, CliError> {
    let file: PathBuf = if path.is_dir() { path.join(CHECKPOINT_FILE) } else { path.to_path_buf() };
    let ck = checkpoint::load::<T>(&file)?;
    let bad = |what: String| {
        CliError::Runtime(afbc::Error::Load {
            path: file.clone(),
            source: LoadError::Header(what),
        })
    };
    let get = |key: &str| ck.meta.get(key).ok_or_else(|| bad(format!("missing meta entry {key:?}")));
    let env: EnvId = get("env")?.parse().map_err(|e| bad(format!("env: {e}")))?;
    let env_config: EnvConfig = serde_json::from_str(get("env_config")?).map_err(|e| bad(format!("env_config: {e}")))?;
    let policy_config: PolicyConfig = serde_json::from_str(get("policy")?).map_err(|e| bad(format!("policy: {e}")))?;
    let steps: usize = get("steps")?.parse().map_err(|e| bad(format!("steps: {e}")))?;
    let trunk = ck.net("actor").ok_or_else(|| bad("missing actor network".into()))?.clone();
    Ok(Loaded {
        env,
        env_config,
        policy: SquashedGaussianPolicy::from_trunk(trunk, policy_config)?,
        steps,
    })
}

fn json<S: serde::Serialize>(value: &S) -> Result<String, CliError> {
    serde_json::to_string(value).map_err(|e| CliError::Runtime(afbc::Error::Data(e.to_string())))
}
