//! Subcommand implementations.

use std::path::{Path, PathBuf};

use afbc::agents::{evaluate_policy, train, AfbcAgent, EvalEnv, EvalResult, TrainLog};
use afbc::datasets::{
    build_mountain_car_sets, collect_snapshots, compose, load, save, CollectConfig, Dataset, DatasetManifest,
    GradedSchedule, MountainCarExpert, MountainCarSetConfig, Recipe, TierStore,
};
use afbc::envlab::{make_env, EnvConfig, EnvId};
use afbc::evalkit::{emit_report, LOG_FILE};
use afbc::replay::ReplayBuffer;
use afbc::seeding::{stream, RngStreams};
use afbc::Scalar;

use crate::checkpoint::{self, CHECKPOINT_FILE};
use crate::config::{write_snapshot, Precision, RunConfig, MOUNTAIN_CAR_RECIPES};
use crate::CliError;

/// Stream id for dataset collection, outside the range used by training.
const COLLECT_STREAM: u64 = 11;

#[derive(Clone, Debug)]
pub struct CollectArgs {
    pub env: EnvId,
    pub env_config: EnvConfig,
    pub out: PathBuf,
    pub collect: CollectConfig,
    pub seed: u64,
}

/// Records graded scripted behaviours into tier bins and saves the whole
/// store as one dataset whose manifest carries the block table.
pub fn collect(args: &CollectArgs) -> Result<DatasetManifest, CliError> {
    let mut env = make_env(args.env, &args.env_config)?;
    let mut source = GradedSchedule::new(args.env, args.env_config.clone());
    let mut rng = stream(args.seed, COLLECT_STREAM);
    let store = collect_snapshots(env.as_mut(), &mut source, &args.collect, &mut rng)?;
    let (data, blocks) = store.to_dataset()?;
    let mut manifest = DatasetManifest::describe(&data, "tiers", args.env, args.seed)?;
    manifest.blocks = blocks;
    create_parent(&args.out)?;
    save(&data, &manifest, &args.out)?;
    Ok(manifest)
}

#[derive(Clone, Debug)]
pub struct BuildArgs {
    pub recipe: String,
    pub budget: usize,
    pub tiers: Option<PathBuf>,
    pub out: PathBuf,
    pub seed: u64,
    pub env_config: EnvConfig,
    pub noise_ratio: usize,
}

pub fn build_dataset(args: &BuildArgs) -> Result<DatasetManifest, CliError> {
    let (data, manifest) = if MOUNTAIN_CAR_RECIPES.contains(&args.recipe.as_str()) {
        let expert = args.budget / (1 + args.noise_ratio);
        if expert == 0 {
            return Err(CliError::Config(format!(
                "--budget {} leaves no expert transitions at noise ratio {}",
                args.budget, args.noise_ratio
            )));
        }
        let cfg = MountainCarSetConfig {
            env: args.env_config.mountain_car.clone(),
            expert_transitions: expert,
            noise_ratio: args.noise_ratio,
            ..Default::default()
        };
        mountain_car_set(&args.recipe, &cfg, args.seed)?
    } else {
        let recipe: Recipe = args.recipe.parse().map_err(|e: afbc::Error| CliError::Config(e.to_string()))?;
        let tiers = args
            .tiers
            .as_ref()
            .ok_or_else(|| CliError::Config(format!("--tiers is required for recipe {}", args.recipe)))?;
        compose_from_tiers(recipe, tiers, args.budget, args.seed, &args.env_config)?
    };
    create_parent(&args.out)?;
    save(&data, &manifest, &args.out)?;
    Ok(manifest)
}

fn mountain_car_set(recipe: &str, cfg: &MountainCarSetConfig, seed: u64) -> Result<(Dataset, DatasetManifest), CliError> {
    let sets = build_mountain_car_sets(&mut MountainCarExpert, cfg, seed)?;
    Ok(match recipe {
        "mc-expert" => sets.expert,
        "mc-random-expert" => sets.random_expert,
        _ => sets.adversarial_expert,
    })
}

fn compose_from_tiers(
    recipe: Recipe,
    tiers: &Path,
    budget: usize,
    seed: u64,
    env_config: &EnvConfig,
) -> Result<(Dataset, DatasetManifest), CliError> {
    let (data, manifest) = load(tiers)?;
    let env = make_env(manifest.env, env_config)?;
    let store = TierStore::from_dataset(env.spec(), &data, &manifest.blocks)?;
    Ok(compose(recipe, &store, budget, seed)?)
}

/// Loads or builds the dataset a run config points at.
pub fn resolve_dataset(config: &RunConfig) -> Result<(Dataset, DatasetManifest), CliError> {
    let d = &config.dataset;
    let env_config = config.environment.env_config();
    let (data, manifest) = match (&d.path, &d.recipe) {
        (Some(path), _) => load(path)?,
        (None, Some(recipe)) if MOUNTAIN_CAR_RECIPES.contains(&recipe.as_str()) => {
            let cfg = MountainCarSetConfig {
                env: env_config.mountain_car.clone(),
                expert_transitions: d.expert_transitions,
                noise_ratio: d.noise_ratio,
                ..Default::default()
            };
            mountain_car_set(recipe, &cfg, d.seed)?
        }
        (None, Some(recipe)) => {
            let recipe: Recipe = recipe.parse().map_err(|e: afbc::Error| CliError::Config(e.to_string()))?;
            let tiers = d.tiers.as_ref().ok_or_else(|| CliError::Config("dataset.tiers is required".into()))?;
            compose_from_tiers(recipe, tiers, d.budget.unwrap_or(0), d.seed, &env_config)?
        }
        (None, None) => return Err(CliError::Config("dataset: no path or recipe".into())),
    };
    if manifest.env != config.environment.id {
        return Err(CliError::Config(format!(
            "dataset was recorded on {} but environment.id is {}",
            manifest.env, config.environment.id
        )));
    }
    Ok((data, manifest))
}

/// Outcome of one training run.
#[derive(Clone, Debug)]
pub struct TrainOutcome {
    pub seed: u64,
    pub dir: PathBuf,
    pub final_eval: EvalResult,
}

/// Trains one seed into `dir`: snapshot first, then the JSONL log, the
/// checkpoint and the report.
pub fn train_run(config: &RunConfig, dir: &Path) -> Result<TrainOutcome, CliError> {
    write_snapshot(config, dir)?;
    let (data, _) = resolve_dataset(config)?;
    let final_eval = match config.precision {
        Precision::F32 => train_typed::<f32>(config, data, dir)?,
        Precision::F64 => train_typed::<f64>(config, data, dir)?,
    };
    emit_report(dir)?;
    Ok(TrainOutcome {
        seed: config.seed,
        dir: dir.to_path_buf(),
        final_eval,
    })
}

fn train_typed<T: Scalar>(config: &RunConfig, data: Dataset, dir: &Path) -> Result<EvalResult, CliError> {
    let (sd, ad) = (data.state_dim(), data.action_dim());
    let mut buffer = ReplayBuffer::new(data, config.replay.clone())?;
    let mut streams = RngStreams::new(config.seed);
    let mut agent = AfbcAgent::<T>::new(sd, ad, config.agent.clone(), &mut streams.init)?;
    let eval_env = EvalEnv {
        id: config.environment.id,
        config: config.environment.env_config(),
    };
    let mut log = TrainLog::to_file(&dir.join(LOG_FILE))?;
    let result = train(&mut agent, &mut buffer, &config.train, Some(&eval_env), &mut streams, &mut log)?;
    checkpoint::save(
        &dir.join(CHECKPOINT_FILE),
        &agent,
        config.environment.id,
        &eval_env.config,
        config.train.steps,
    )?;
    Ok(result)
}

/// Trains `seeds` consecutive seeds starting at `config.seed`, each in its
/// own worker thread and `seed-<n>` subdirectory, then reports over all.
pub fn train_seeds(config: &RunConfig, out: &Path, seeds: usize) -> Result<Vec<TrainOutcome>, CliError> {
    if seeds <= 1 {
        return Ok(vec![train_run(config, out)?]);
    }
    write_snapshot(config, out)?;
    let results: Vec<Result<TrainOutcome, CliError>> = std::thread::scope(|scope| {
        let handles: Vec<_> = (0..seeds as u64)
            .map(|k| {
                let mut cfg = config.clone();
                cfg.seed = config.seed + k;
                let dir = out.join(format!("seed-{}", cfg.seed));
                scope.spawn(move || train_run(&cfg, &dir))
            })
            .collect();
        handles
            .into_iter()
            .map(|h| h.join().unwrap_or_else(|_| Err(CliError::Runtime(afbc::Error::Usage("worker panicked".into())))))
            .collect()
    });
    let outcomes = results.into_iter().collect::<Result<Vec<_>, _>>()?;
    emit_report(out)?;
    Ok(outcomes)
}

pub fn evaluate(checkpoint_path: &Path, episodes: usize, seed: u64) -> Result<EvalResult, CliError> {
    if episodes == 0 {
        return Err(CliError::Config("--episodes must be positive".into()));
    }
    let loaded = checkpoint::load::<f64>(checkpoint_path)?;
    let mut rng = RngStreams::new(seed).eval;
    Ok(evaluate_policy(&loaded.policy, loaded.env, &loaded.env_config, episodes, &mut rng)?)
}

fn create_parent(path: &Path) -> Result<(), CliError> {
    if let Some(parent) = path.parent() {
        if !parent.as_os_str().is_empty() {
            std::fs::create_dir_all(parent)?;
        }
    }
    Ok(())
}
