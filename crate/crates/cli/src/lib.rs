//! Command-line front end: collect tiered data, compose datasets, train,
//! evaluate checkpoints and emit reports.

pub mod checkpoint;
pub mod commands;
pub mod config;

use std::ffi::OsString;
use std::path::PathBuf;

use afbc::datasets::CollectConfig;
use afbc::envlab::{EnvConfig, EnvId};
use clap::{Parser, Subcommand};

use commands::{BuildArgs, CollectArgs};

/// Environment variable naming the default output root.
pub const OUT_DIR_ENV: &str = "AFBC_OUT_DIR";

pub const EXIT_OK: i32 = 0;
pub const EXIT_CONFIG: i32 = 2;
pub const EXIT_RUNTIME: i32 = 3;

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("{0}")]
    Config(String),
    #[error(transparent)]
    Runtime(afbc::Error),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl From<afbc::Error> for CliError {
    fn from(e: afbc::Error) -> Self {
        match e {
            afbc::Error::Config(msg) => CliError::Config(msg),
            other => CliError::Runtime(other),
        }
    }
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config(_) => EXIT_CONFIG,
            _ => EXIT_RUNTIME,
        }
    }
}

#[derive(Debug, Parser)]
#[command(name = "afbc", version, about = "Advantage-filtered behavioral cloning lab")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Record graded scripted behaviours into performance tiers.
    Collect {
        #[arg(long)]
        env: EnvId,
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long, default_value_t = 10)]
        episodes_per_block: usize,
        /// Transitions to keep per tier.
        #[arg(long, default_value_t = 40_000)]
        target_per_tier: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
    /// Compose a dataset from a tier store, or build a Mountain-Car set.
    BuildDataset {
        #[arg(long)]
        recipe: String,
        #[arg(long)]
        budget: usize,
        #[arg(long)]
        tiers: Option<PathBuf>,
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Non-expert transitions per expert transition (Mountain-Car mixtures).
        #[arg(long, default_value_t = 9)]
        noise_ratio: usize,
    },
    /// Train an agent from a run config.
    Train {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        out: Option<PathBuf>,
        /// Train this many consecutive seeds in parallel workers.
        #[arg(long, default_value_t = 1)]
        seeds: usize,
    },
    /// Roll out a checkpoint's mean-action policy.
    Evaluate {
        #[arg(long)]
        checkpoint: PathBuf,
        #[arg(long, default_value_t = 10)]
        episodes: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
    /// Write score tables, curves and histograms for a run directory.
    Report {
        #[arg(long)]
        run_dir: PathBuf,
    },
}

/// Parses `argv` and runs the subcommand, returning the process exit code.
pub fn run<I, S>(argv: I) -> i32
where
    I: IntoIterator<Item = S>,
    S: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(argv) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { EXIT_CONFIG } else { EXIT_OK };
        }
    };
    match execute(cli.command) {
        Ok(()) => EXIT_OK,
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}

fn out_root() -> PathBuf {
    std::env::var_os(OUT_DIR_ENV).map(PathBuf::from).unwrap_or_else(|| PathBuf::from("runs"))
}

fn execute(command: Command) -> Result<(), CliError> {
    match command {
        Command::Collect {
            env,
            out,
            episodes_per_block,
            target_per_tier,
            seed,
        } => {
            let out = out.unwrap_or_else(|| out_root().join(format!("{env}-tiers.bin")));
            let args = CollectArgs {
                env,
                env_config: EnvConfig::default(),
                out: out.clone(),
                collect: CollectConfig {
                    episodes_per_block,
                    target_per_tier,
                    ..Default::default()
                },
                seed,
            };
            let m = commands::collect(&args)?;
            println!("{} {}", out.display(), counts_line(&m));
        }
        Command::BuildDataset {
            recipe,
            budget,
            tiers,
            out,
            seed,
            noise_ratio,
        } => {
            let out = out.unwrap_or_else(|| out_root().join(format!("{recipe}.bin")));
            let args = BuildArgs {
                recipe,
                budget,
                tiers,
                out: out.clone(),
                seed,
                env_config: EnvConfig::default(),
                noise_ratio,
            };
            let m = commands::build_dataset(&args)?;
            println!("{} {}", out.display(), counts_line(&m));
        }
        Command::Train {
            config,
            seed,
            out,
            seeds,
        } => {
            let v = config::validate_config(&config)?;
            for w in &v.warnings {
                eprintln!("warning: {w}");
            }
            let mut cfg = v.config;
            if let Some(s) = seed {
                cfg.seed = s;
            }
            if seeds == 0 {
                return Err(CliError::Config("--seeds must be positive".into()));
            }
            let dir = out
                .or_else(|| cfg.out.clone())
                .unwrap_or_else(|| out_root().join(format!("train-seed{}", cfg.seed)));
            cfg.out = Some(dir.clone());
            for o in commands::train_seeds(&cfg, &dir, seeds)? {
                println!(
                    "seed {} final mean return {:.3} goals {}/{} -> {}",
                    o.seed,
                    o.final_eval.mean_return(),
                    o.final_eval.goals,
                    o.final_eval.returns.len(),
                    o.dir.display()
                );
            }
        }
        Command::Evaluate {
            checkpoint,
            episodes,
            seed,
        } => {
            let r = commands::evaluate(&checkpoint, episodes, seed)?;
            let line = serde_json::json!({
                "mean_return": r.mean_return(),
                "goals": r.goals,
                "returns": r.returns,
            });
            println!("{line}");
        }
        Command::Report { run_dir } => {
            for p in afbc::evalkit::emit_report(&run_dir)? {
                println!("{}", p.display());
            }
        }
    }
    Ok(())
}

fn counts_line(m: &afbc::datasets::DatasetManifest) -> String {
    let counts: Vec<String> = m.counts.iter().map(|(k, v)| format!("{k}={v}")).collect();
    format!("total={} {}", m.total, counts.join(" "))
}
