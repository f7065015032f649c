//! The offline training loop, evaluation rollouts and structured logs.

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;

use ndarray::Array2;
use rand::RngCore;
use serde::{Deserialize, Serialize};

use super::agent::AfbcAgent;
use crate::envlab::{make_env, EnvConfig, EnvId};
use crate::error::{Error, Result};
use crate::evalkit::{advantage_histogram, Histogram};
use crate::policy::SquashedGaussianPolicy;
use crate::replay::{Batch, ReplayBuffer};
use crate::seeding::RngStreams;
use crate::Scalar;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Mode {
    Bc,
    AfbcUniform,
    AfbcPer,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TrainConfig {
    pub mode: Mode,
    pub steps: usize,
    pub batch_size: usize,
    pub eval_interval: usize,
    pub eval_episodes: usize,
    /// Write a step record every this many steps, averaging over the interval.
    pub log_interval: usize,
    /// Transitions in the fixed advantage-histogram probe; 0 disables histograms.
    pub histogram_probe: usize,
    pub histogram_bins: usize,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            mode: Mode::AfbcPer,
            steps: 50_000,
            batch_size: 512,
            eval_interval: 1_000,
            eval_episodes: 10,
            log_interval: 1,
            histogram_probe: 1_000,
            histogram_bins: 61,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.steps == 0 || self.batch_size == 0 {
            return Err(Error::config("train.steps and train.batch_size must be positive"));
        }
        if self.eval_interval == 0 || self.log_interval == 0 {
            return Err(Error::config("train.eval_interval and train.log_interval must be positive"));
        }
        if self.histogram_bins == 0 {
            return Err(Error::config("train.histogram_bins must be positive"));
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum LogRecord {
    Step {
        step: usize,
        critic_loss: f64,
        actor_loss: f64,
        /// Fraction of the actor batch approved by the filter.
        approval: f64,
        mean_advantage: f64,
        mean_q: f64,
    },
    Eval {
        step: usize,
        mean_return: f64,
        returns: Vec<f64>,
        goals: usize,
    },
    Histogram {
        step: usize,
        edges: Vec<f64>,
        counts: Vec<u64>,
        negative_fraction: f64,
    },
    Summary {
        steps: usize,
        mean_approval: f64,
        final_mean_return: f64,
        final_goals: usize,
        exploding_targets: u64,
        nan_priorities_skipped: u64,
    },
}

/// Append-only log kept in memory and optionally mirrored to a JSONL file,
/// flushed after every record so partial logs survive failures.
#[derive(Default)]
pub struct TrainLog {
    pub records: Vec<LogRecord>,
    writer: Option<BufWriter<File>>,
}

impl TrainLog {
    pub fn in_memory() -> Self {
        Self::default()
    }

    pub fn to_file(path: &Path) -> Result<Self> {
        Ok(TrainLog {
            records: Vec::new(),
            writer: Some(BufWriter::new(File::create(path)?)),
        })
    }

    pub fn push(&mut self, record: LogRecord) -> Result<()> {
        if let Some(w) = &mut self.writer {
            let line = serde_json::to_string(&record).map_err(|e| Error::data(e.to_string()))?;
            writeln!(w, "{line}")?;
            w.flush()?;
        }
        self.records.push(record);
        Ok(())
    }

    pub fn evals(&self) -> impl Iterator<Item = (usize, f64, usize)> + '_ {
        self.records.iter().filter_map(|r| match r {
            LogRecord::Eval {
                step,
                mean_return,
                goals,
                ..
            } => Some((*step, *mean_return, *goals)),
            _ => None,
        })
    }

    pub fn summary(&self) -> Option<&LogRecord> {
        self.records.iter().rev().find(|r| matches!(r, LogRecord::Summary { .. }))
    }
}

/// Parses a JSONL training log.
pub fn read_log(path: &Path) -> Result<Vec<LogRecord>> {
    let text = std::fs::read_to_string(path)?;
    text.lines()
        .filter(|l| !l.trim().is_empty())
        .enumerate()
        .map(|(i, l)| {
            serde_json::from_str(l).map_err(|e| Error::data(format!("{}:{}: {e}", path.display(), i + 1)))
        })
        .collect()
}

#[derive(Clone, Debug, PartialEq)]
pub struct EvalResult {
    pub returns: Vec<f64>,
    pub goals: usize,
}

impl EvalResult {
    pub fn mean_return(&self) -> f64 {
        self.returns.iter().sum::<f64>() / self.returns.len().max(1) as f64
    }
}

/// Runs `episodes` deterministic (mean-action) rollouts side by side, one
/// batched policy forward per tick.
pub fn evaluate_policy<T: Scalar>(
    policy: &SquashedGaussianPolicy<T>,
    env_id: EnvId,
    env_config: &EnvConfig,
    episodes: usize,
    rng: &mut dyn RngCore,
) -> Result<EvalResult> {
    let mut envs = (0..episodes)
        .map(|_| make_env(env_id, env_config))
        .collect::<Result<Vec<_>>>()?;
    let mut obs: Vec<Vec<f64>> = envs.iter_mut().map(|e| e.reset(rng)).collect();
    let mut returns = vec![0.0; episodes];
    let mut alive = vec![true; episodes];
    let mut goals = 0;
    let sd = policy.state_dim();
    while alive.iter().any(|&a| a) {
        let live: Vec<usize> = (0..episodes).filter(|&i| alive[i]).collect();
        let x = Array2::from_shape_fn((live.len(), sd), |(r, c)| T::lit(obs[live[r]][c]));
        let acts = policy.mean_batch(x.view())?;
        for (r, &i) in live.iter().enumerate() {
            let a: Vec<f64> = acts.row(r).iter().map(|v| v.to_f64_lossy()).collect();
            let step = envs[i].step(&a);
            returns[i] += step.reward;
            if step.done() {
                alive[i] = false;
                if envs[i].reached_goal() {
                    goals += 1;
                }
            }
            obs[i] = step.state;
        }
    }
    Ok(EvalResult { returns, goals })
}

/// Where evaluation rollouts run.
#[derive(Clone, Debug)]
pub struct EvalEnv {
    pub id: EnvId,
    pub config: EnvConfig,
}

#[derive(Default)]
struct Window {
    n: usize,
    critic_loss: f64,
    actor_loss: f64,
    approval: f64,
    advantage: f64,
    q: f64,
}

/// Trains `agent` on `buffer` for `config.steps` steps.
///
/// Per step: a uniform critic batch updates the critics; under `AfbcPer` its
/// advantages become priorities. The actor batch (uniform, or prioritized
/// under `AfbcPer`) is filtered and cloned; under `AfbcPer` its priorities
/// are recomputed after the actor step. `Bc` skips the critics and clones
/// every sample.
pub fn train<T: Scalar>(
    agent: &mut AfbcAgent<T>,
    buffer: &mut ReplayBuffer,
    config: &TrainConfig,
    eval_env: Option<&EvalEnv>,
    streams: &mut RngStreams,
    log: &mut TrainLog,
) -> Result<EvalResult> {
    config.validate()?;
    if buffer.data().state_dim() != agent.state_dim() || buffer.data().action_dim() != agent.action_dim() {
        return Err(Error::Shape {
            context: "dataset vs agent dimensions",
            expected: agent.state_dim(),
            actual: buffer.data().state_dim(),
        });
    }
    let probe: Option<Batch<T>> = if config.histogram_probe > 0 && config.mode != Mode::Bc {
        let idx = buffer.uniform_indices(config.histogram_probe, &mut streams.probe)?;
        Some(buffer.gather(idx)?)
    } else {
        None
    };

    let mut window = Window::default();
    let mut approval_total = 0.0;
    let mut last_eval = EvalResult {
        returns: Vec::new(),
        goals: 0,
    };
    for step in 1..=config.steps {
        let at = |e: Error| Error::Training {
            step,
            source: Box::new(e),
        };
        let stats = train_step(agent, buffer, config, step, streams).map_err(at)?;
        window.n += 1;
        window.critic_loss += stats.0;
        window.actor_loss += stats.1;
        window.approval += stats.2;
        window.advantage += stats.3;
        window.q += stats.4;
        approval_total += stats.2;

        if step % config.log_interval == 0 || step == config.steps {
            let n = window.n as f64;
            log.push(LogRecord::Step {
                step,
                critic_loss: window.critic_loss / n,
                actor_loss: window.actor_loss / n,
                approval: window.approval / n,
                mean_advantage: window.advantage / n,
                mean_q: window.q / n,
            })?;
            window = Window::default();
        }

        if step % config.eval_interval == 0 || step == config.steps {
            if let Some(env) = eval_env {
                last_eval =
                    evaluate_policy(agent.actor(), env.id, &env.config, config.eval_episodes, &mut streams.eval)
                        .map_err(at)?;
                log.push(LogRecord::Eval {
                    step,
                    mean_return: last_eval.mean_return(),
                    returns: last_eval.returns.clone(),
                    goals: last_eval.goals,
                })?;
            }
            if let Some(p) = &probe {
                let adv = agent.advantages(p, &mut streams.probe).map_err(at)?;
                let h: Histogram = advantage_histogram(&adv, config.histogram_bins);
                log.push(LogRecord::Histogram {
                    step,
                    negative_fraction: h.negative_fraction(),
                    edges: h.edges,
                    counts: h.counts,
                })?;
            }
        }
    }
    log.push(LogRecord::Summary {
        steps: config.steps,
        mean_approval: approval_total / config.steps as f64,
        final_mean_return: last_eval.mean_return(),
        final_goals: last_eval.goals,
        exploding_targets: agent.exploding_targets(),
        nan_priorities_skipped: buffer.stats().nan_priorities_skipped,
    })?;
    Ok(last_eval)
}

/// One training step; returns (critic loss, actor loss, approval, mean advantage, mean Q).
fn train_step<T: Scalar>(
    agent: &mut AfbcAgent<T>,
    buffer: &mut ReplayBuffer,
    config: &TrainConfig,
    step: usize,
    streams: &mut RngStreams,
) -> Result<(f64, f64, f64, f64, f64)> {
    let b = config.batch_size;
    if config.mode == Mode::Bc {
        let batch: Batch<T> = buffer.sample_uniform(b, &mut streams.actor_batch)?;
        let loss = agent.bc_update(batch.states.view(), batch.actions.view())?;
        return Ok((0.0, loss, 1.0, 0.0, 0.0));
    }

    let critic_batch: Batch<T> = buffer.sample_uniform(b, &mut streams.critic_batch)?;
    let critic = agent.value_update(&critic_batch, &mut streams.policy)?;
    let per = config.mode == Mode::AfbcPer;
    if per {
        let adv = agent.advantages(&critic_batch, &mut streams.priority)?;
        buffer.update_priorities(&critic_batch.indices, &adv)?;
    }

    let actor_batch: Batch<T> = if per {
        buffer.sample_prioritized(b, &mut streams.actor_batch)?
    } else {
        buffer.sample_uniform(b, &mut streams.actor_batch)?
    };
    let actor = agent.actor_update(&actor_batch, step - 1, config.steps, &mut streams.policy)?;
    if per {
        let adv = agent.advantages(&actor_batch, &mut streams.priority)?;
        buffer.update_priorities(&actor_batch.indices, &adv)?;
    }
    let mean_adv = actor.advantages.iter().sum::<f64>() / actor.advantages.len().max(1) as f64;
    Ok((critic.loss, actor.loss, actor.approval, mean_adv, critic.mean_q))
}
