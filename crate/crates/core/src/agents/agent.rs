//! Actor, critic ensemble and their update rules.

use ndarray::{concatenate, Array1, Array2, ArrayView1, ArrayView2, Axis};
use rand::seq::index;
use rand::Rng;
use serde::{Deserialize, Serialize};

use super::classifier::AdvantageClassifier;
use super::filter::{paired_ttest_approve, uncertainty_weights, FilterConfig, FilterKind};
use super::value::{mc_advantage, ValueNet};
use crate::error::{Error, Result};
use crate::numkit::{adam_step, AdamConfig, AdamState, GradTape, MlpNet, PopArtConfig, PopArtStats};
use crate::policy::{PolicyConfig, SquashedGaussianPolicy};
use crate::replay::Batch;
use crate::Scalar;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AdvantageEstimator {
    /// Critic value of `(s, a)` minus the mean critic value of policy samples.
    QBased,
    /// Stored return-to-go minus a learned state value.
    MonteCarlo,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct AgentConfig {
    pub hidden: Vec<usize>,
    pub actor_lr: f64,
    pub critic_lr: f64,
    pub gamma: f64,
    pub tau_polyak: f64,
    pub target_delay: usize,
    pub advantage_samples: usize,
    pub advantage: AdvantageEstimator,
    /// Critic ensemble size; 2 is clipped double-Q.
    pub n_critics: usize,
    /// Size of the random ensemble subset the target minimum is taken over.
    pub redq_subset: usize,
    /// Softmax temperature of the uncertainty-weighted critic loss; unset
    /// means the plain mean-squared loss.
    pub tau_temp: Option<f64>,
    pub popart: bool,
    pub popart_config: PopArtConfig,
    /// Rewards are multiplied by this before forming critic targets.
    pub reward_scale: f64,
    /// Targets with larger magnitude are counted as exploding.
    pub target_bound: f64,
    pub filter: FilterConfig,
    pub policy: PolicyConfig,
}

impl Default for AgentConfig {
    fn default() -> Self {
        AgentConfig {
            hidden: vec![64, 64],
            actor_lr: 1e-4,
            critic_lr: 1e-4,
            gamma: 0.99,
            tau_polyak: 0.005,
            target_delay: 2,
            advantage_samples: 4,
            advantage: AdvantageEstimator::QBased,
            n_critics: 2,
            redq_subset: 2,
            tau_temp: None,
            popart: true,
            popart_config: PopArtConfig::default(),
            reward_scale: 1.0,
            target_bound: 1e6,
            filter: FilterConfig::default(),
            policy: PolicyConfig::default(),
        }
    }
}

impl AgentConfig {
    pub fn validate(&self) -> Result<()> {
        if self.hidden.iter().any(|&h| h == 0) {
            return Err(Error::config("agent.hidden widths must be positive"));
        }
        for (name, lr) in [("actor_lr", self.actor_lr), ("critic_lr", self.critic_lr)] {
            if !(lr > 0.0 && lr.is_finite()) {
                return Err(Error::config(format!("agent.{name} must be positive, got {lr}")));
            }
        }
        if !(0.0..=1.0).contains(&self.gamma) {
            return Err(Error::config(format!("agent.gamma must lie in [0, 1], got {}", self.gamma)));
        }
        if !(self.tau_polyak > 0.0 && self.tau_polyak <= 1.0) {
            return Err(Error::config(format!("agent.tau_polyak must lie in (0, 1], got {}", self.tau_polyak)));
        }
        if self.target_delay == 0 {
            return Err(Error::config("agent.target_delay must be positive"));
        }
        if self.advantage_samples == 0 {
            return Err(Error::config("agent.advantage_samples must be positive"));
        }
        if self.n_critics < 2 || self.redq_subset < 2 || self.redq_subset > self.n_critics {
            return Err(Error::config(format!(
                "agent critic ensemble needs n_critics >= redq_subset >= 2, got n = {}, m = {}",
                self.n_critics, self.redq_subset
            )));
        }
        if let Some(t) = self.tau_temp {
            if !t.is_finite() {
                return Err(Error::config("agent.tau_temp must be finite"));
            }
        }
        if !(self.reward_scale > 0.0 && self.reward_scale.is_finite()) {
            return Err(Error::config("agent.reward_scale must be positive"));
        }
        if !(self.target_bound > 0.0) {
            return Err(Error::config("agent.target_bound must be positive"));
        }
        let p = &self.popart_config;
        if !(p.beta > 0.0 && p.beta <= 1.0 && p.sigma_min > 0.0 && p.nu_init > 0.0) {
            return Err(Error::config("agent.popart_config values out of range"));
        }
        if self.filter.kind == FilterKind::Exponential && self.filter.popart_rescale && !self.popart {
            return Err(Error::config(
                "agent.filter.popart_rescale needs agent.popart = true (or set popart_rescale = false)",
            ));
        }
        if self.advantage == AdvantageEstimator::MonteCarlo && self.filter.kind == FilterKind::TtestAnnealed {
            return Err(Error::config(
                "the t-test filter needs stochastic Q-based advantage estimates",
            ));
        }
        let pc = &self.policy;
        if !(pc.log_std_min < pc.log_std_max) {
            return Err(Error::config("agent.policy.log_std_min must be below agent.policy.log_std_max"));
        }
        if !(pc.action_clamp > 0.0 && pc.action_clamp < 1.0 && pc.squash_eps > 0.0) {
            return Err(Error::config("agent.policy.squash_eps and agent.policy.action_clamp must lie in (0, 1)"));
        }
        if !(pc.log_prob_clip > 0.0) {
            return Err(Error::config("agent.policy.log_prob_clip must be positive"));
        }
        self.filter.validate()
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct CriticStats {
    pub loss: f64,
    pub mean_q: f64,
    pub mean_target: f64,
    pub exploding_targets: usize,
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct ActorStats {
    pub loss: f64,
    /// Fraction of the batch the filter approved.
    pub approval: f64,
    pub advantages: Vec<f64>,
    pub weights: Vec<f64>,
}

/// Concatenates states and actions column-wise into critic inputs.
pub fn critic_input<T: Scalar>(states: ArrayView2<T>, actions: ArrayView2<T>) -> Result<Array2<T>> {
    if states.nrows() != actions.nrows() {
        return Err(Error::Shape {
            context: "critic input rows",
            expected: states.nrows(),
            actual: actions.nrows(),
        });
    }
    concatenate(Axis(1), &[states, actions]).map_err(|_| Error::usage("cannot concatenate critic inputs"))
}

fn repeat_rows<T: Scalar>(x: ArrayView2<T>, times: usize) -> Array2<T> {
    let views: Vec<_> = (0..times).map(|_| x).collect();
    concatenate(Axis(0), &views).expect("identical row widths")
}

fn mean(xs: &[f64]) -> f64 {
    if xs.is_empty() {
        0.0
    } else {
        xs.iter().sum::<f64>() / xs.len() as f64
    }
}

pub struct AfbcAgent<T> {
    config: AgentConfig,
    state_dim: usize,
    action_dim: usize,
    actor: SquashedGaussianPolicy<T>,
    actor_opt: AdamState<T>,
    actor_tape: GradTape<T>,
    critics: Vec<MlpNet<T>>,
    targets: Vec<MlpNet<T>>,
    critic_opts: Vec<AdamState<T>>,
    critic_tapes: Vec<GradTape<T>>,
    popart: Option<PopArtStats<T>>,
    value: Option<ValueNet<T>>,
    classifier: Option<AdvantageClassifier<T>>,
    critic_steps: u64,
    exploding_targets: u64,
}

impl<T: Scalar> AfbcAgent<T> {
    /// Initializes the actor, then the critics (targets are exact copies),
    /// then the optional value net and classifier, all from `rng`.
    pub fn new<R: Rng + ?Sized>(state_dim: usize, action_dim: usize, config: AgentConfig, rng: &mut R) -> Result<Self> {
        config.validate()?;
        let actor = SquashedGaussianPolicy::new(state_dim, action_dim, &config.hidden, config.policy, rng)?;
        let mut sizes = vec![state_dim + action_dim];
        sizes.extend_from_slice(&config.hidden);
        sizes.push(1);
        let critics = (0..config.n_critics)
            .map(|_| MlpNet::new(&sizes, rng))
            .collect::<Result<Vec<_>>>()?;
        let value = match config.advantage {
            AdvantageEstimator::MonteCarlo => Some(ValueNet::new(state_dim, &config.hidden, config.critic_lr, rng)?),
            AdvantageEstimator::QBased => None,
        };
        let classifier = match config.filter.kind {
            FilterKind::Classifier => Some(AdvantageClassifier::new(
                state_dim + action_dim,
                config.filter.classifier.clone(),
                rng,
            )?),
            _ => None,
        };
        Self::assemble(config, actor, critics, value, classifier)
    }

    /// Builds an agent from explicit networks.
    pub fn from_parts(
        config: AgentConfig,
        actor: SquashedGaussianPolicy<T>,
        critics: Vec<MlpNet<T>>,
    ) -> Result<Self> {
        config.validate()?;
        if critics.len() != config.n_critics {
            return Err(Error::config(format!(
                "expected {} critics, got {}",
                config.n_critics,
                critics.len()
            )));
        }
        Self::assemble(config, actor, critics, None, None)
    }

    fn assemble(
        config: AgentConfig,
        actor: SquashedGaussianPolicy<T>,
        critics: Vec<MlpNet<T>>,
        value: Option<ValueNet<T>>,
        classifier: Option<AdvantageClassifier<T>>,
    ) -> Result<Self> {
        let state_dim = actor.state_dim();
        let action_dim = actor.action_dim();
        for c in &critics {
            if c.input_dim() != state_dim + action_dim || c.output_dim() != 1 {
                return Err(Error::Shape {
                    context: "critic network shape",
                    expected: state_dim + action_dim,
                    actual: c.input_dim(),
                });
            }
        }
        let actor_opt = AdamState::new(actor.trunk(), AdamConfig::with_lr(config.actor_lr));
        let actor_tape = GradTape::for_net(actor.trunk());
        let critic_opts = critics
            .iter()
            .map(|c| AdamState::new(c, AdamConfig::with_lr(config.critic_lr)))
            .collect();
        let critic_tapes = critics.iter().map(GradTape::for_net).collect();
        let popart = if config.popart {
            Some(PopArtStats::new(config.popart_config)?)
        } else {
            None
        };
        Ok(AfbcAgent {
            state_dim,
            action_dim,
            actor_opt,
            actor_tape,
            targets: critics.clone(),
            critics,
            critic_opts,
            critic_tapes,
            popart,
            value,
            classifier,
            actor,
            config,
            critic_steps: 0,
            exploding_targets: 0,
        })
    }

    pub fn config(&self) -> &AgentConfig {
        &self.config
    }

    pub fn state_dim(&self) -> usize {
        self.state_dim
    }

    pub fn action_dim(&self) -> usize {
        self.action_dim
    }

    pub fn actor(&self) -> &SquashedGaussianPolicy<T> {
        &self.actor
    }

    pub fn actor_mut(&mut self) -> &mut SquashedGaussianPolicy<T> {
        &mut self.actor
    }

    pub fn critics(&self) -> &[MlpNet<T>] {
        &self.critics
    }

    pub fn critics_mut(&mut self) -> &mut [MlpNet<T>] {
        &mut self.critics
    }

    pub fn targets(&self) -> &[MlpNet<T>] {
        &self.targets
    }

    pub fn targets_mut(&mut self) -> &mut [MlpNet<T>] {
        &mut self.targets
    }

    pub fn popart(&self) -> Option<&PopArtStats<T>> {
        self.popart.as_ref()
    }

    pub fn value_net(&self) -> Option<&ValueNet<T>> {
        self.value.as_ref()
    }

    pub fn classifier(&self) -> Option<&AdvantageClassifier<T>> {
        self.classifier.as_ref()
    }

    pub fn critic_steps(&self) -> u64 {
        self.critic_steps
    }

    pub fn exploding_targets(&self) -> u64 {
        self.exploding_targets
    }

    /// Multiplier taking critic outputs to reward units.
    pub fn value_scale(&self) -> f64 {
        self.popart.as_ref().map_or(1.0, |p| p.sigma().to_f64_lossy())
    }

    fn denormalize(&self, q: T) -> T {
        match &self.popart {
            Some(p) => p.denormalize(q),
            None => q,
        }
    }

    /// Raw (normalized) outputs of `nets` at `(s, a)`, one row per net.
    pub fn q_matrix(nets: &[MlpNet<T>], states: ArrayView2<T>, actions: ArrayView2<T>) -> Result<Array2<T>> {
        let x = critic_input(states, actions)?;
        let mut out = Array2::zeros((nets.len(), x.nrows()));
        for (j, net) in nets.iter().enumerate() {
            out.row_mut(j).assign(&net.forward_batch(x.view())?.column(0));
        }
        Ok(out)
    }

    /// Ensemble members the target minimum is taken over. Draws from `rng`
    /// only when the subset is a strict subset.
    pub fn redq_members<R: Rng + ?Sized>(&self, rng: &mut R) -> Vec<usize> {
        let (n, m) = (self.config.n_critics, self.config.redq_subset);
        if m == n {
            (0..n).collect()
        } else {
            let mut idx = index::sample(rng, n, m).into_vec();
            idx.sort_unstable();
            idx
        }
    }

    /// Bootstrapped targets in reward units, `r * scale + gamma (1 - done)
    /// min_{j in subset} Q'_j(s', a')` with `a' ~ pi(s')`, plus the ensemble
    /// standard deviation of the target critics at `(s', a')`.
    pub fn redq_target<R: Rng + ?Sized>(
        &self,
        next_states: ArrayView2<T>,
        rewards: ArrayView1<T>,
        dones: ArrayView1<T>,
        rng: &mut R,
    ) -> Result<(Array1<T>, Vec<f64>)> {
        let (next_actions, _) = self.actor.sample_batch(next_states, rng)?;
        let members = self.redq_members(rng);
        let q = Self::q_matrix(&self.targets, next_states, next_actions.view())?;
        let n = next_states.nrows();
        let gamma = T::lit(self.config.gamma);
        let scale = T::lit(self.config.reward_scale);
        let mut y = Array1::zeros(n);
        let mut stds = Vec::with_capacity(n);
        for b in 0..n {
            let min = members
                .iter()
                .map(|&j| self.denormalize(q[[j, b]]))
                .fold(T::infinity(), |a, v| a.min(v));
            y[b] = rewards[b] * scale + gamma * (T::one() - dones[b]) * min;
            let col: Vec<f64> = q.column(b).iter().map(|v| v.to_f64_lossy()).collect();
            let mu = mean(&col);
            stds.push((col.iter().map(|v| (v - mu).powi(2)).sum::<f64>() / col.len() as f64).sqrt());
        }
        Ok((y, stds))
    }

    /// One regression step of every critic toward the bootstrapped target,
    /// `L = 1/2 sum_j mean_b w_b (Q_j(s, a) - y)^2` with `w = 1` unless the
    /// uncertainty-weighted loss is enabled. Target critics track the online
    /// critics every `target_delay` calls.
    pub fn critic_update<R: Rng + ?Sized>(&mut self, batch: &Batch<T>, rng: &mut R) -> Result<CriticStats> {
        let n = batch.len();
        if n == 0 {
            return Err(Error::usage("empty critic batch"));
        }
        let (y, stds) = self.redq_target(batch.next_states.view(), batch.rewards.view(), batch.dones.view(), rng)?;
        if y.iter().any(|v| !v.is_finite()) {
            return Err(Error::non_finite("critic target"));
        }
        let bound = T::lit(self.config.target_bound);
        let exploding = y.iter().filter(|v| v.abs() > bound).count();
        if exploding > 0 {
            self.exploding_targets += exploding as u64;
            log::warn!("{exploding} critic targets exceed the bound {}", self.config.target_bound);
        }
        let mean_target = mean(&y.iter().map(|v| v.to_f64_lossy()).collect::<Vec<_>>());

        let y_norm = match &mut self.popart {
            Some(p) => {
                let mut nets: Vec<&mut MlpNet<T>> = self.critics.iter_mut().chain(self.targets.iter_mut()).collect();
                p.update(&mut nets, y.as_slice().expect("contiguous targets"))?;
                y.mapv(|v| p.normalize(v))
            }
            None => y,
        };

        let weights: Vec<T> = match self.config.tau_temp {
            Some(t) => uncertainty_weights(&stds, t).into_iter().map(T::lit).collect(),
            None => vec![T::one(); n],
        };
        let x = critic_input(batch.states.view(), batch.actions.view())?;
        let inv_n = T::one() / T::from_usize(n).unwrap();
        let half = T::lit(0.5);
        let mut loss = T::zero();
        let mut q_sum = 0.0;
        for ((net, opt), tape) in self.critics.iter_mut().zip(&mut self.critic_opts).zip(&mut self.critic_tapes) {
            let q = net.forward_train(x.view(), tape)?;
            let mut grad = Array2::zeros((n, 1));
            for b in 0..n {
                let e = q[[b, 0]] - y_norm[b];
                loss += half * weights[b] * e * e * inv_n;
                grad[[b, 0]] = weights[b] * e * inv_n;
                q_sum += q[[b, 0]].to_f64_lossy();
            }
            net.backward(tape, grad.view())?;
            adam_step(net, tape, opt)?;
        }
        if !loss.is_finite() {
            return Err(Error::non_finite("critic loss"));
        }
        self.critic_steps += 1;
        if self.critic_steps % self.config.target_delay as u64 == 0 {
            let tau = T::lit(self.config.tau_polyak);
            for (target, online) in self.targets.iter_mut().zip(&self.critics) {
                target.polyak_from(online, tau)?;
            }
        }
        let scale = self.value_scale();
        let shift = self.popart.as_ref().map_or(0.0, |p| p.mu().to_f64_lossy());
        Ok(CriticStats {
            loss: loss.to_f64_lossy(),
            mean_q: scale * q_sum / (n * self.critics.len()) as f64 + shift,
            mean_target,
            exploding_targets: exploding,
        })
    }

    /// Q-based advantage in reward units: the ensemble-mean critic value of
    /// `(s, a)` minus its average over `advantage_samples` policy actions.
    pub fn q_advantages<R: Rng + ?Sized>(&self, states: ArrayView2<T>, actions: ArrayView2<T>, rng: &mut R) -> Result<Vec<f64>> {
        let n = states.nrows();
        let k = self.config.advantage_samples;
        let q_data = Self::q_matrix(&self.critics, states, actions)?;
        let reps = repeat_rows(states, k);
        let (policy_actions, _) = self.actor.sample_batch(reps.view(), rng)?;
        let q_pi = Self::q_matrix(&self.critics, reps.view(), policy_actions.view())?;
        let members = T::from_usize(self.critics.len()).unwrap();
        let kk = T::from_usize(k).unwrap();
        let scale = self.value_scale();
        let mut out = Vec::with_capacity(n);
        for b in 0..n {
            let qd = q_data.column(b).sum() / members;
            let mut baseline = T::zero();
            for i in 0..k {
                baseline += q_pi.column(i * n + b).sum() / members;
            }
            let adv = (qd - baseline / kk).to_f64_lossy() * scale;
            if !adv.is_finite() {
                return Err(Error::non_finite("advantage estimate"));
            }
            out.push(adv);
        }
        Ok(out)
    }

    /// Advantages of the batch under the configured estimator.
    pub fn advantages<R: Rng + ?Sized>(&self, batch: &Batch<T>, rng: &mut R) -> Result<Vec<f64>> {
        match self.config.advantage {
            AdvantageEstimator::QBased => self.q_advantages(batch.states.view(), batch.actions.view(), rng),
            AdvantageEstimator::MonteCarlo => {
                let v = self.value.as_ref().ok_or_else(|| Error::usage("Monte-Carlo estimator has no value net"))?;
                mc_advantage(v, batch.returns_to_go.as_ref().map(|g| g.view()), batch.states.view())
            }
        }
    }

    /// Critic-side update: the twin/ensemble critics, or the value baseline
    /// for Monte-Carlo advantages.
    pub fn value_update<R: Rng + ?Sized>(&mut self, batch: &Batch<T>, rng: &mut R) -> Result<CriticStats> {
        match self.config.advantage {
            AdvantageEstimator::QBased => self.critic_update(batch, rng),
            AdvantageEstimator::MonteCarlo => {
                let g = batch
                    .returns_to_go
                    .as_ref()
                    .ok_or_else(|| Error::data("Monte-Carlo advantages need return-to-go annotations"))?;
                let v = self.value.as_mut().ok_or_else(|| Error::usage("Monte-Carlo estimator has no value net"))?;
                let loss = v.fit(batch.states.view(), g.view())?;
                Ok(CriticStats {
                    loss: loss.to_f64_lossy(),
                    mean_target: mean(&g.iter().map(|x| x.to_f64_lossy()).collect::<Vec<_>>()),
                    ..Default::default()
                })
            }
        }
    }

    /// One Adam step on the weighted BC loss; returns the loss.
    pub fn weighted_actor_step(&mut self, states: ArrayView2<T>, actions: ArrayView2<T>, weights: &[f64]) -> Result<f64> {
        let w: Array1<T> = weights.iter().map(|&x| T::lit(x)).collect();
        let loss = self
            .actor
            .weighted_nll_backward(states, actions, w.view(), &mut self.actor_tape)?;
        adam_step(self.actor.trunk_mut(), &self.actor_tape, &mut self.actor_opt)?;
        Ok(loss.to_f64_lossy())
    }

    /// Plain behavioral cloning step on `E[-log pi(a | s)]`.
    pub fn bc_update(&mut self, states: ArrayView2<T>, actions: ArrayView2<T>) -> Result<f64> {
        let ones = vec![1.0; states.nrows()];
        self.weighted_actor_step(states, actions, &ones)
    }

    /// Filter weights for an actor batch. `step` and `total_steps` drive the
    /// t-test anneal. Returns `(advantages, weights, approved)`.
    pub fn filter_batch<R: Rng + ?Sized>(
        &mut self,
        batch: &Batch<T>,
        step: usize,
        total_steps: usize,
        rng: &mut R,
    ) -> Result<(Vec<f64>, Vec<f64>, Vec<bool>)> {
        let adv = self.advantages(batch, rng)?;
        let filter = self.config.filter.clone();
        let (weights, approved): (Vec<f64>, Vec<bool>) = match filter.kind {
            FilterKind::Binary => adv.iter().map(|&a| (filter.weight(a), a > 0.0)).unzip(),
            FilterKind::Exponential => {
                let scale = if filter.popart_rescale { self.value_scale() } else { 1.0 };
                adv.iter().map(|&a| (filter.weight(a / scale), a > 0.0)).unzip()
            }
            FilterKind::TtestAnnealed => {
                let p = filter.ttest.threshold(step, total_steps);
                let ok = self.ttest_approvals(batch.states.view(), batch.actions.view(), filter.ttest.k_estimates, p, rng)?;
                ok.iter().map(|&a| (if a { 1.0 } else { 0.0 }, a)).unzip()
            }
            FilterKind::Classifier => {
                let x = critic_input(batch.states.view(), batch.actions.view())?;
                let clf = self.classifier.as_mut().ok_or_else(|| Error::usage("classifier filter is not initialized"))?;
                let ok = clf.approve(x.view())?;
                let labels: Vec<bool> = adv.iter().map(|&a| a > 0.0).collect();
                clf.train(x.view(), &labels)?;
                ok.iter().map(|&a| (if a { 1.0 } else { 0.0 }, a)).unzip()
            }
        };
        Ok((adv, weights, approved))
    }

    /// Paired t-test approval per row: `k` advantage estimates of the dataset
    /// action against `k` estimates for fresh policy actions.
    pub fn ttest_approvals<R: Rng + ?Sized>(
        &self,
        states: ArrayView2<T>,
        actions: ArrayView2<T>,
        k: usize,
        p_threshold: f64,
        rng: &mut R,
    ) -> Result<Vec<bool>> {
        let n = states.nrows();
        if p_threshold >= 1.0 {
            return Ok(vec![true; n]);
        }
        let s = repeat_rows(states, k);
        let a = repeat_rows(actions, k);
        let data = self.q_advantages(s.view(), a.view(), rng)?;
        let (pi, _) = self.actor.sample_batch(s.view(), rng)?;
        let pol = self.q_advantages(s.view(), pi.view(), rng)?;
        Ok((0..n)
            .map(|b| {
                let d: Vec<f64> = (0..k).map(|i| data[i * n + b]).collect();
                let p: Vec<f64> = (0..k).map(|i| pol[i * n + b]).collect();
                paired_ttest_approve(&d, &p, p_threshold)
            })
            .collect())
    }

    /// Filtered BC step on an actor batch.
    pub fn actor_update<R: Rng + ?Sized>(
        &mut self,
        batch: &Batch<T>,
        step: usize,
        total_steps: usize,
        rng: &mut R,
    ) -> Result<ActorStats> {
        let (advantages, weights, approved) = self.filter_batch(batch, step, total_steps, rng)?;
        let loss = self.weighted_actor_step(batch.states.view(), batch.actions.view(), &weights)?;
        let approval = approved.iter().filter(|&&a| a).count() as f64 / approved.len().max(1) as f64;
        Ok(ActorStats {
            loss,
            approval,
            advantages,
            weights,
        })
    }
}
