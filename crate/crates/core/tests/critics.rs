//! Critic targets, regression fixed points and advantage estimates.

use afbc::agents::{mc_advantage, AgentConfig, ValueNet};
use afbc::datasets::{Dataset, Tag, Transition};
use afbc::numkit::{Dense, MlpNet};
use afbc::policy::{PolicyConfig, SquashedGaussianPolicy};
use afbc::replay::{Batch, ReplayBuffer, ReplayConfig};
use afbc::Agent64;
use ndarray::{array, Array1, Array2};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

fn plain(config: AgentConfig) -> AgentConfig {
    let mut c = config;
    c.popart = false;
    c.filter.popart_rescale = false;
    c
}

fn dataset(rows: &[(f32, f32, f32, f32, bool)]) -> Dataset {
    let mut d = Dataset::new(1, 1, false);
    for &(s, a, r, s2, done) in rows {
        let t = Transition {
            s: vec![s],
            a: vec![a],
            r,
            s_next: vec![s2],
            done,
        };
        d.push(&t, Tag::Random, None).unwrap();
    }
    d
}

fn q_at(agent: &Agent64, s: f64, a: f64) -> f64 {
    let q = Agent64::q_matrix(agent.critics(), array![[s]].view(), array![[a]].view()).unwrap();
    q.mean().unwrap() * agent.value_scale() + agent.popart().map_or(0.0, |p| p.mu())
}

/// Trains the critics alone on uniform batches of `data`.
fn fit_critics(agent: &mut Agent64, data: Dataset, steps: usize, seed: u64) {
    let buffer = ReplayBuffer::new(data, ReplayConfig::default()).unwrap();
    let mut r = rng(seed);
    for _ in 0..steps {
        let batch: Batch<f64> = buffer.sample_uniform(64, &mut r).unwrap();
        agent.critic_update(&batch, &mut r).unwrap();
    }
}

#[test]
fn zero_reward_terminals_give_zero_targets() {
    let rows: Vec<_> = (0..32).map(|i| (i as f32 / 32.0, 0.0, 0.0, 0.3, true)).collect();
    let buffer = ReplayBuffer::new(dataset(&rows), ReplayConfig::default()).unwrap();
    let agent = Agent64::new(1, 1, plain(AgentConfig::default()), &mut rng(1)).unwrap();
    let b: Batch<f64> = buffer.sample_uniform(16, &mut rng(2)).unwrap();
    let (y, _) = agent.redq_target(b.next_states.view(), b.rewards.view(), b.dones.view(), &mut rng(3)).unwrap();
    assert!(y.iter().all(|&v| v == 0.0));

    let mut agent = Agent64::new(1, 1, plain(AgentConfig { critic_lr: 1e-3, ..Default::default() }), &mut rng(1)).unwrap();
    fit_critics(&mut agent, dataset(&rows), 2000, 4);
    for s in [0.0, 0.5, 0.9] {
        assert!(q_at(&agent, s, 0.0).abs() < 1e-2);
    }
}

#[test]
fn single_terminal_reward_is_learned() {
    let rows: Vec<_> = (0..64).map(|i| (0.2, -1.0 + i as f32 / 32.0, 1.0, 0.2, true)).collect();
    for popart in [false, true] {
        let mut config = AgentConfig {
            critic_lr: 1e-3,
            popart,
            ..Default::default()
        };
        config.filter.popart_rescale = popart;
        let mut agent = Agent64::new(1, 1, config, &mut rng(5)).unwrap();
        fit_critics(&mut agent, dataset(&rows), 3000, 6);
        let q = q_at(&agent, 0.2, 0.1);
        assert!((q - 1.0).abs() < 1e-2, "popart {popart}: Q = {q}");
    }
}

/// Two states that alternate regardless of the action: leaving `s0` pays 0,
/// leaving `s1` pays 1. `V0 = gamma V1`, `V1 = 1 + gamma V0`.
#[test]
fn two_state_chain_matches_dynamic_programming() {
    let gamma: f64 = 0.99;
    let v1 = 1.0 / (1.0 - gamma * gamma);
    let v0 = gamma * v1;
    let (s0, s1) = (-0.5f32, 0.5f32);
    let mut rows = Vec::new();
    for i in 0..64 {
        let a = -0.98 + 1.96 * i as f32 / 63.0;
        rows.push((s0, a, 0.0, s1, false));
        rows.push((s1, a, 1.0, s0, false));
    }
    let config = plain(AgentConfig {
        hidden: vec![32, 32],
        critic_lr: 3e-4,
        tau_polyak: 0.05,
        target_delay: 1,
        gamma,
        ..Default::default()
    });
    let mut agent = Agent64::new(1, 1, config, &mut rng(7)).unwrap();
    fit_critics(&mut agent, dataset(&rows), 20_000, 8);
    for a in [-0.5, 0.0, 0.5] {
        let (q0, q1) = (q_at(&agent, s0 as f64, a), q_at(&agent, s1 as f64, a));
        assert!((q0 - v0).abs() < 5e-2 && (q1 - v1).abs() < 5e-2, "a {a}: ({q0}, {q1}) vs ({v0}, {v1})");
    }
}

fn constant_net(sizes: &[usize], c: f64) -> MlpNet<f64> {
    let mut net = MlpNet::zeros(sizes).unwrap();
    net.output_layer_mut().bias.fill(c);
    net
}

#[test]
fn redq_pair_minimum_of_one_to_ten() {
    let config = plain(AgentConfig {
        hidden: vec![4],
        n_critics: 10,
        redq_subset: 2,
        gamma: 1.0,
        ..Default::default()
    });
    let mut agent = Agent64::new(1, 1, config, &mut rng(9)).unwrap();
    for (j, t) in agent.targets_mut().iter_mut().enumerate() {
        *t = constant_net(&[2, 4, 1], (j + 1) as f64);
    }
    // exhaustive enumeration of the 45 pairs
    let mut exact = 0.0;
    for i in 1..=10 {
        for j in i + 1..=10 {
            exact += i.min(j) as f64;
        }
    }
    exact /= 45.0;
    assert!((exact - 55.0 / 15.0).abs() < 1e-12);

    let mut r = rng(10);
    let draws = 100_000;
    let mut sum = 0.0;
    let (s, zero) = (array![[0.0]], array![0.0]);
    for _ in 0..draws {
        let (y, _) = agent.redq_target(s.view(), zero.view(), zero.view(), &mut r).unwrap();
        sum += y[0];
    }
    let est = sum / draws as f64;
    assert!((est - exact).abs() / exact < 0.01, "{est} vs {exact}");
}

#[test]
fn full_pair_is_the_clipped_double_q_target() {
    let config = plain(AgentConfig::default());
    let mut agent = Agent64::new(2, 1, config, &mut rng(11)).unwrap();
    let mut r = rng(12);
    for t in agent.targets_mut() {
        *t = MlpNet::new(&[3, 64, 64, 1], &mut r).unwrap();
    }
    let s2 = Array2::from_shape_fn((8, 2), |_| r.random_range(-1.0..1.0));
    let rewards = Array1::from_shape_fn(8, |_| r.random_range(-1.0..1.0));
    let dones = Array1::from_shape_fn(8, |i| if i % 3 == 0 { 1.0 } else { 0.0 });
    let (y, _) = agent.redq_target(s2.view(), rewards.view(), dones.view(), &mut rng(13)).unwrap();

    let (a2, _) = agent.actor().sample_batch(s2.view(), &mut rng(13)).unwrap();
    let x = ndarray::concatenate![ndarray::Axis(1), s2, a2];
    let q1 = agent.targets()[0].forward_batch(x.view()).unwrap();
    let q2 = agent.targets()[1].forward_batch(x.view()).unwrap();
    for b in 0..8 {
        let expected = rewards[b] + 0.99 * (1.0 - dones[b]) * q1[[b, 0]].min(q2[[b, 0]]);
        assert_eq!(y[b], expected);
    }
}

#[test]
fn identical_members_make_the_subset_irrelevant() {
    let config = plain(AgentConfig {
        n_critics: 5,
        redq_subset: 2,
        ..Default::default()
    });
    let mut agent = Agent64::new(1, 1, config, &mut rng(14)).unwrap();
    let mut net = MlpNet::<f64>::new(&[2, 64, 64, 1], &mut rng(15)).unwrap();
    // no dependence on the action input, so sampled next actions do not matter either
    net.layers_mut()[0].weight.row_mut(1).fill(0.0);
    for t in agent.targets_mut() {
        *t = net.clone();
    }
    let s2 = array![[0.3], [-0.7]];
    let (rw, dn) = (array![0.5, 1.0], array![0.0, 0.0]);
    let (y0, stds) = agent.redq_target(s2.view(), rw.view(), dn.view(), &mut rng(0)).unwrap();
    assert!(stds.iter().all(|&s| s == 0.0));
    for seed in 1..20 {
        let (y, _) = agent.redq_target(s2.view(), rw.view(), dn.view(), &mut rng(seed)).unwrap();
        assert_eq!(y, y0);
    }
}

#[test]
fn uncertainty_weights_reduce_to_the_scaled_mean_loss() {
    let rows: Vec<_> = (0..64).map(|i| (i as f32 / 64.0, 0.1, 0.5, 0.2, i % 4 == 0)).collect();
    let buffer = ReplayBuffer::new(dataset(&rows), ReplayConfig::default()).unwrap();
    let batch: Batch<f64> = buffer.sample_uniform(32, &mut rng(16)).unwrap();
    let build = |tau_temp| {
        let mut agent = Agent64::new(1, 1, plain(AgentConfig { tau_temp, ..Default::default() }), &mut rng(17)).unwrap();
        let c0 = agent.critics()[0].clone();
        for c in agent.critics_mut() {
            *c = c0.clone();
        }
        for t in agent.targets_mut() {
            *t = c0.clone();
        }
        agent
    };
    let plain_loss = build(None).critic_update(&batch, &mut rng(18)).unwrap().loss;
    for tau in [0.0, 1.0, 5.0] {
        let weighted = build(Some(tau)).critic_update(&batch, &mut rng(18)).unwrap().loss;
        assert!((weighted * 32.0 - plain_loss).abs() < 1e-12 * plain_loss.abs().max(1.0));
    }
}

#[test]
fn polyak_trace_follows_the_delay() {
    let rows: Vec<_> = (0..64).map(|i| (i as f32 / 64.0, 0.2, 1.0, 0.0, false)).collect();
    let buffer = ReplayBuffer::new(dataset(&rows), ReplayConfig::default()).unwrap();
    let config = plain(AgentConfig {
        critic_lr: 1e-3,
        ..Default::default()
    });
    let tau = config.tau_polyak;
    let mut agent = Agent64::new(1, 1, config, &mut rng(19)).unwrap();
    let mut shadow: Vec<Vec<f64>> = agent.targets().iter().map(|t| t.to_flat()).collect();
    let mut r = rng(20);
    for step in 1..=20u64 {
        let batch: Batch<f64> = buffer.sample_uniform(32, &mut r).unwrap();
        agent.critic_update(&batch, &mut r).unwrap();
        if step % 2 == 0 {
            for (sh, online) in shadow.iter_mut().zip(agent.critics()) {
                for (t, o) in sh.iter_mut().zip(online.to_flat()) {
                    *t = (1.0 - tau) * *t + tau * o;
                }
            }
        }
        for (sh, t) in shadow.iter().zip(agent.targets()) {
            assert_eq!(sh, &t.to_flat(), "step {step}");
        }
    }
    assert_eq!(agent.critic_steps(), 20);
}

/// Linear critics `Q = ws s + wa a + b` and a linear Gaussian head.
fn linear_agent(ws: f64, wa: f64, mean: f64, log_std: f64) -> Agent64 {
    let critic = MlpNet::from_layers(vec![Dense {
        weight: array![[ws], [wa]],
        bias: array![0.25],
    }])
    .unwrap();
    let trunk = MlpNet::from_layers(vec![Dense {
        weight: array![[0.0, 0.0]],
        bias: array![mean, log_std],
    }])
    .unwrap();
    let actor = SquashedGaussianPolicy::from_trunk(trunk, PolicyConfig::default()).unwrap();
    let config = plain(AgentConfig {
        hidden: vec![],
        ..Default::default()
    });
    Agent64::from_parts(config, actor, vec![critic.clone(), critic]).unwrap()
}

#[test]
fn constant_critics_give_zero_advantage() {
    let mut agent = Agent64::new(2, 1, plain(AgentConfig::default()), &mut rng(21)).unwrap();
    for c in agent.critics_mut() {
        *c = constant_net(&[3, 64, 64, 1], 4.0);
    }
    let s = Array2::from_shape_fn((16, 2), |(i, j)| (i * 2 + j) as f64 / 32.0 - 0.5);
    let a = Array2::from_shape_fn((16, 1), |(i, _)| i as f64 / 17.0 - 0.5);
    let adv = agent.q_advantages(s.view(), a.view(), &mut rng(22)).unwrap();
    assert!(adv.iter().all(|&x| x == 0.0));
}

#[test]
fn policy_mean_action_has_near_zero_advantage() {
    let agent = linear_agent(0.7, 2.0, 0.4, -10.0);
    let a = 0.4f64.tanh();
    let adv = agent.q_advantages(array![[0.1]].view(), array![[a]].view(), &mut rng(23)).unwrap();
    assert!(adv[0].abs() < 1e-3, "{}", adv[0]);
}

#[test]
fn linear_critic_advantage_matches_monte_carlo_expectation() {
    let (wa, mean, log_std) = (1.5, 0.3, -0.5f64);
    let agent = linear_agent(0.7, wa, mean, log_std);
    let a = -0.2;
    // E[tanh(u)], u ~ N(mean, exp(log_std)^2), from an independent sampler
    let normal = Normal::new(mean, log_std.exp()).unwrap();
    let mut r = rng(24);
    let n = 1_000_000;
    let e_tanh = (0..n).map(|_| normal.sample(&mut r).tanh()).sum::<f64>() / n as f64;
    let expected = wa * (a - e_tanh);

    let reps = 10_000;
    let s = Array2::from_elem((reps, 1), 0.1);
    let acts = Array2::from_elem((reps, 1), a);
    let adv = agent.q_advantages(s.view(), acts.view(), &mut rng(25)).unwrap();
    let got = adv.iter().sum::<f64>() / reps as f64;
    assert!((got - expected).abs() < 5e-3, "{got} vs {expected}");
}

#[test]
fn perfect_value_fit_gives_zero_monte_carlo_advantage() {
    let mut d = Dataset::new(1, 1, true);
    for i in 0..16 {
        let t = Transition {
            s: vec![i as f32 / 16.0],
            a: vec![0.0],
            r: 1.0,
            s_next: vec![0.0],
            done: false,
        };
        d.push(&t, Tag::Random, Some(3.0)).unwrap();
    }
    let buffer = ReplayBuffer::new(d, ReplayConfig::default()).unwrap();
    let batch: Batch<f64> = buffer.gather((0..16).collect()).unwrap();
    let v = ValueNet::from_net(constant_net(&[1, 64, 64, 1], 3.0), 1e-3).unwrap();
    let adv = mc_advantage(&v, batch.returns_to_go.as_ref().map(|g| g.view()), batch.states.view()).unwrap();
    assert!(adv.iter().all(|&x| x == 0.0));
}
