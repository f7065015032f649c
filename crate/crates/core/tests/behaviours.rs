//! Actor steps, filters, the advantage classifier, labeling rates and
//! dataset bookkeeping.

use afbc::agents::{
    paired_ttest_approve, AdvantageClassifier, AgentConfig, ClassifierConfig, FilterConfig, FilterKind,
};
use afbc::datasets::{compose, load, save, DatasetManifest, Recipe, Tag, Tier, TierStore};
use afbc::envlab::{make_env, worst_case_label, EnvConfig, EnvId};
use afbc::numkit::{GradTape, MlpNet};
use afbc::policy::{PolicyConfig, SquashedGaussianPolicy};
use afbc::Agent64;
use ndarray::{Array1, Array2};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

#[test]
fn bc_loss_decreases_on_a_fixed_batch() {
    let mut r = rng(1);
    let mut agent = Agent64::new(2, 1, AgentConfig::default(), &mut r).unwrap();
    // reachable deterministic target: a = tanh(0.5 s0 - 0.3 s1)
    let s: Array2<f64> = Array2::from_shape_fn((1000, 2), |_| r.random_range(-1.0..1.0));
    let a = Array2::from_shape_fn((1000, 1), |(i, _)| (0.5 * s[[i, 0]] - 0.3 * s[[i, 1]]).tanh());
    let mut prev = f64::INFINITY;
    for step in 0..100 {
        let loss = agent.bc_update(s.view(), a.view()).unwrap();
        assert!(loss < prev, "step {step}: {loss} >= {prev}");
        prev = loss;
    }
}

#[test]
fn actions_at_the_mean_with_floor_std_have_no_gradient() {
    let mut trunk = MlpNet::<f64>::zeros(&[2, 8, 2]).unwrap();
    trunk.output_layer_mut().bias[0] = 0.4;
    trunk.output_layer_mut().bias[1] = -20.0;
    let policy = SquashedGaussianPolicy::from_trunk(trunk, PolicyConfig::default()).unwrap();
    let s = Array2::from_shape_fn((16, 2), |(i, j)| (i + j) as f64 / 20.0);
    let a = Array2::from_elem((16, 1), 0.4f64.tanh());
    let mut tape = GradTape::for_net(policy.trunk());
    let loss = policy
        .weighted_nll_backward(s.view(), a.view(), Array1::ones(16).view(), &mut tape)
        .unwrap();
    // -log N(u; u, e^-10) + log(1 - tanh(u)^2 + eps)
    let eps = PolicyConfig::default().squash_eps;
    let floor = 0.5 * (2.0 * std::f64::consts::PI).ln() - 10.0 + (1.0 - 0.4f64.tanh().powi(2) + eps).ln();
    assert!((loss - floor).abs() < 1e-9, "{loss} vs {floor}");
    let norm = tape.to_flat().iter().map(|g| g * g).sum::<f64>().sqrt();
    assert!(norm < 1e-6, "{norm}");
}

#[test]
fn exponential_weights_follow_the_closed_form() {
    let f = FilterConfig {
        kind: FilterKind::Exponential,
        beta: 2.0,
        clip_max: 20.0,
        ..Default::default()
    };
    assert!((f.weight(2f64.ln() / 2.0) - 2.0).abs() < 1e-15);
    assert_eq!(f.weight(0.0), 1.0);
    assert_eq!(f.weight(100.0), 20.0);
}

#[test]
fn ttest_separates_shifted_normals() {
    let mut r = rng(3);
    let (hi, lo) = (Normal::new(1.0, 0.1).unwrap(), Normal::new(0.0, 0.1).unwrap());
    for _ in 0..200 {
        let d: Vec<f64> = (0..8).map(|_| hi.sample(&mut r)).collect();
        let p: Vec<f64> = (0..8).map(|_| lo.sample(&mut r)).collect();
        assert!(paired_ttest_approve(&d, &p, 0.05));
        assert!(!paired_ttest_approve(&d, &d, 0.05));
        assert!(paired_ttest_approve(&p, &d, 1.0));
    }
}

fn separable(n: usize, seed: u64) -> (Array2<f64>, Vec<bool>) {
    let mut r = rng(seed);
    let x = Array2::from_shape_fn((n, 2), |_| r.random_range(-1.0..1.0));
    let labels = (0..n).map(|i| x[[i, 0]] + 0.5 * x[[i, 1]] > 0.0).collect();
    (x, labels)
}

#[test]
fn one_flipped_label_does_not_move_approval() {
    let config = ClassifierConfig {
        hidden: vec![16],
        lr: 1e-2,
        ..Default::default()
    };
    let mut clf = AdvantageClassifier::<f64>::new(2, config, &mut rng(4)).unwrap();
    let (x, labels) = separable(256, 5);
    for _ in 0..1500 {
        clf.train(x.view(), &labels).unwrap();
    }
    let before = clf.approve(x.view()).unwrap();
    let agree = before.iter().zip(&labels).filter(|(a, l)| a == l).count();
    assert!(agree as f64 >= 0.99 * labels.len() as f64, "{agree}");

    let target = (0..labels.len()).find(|&i| labels[i] && before[i]).unwrap();
    let mut flipped = labels.clone();
    flipped[target] = false;
    clf.train(x.view(), &flipped).unwrap();
    let after = clf.approve(x.view()).unwrap();
    assert!(after[target]);
}

#[test]
fn random_rollouts_label_a_moderate_share_as_worst_case() {
    let mut env = make_env(EnvId::MountainCar, &EnvConfig::default()).unwrap();
    let mut r = rng(6);
    env.reset(&mut r);
    let (mut hits, n) = (0usize, 100_000);
    for _ in 0..n {
        let a = [r.random_range(-1.0..1.0)];
        if worst_case_label(env.as_ref(), &a).unwrap() {
            hits += 1;
        }
        if env.step(&a).done() {
            env.reset(&mut r);
        }
    }
    let rate = hits as f64 / n as f64;
    assert!((0.05..=0.5).contains(&rate), "{rate}");
}

#[test]
fn manifests_match_reloaded_tallies() {
    let env_config = EnvConfig::default();
    let mut env = make_env(EnvId::Pendulum, &env_config).unwrap();
    let mut source = afbc::datasets::GradedSchedule::new(EnvId::Pendulum, env_config.clone());
    let cc = afbc::datasets::CollectConfig {
        target_per_tier: 1500,
        ..Default::default()
    };
    let store = afbc::datasets::collect_snapshots(env.as_mut(), &mut source, &cc, &mut rng(7)).unwrap();
    let (data, blocks) = store.to_dataset().unwrap();
    let store = TierStore::from_dataset(env.spec(), &data, &blocks).unwrap();

    let dir = tempfile::tempdir().unwrap();
    for (recipe, budget) in [(Recipe::GreatExpert, 3000), (Recipe::Signal { noise_ratio: 8 }, 2000), (Recipe::GreatExpert, 0)] {
        let (d, m) = compose(recipe, &store, budget, 8).unwrap();
        let path = dir.path().join(format!("{}-{budget}.bin", m.recipe));
        save(&d, &m, &path).unwrap();
        let (back, manifest): (_, DatasetManifest) = load(&path).unwrap();
        assert_eq!(back, d);
        assert_eq!(manifest.total, back.len());
        for tier in Tier::ALL {
            let n = back.count_tag(Tag::Tier(tier));
            assert_eq!(manifest.counts.get(tier.as_str()).copied().unwrap_or(0), n, "{tier:?}");
        }
        if budget == 0 {
            assert!(back.is_empty());
            assert!(manifest.counts.values().all(|&c| c == 0));
        }
    }
}
