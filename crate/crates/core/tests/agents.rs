use std::path::PathBuf;

use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use modrl::agents::targets::{discounted_returns, dqn_target, gae};
use modrl::agents::{agent_names, build_agent, Agent, BuildContext, EpsilonSchedule, ValueAgent, ValueAgentConfig};
use modrl::buffers::Transition;
use modrl::config::{load_config, ConfigTree, OverrideSpec};
use modrl::envs::{build_env, EnvSpec};
use modrl::runtime::Actor;

fn shipped(agent: &str) -> ConfigTree {
    let env = if agent == "ddpg" { "pendulum" } else { "cartpole" };
    let path = PathBuf::from(env!("CARGO_MANIFEST_DIR")).join(format!("../../config/{agent}/{env}.json"));
    load_config(&path).unwrap()
}

fn set(tree: &mut ConfigTree, key: &str, value: &str) {
    tree.apply_override_in_place(&OverrideSpec::parse(key, value).unwrap()).unwrap();
}

fn env_spec(tree: &ConfigTree) -> EnvSpec {
    build_env(&tree.env).unwrap().spec().clone()
}

/// Transitions from the agent's own policy.
fn rollout(tree: &ConfigTree, agent: &dyn Agent, n: usize, seed: u64) -> Vec<Transition> {
    let mut actor = Actor::new(0, build_env(&tree.env).unwrap(), agent.policy(), seed, 1);
    (0..n).map(|_| actor.step().unwrap()).collect()
}

#[test]
fn repeated_updates_on_a_frozen_batch_reduce_the_loss() {
    for name in agent_names() {
        let tree = shipped(name);
        let mut agent = build_agent(&tree, &env_spec(&tree), 3).unwrap();
        let batch = rollout(&tree, agent.as_ref(), 64, 3);
        let first = agent.learn_batch(&batch).unwrap().loss;
        let mut last = first;
        for _ in 0..100 {
            last = agent.learn_batch(&batch).unwrap().loss;
            assert!(last.is_finite(), "{name}: non-finite loss");
        }
        assert!(last < first, "{name}: loss went from {first} to {last}");
    }
}

#[test]
fn greedy_actions_are_deterministic() {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    for name in agent_names() {
        let tree = shipped(name);
        let spec = env_spec(&tree);
        let mut agent = build_agent(&tree, &spec, 5).unwrap();
        for step in 0..50 {
            let s: Vec<f64> = (0..spec.obs_dim).map(|_| rng.random_range(-1.0..1.0)).collect();
            let a = agent.act(&s, step, false).unwrap();
            let b = agent.act(&s, step * 7 + 1, false).unwrap();
            assert_eq!(a.action, b.action, "{name}");
        }
    }
}

#[test]
fn same_seed_same_agent() {
    for name in agent_names() {
        let tree = shipped(name);
        let spec = env_spec(&tree);
        let a = build_agent(&tree, &spec, 9).unwrap();
        let b = build_agent(&tree, &spec, 9).unwrap();
        let c = build_agent(&tree, &spec, 10).unwrap();
        assert_eq!(a.state_tensors(), b.state_tensors(), "{name}");
        assert_ne!(a.state_tensors(), c.state_tensors(), "{name}");
    }
}

#[test]
fn target_network_only_moves_at_sync() {
    let mut tree = shipped("dqn");
    set(&mut tree, "agent.start_train_step", "64");
    set(&mut tree, "agent.batch_size", "16");
    set(&mut tree, "agent.target_update_period", "100");
    let spec = env_spec(&tree);
    let ctx = BuildContext {
        env: spec,
        run_step: 10_000,
        seed: 1,
    };
    let cfg = ValueAgentConfig::from_table(&tree.agent, &ctx).unwrap();
    let mut agent = ValueAgent::new("dqn", cfg, &tree.optim, &ctx).unwrap();
    let snapshot = |a: &ValueAgent| -> Vec<Vec<f64>> { a.target().params().iter().map(|p| p.value.data().to_vec()).collect() };
    let online = |a: &ValueAgent| -> Vec<Vec<f64>> { a.online().params().iter().map(|p| p.value.data().to_vec()).collect() };
    let data = rollout(&tree, &agent, 250, 1);
    let initial = snapshot(&agent);
    for (i, t) in data.into_iter().enumerate() {
        agent.process(0, vec![t]).unwrap();
        let steps = i + 1;
        if steps < 100 {
            assert_eq!(snapshot(&agent), initial, "target moved at step {steps}");
        }
        if steps % 100 == 0 {
            assert_eq!(snapshot(&agent), online(&agent), "target not synced at step {steps}");
        }
    }
    assert!(agent.learn_count() > 0);
    assert_ne!(snapshot(&agent), online(&agent));
}

proptest! {
    #[test]
    fn epsilon_decays_monotonically_to_its_floor(
        init in 0.0f64..=1.0,
        frac in 0.0f64..=1.0,
        ratio in 0.01f64..=1.0,
        run_step in 1usize..200_000,
    ) {
        let min = init * frac;
        let s = EpsilonSchedule::new(init, min, ratio, run_step).unwrap();
        prop_assert_eq!(s.epsilon(0), init);
        let h = s.horizon().ceil() as usize;
        prop_assert_eq!(s.epsilon(h), min);
        prop_assert_eq!(s.epsilon(h + 12345), min);
        let mut prev = s.epsilon(0);
        for k in 1..=50 {
            let e = s.epsilon(h * k / 50);
            prop_assert!(e <= prev + 1e-15);
            prop_assert!(e >= min - 1e-15 && e <= init + 1e-15);
            prev = e;
        }
    }

    #[test]
    fn gae_with_unit_discounts_and_zero_values_is_reward_to_go(
        rewards in prop::collection::vec(-3.0f64..3.0, 1..40),
        ends in prop::collection::vec(prop::bool::weighted(0.15), 40),
    ) {
        let n = rewards.len();
        let dones = &ends[..n];
        let (adv, ret) = gae(&rewards, &vec![0.0; n + 1], dones, 1.0, 1.0).unwrap();
        for t in 0..n {
            let mut expect = 0.0;
            for k in t..n {
                expect += rewards[k];
                if dones[k] {
                    break;
                }
            }
            prop_assert!((adv[t] - expect).abs() < 1e-9);
            prop_assert!((ret[t] - expect).abs() < 1e-9);
        }
    }

    #[test]
    fn discounted_returns_satisfy_the_bellman_recursion(
        rewards in prop::collection::vec(-3.0f64..3.0, 1..40),
        gamma in 0.0f64..=1.0,
    ) {
        let g = discounted_returns(&rewards, gamma);
        let n = rewards.len();
        prop_assert!((g[n - 1] - rewards[n - 1]).abs() < 1e-12);
        for t in 0..n - 1 {
            prop_assert!((g[t] - (rewards[t] + gamma * g[t + 1])).abs() < 1e-9);
        }
    }

    #[test]
    fn terminal_targets_do_not_bootstrap(r in -5.0f64..5.0, q in prop::collection::vec(-100.0f64..100.0, 2..5), n in 1usize..5) {
        prop_assert_eq!(dqn_target(r, true, 0.99, n, &q), r);
        let max = q.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        prop_assert!((dqn_target(r, false, 0.99, n, &q) - (r + 0.99f64.powi(n as i32) * max)).abs() < 1e-9);
    }
}

#[test]
fn stripped_rainbow_learns_like_double_dqn() {
    let mut rainbow_tree = shipped("rainbow");
    for (k, v) in [("agent.network", "noisy_dueling"), ("agent.n_step", "1"), ("agent.alpha", "0.0"), ("agent.sigma_init", "0.0")] {
        set(&mut rainbow_tree, k, v);
    }
    let mut double_tree = shipped("double");
    set(&mut double_tree, "agent.network", "dueling");
    let ctx = BuildContext {
        env: env_spec(&rainbow_tree),
        run_step: 10_000,
        seed: 4,
    };
    let build = |tree: &ConfigTree, name: &str| {
        let cfg = ValueAgentConfig::from_table(&tree.agent, &ctx).unwrap();
        ValueAgent::new(name, cfg, &tree.optim, &ctx).unwrap()
    };
    let mut rainbow = build(&rainbow_tree, "rainbow");
    let mut double = build(&double_tree, "double");
    let mut net = rainbow.online().clone();
    net.freeze_noise();
    double.set_networks(net.without_noise()).unwrap();
    rainbow.set_networks(net).unwrap();

    let batch = rollout(&double_tree, &double, 64, 9);
    let weights = vec![1.0; batch.len()];
    for step in 0..50 {
        let (a, td_a) = rainbow.learn_on_batch(&batch, &weights).unwrap();
        let (b, td_b) = double.learn_on_batch(&batch, &weights).unwrap();
        assert!((a.loss - b.loss).abs() < 1e-9, "step {step}: {} vs {}", a.loss, b.loss);
        assert!(td_a.iter().zip(&td_b).all(|(x, y)| (x - y).abs() < 1e-9));
        if step % 10 == 9 {
            rainbow.sync_target();
            double.sync_target();
        }
    }
}
