use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use statrs::distribution::{ChiSquared, ContinuousCDF};

use modrl::buffers::{Action, MultistepQueue, PerBuffer, PerConfig, ReplayBuffer, RolloutBuffer, SumTree, Transition};

fn t(i: usize, reward: f64, done: bool) -> Transition {
    Transition::new(vec![i as f64], Action::Discrete(i % 3), reward, vec![i as f64 + 1.0], done)
}

#[derive(Debug, Clone)]
enum TreeOp {
    Update(usize, f64),
    Find(f64),
}

fn tree_ops(cap: usize) -> impl Strategy<Value = Vec<TreeOp>> {
    prop::collection::vec(
        prop_oneof![
            3 => (0..cap, 0.0f64..100.0).prop_map(|(i, p)| TreeOp::Update(i, p)),
            1 => (0.0f64..1.0).prop_map(TreeOp::Find),
        ],
        1..200,
    )
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn sum_tree_parents_equal_child_sums(cap in 1usize..70, ops in tree_ops(64)) {
        let mut tree = SumTree::new(cap);
        let mut shadow = vec![0.0; tree.capacity()];
        for op in ops {
            match op {
                TreeOp::Update(i, p) => {
                    let i = i % tree.capacity();
                    tree.update(i, p).unwrap();
                    shadow[i] = p;
                }
                TreeOp::Find(u) => {
                    let total = tree.total();
                    if total > 0.0 {
                        let leaf = tree.find(u * total);
                        prop_assert!(shadow[leaf] > 0.0, "found an empty leaf");
                        let before: f64 = shadow[..leaf].iter().sum();
                        prop_assert!(before <= u * total + 1e-9 * total);
                        prop_assert!(u * total <= before + shadow[leaf] + 1e-9 * total);
                    }
                }
            }
            prop_assert!(tree.max_invariant_error() < 1e-9);
        }
        let total: f64 = shadow.iter().sum();
        prop_assert!((tree.total() - total).abs() <= 1e-9 * total.max(1.0));
    }

    #[test]
    fn per_without_prioritization_is_uniform(
        tds in prop::collection::vec(0.0f64..50.0, 8..40),
        seed in any::<u64>(),
        step in 0usize..1000,
    ) {
        let cfg = PerConfig { alpha: 0.0, beta_start: 1.0, ..PerConfig::default() };
        let n = tds.len();
        let mut per = PerBuffer::new(n, cfg).unwrap();
        for i in 0..n {
            per.push(t(i, 0.0, false));
        }
        per.update_priorities(&(0..n).collect::<Vec<_>>(), &tds).unwrap();
        for i in 0..n {
            prop_assert_eq!(per.tree().get(i), 1.0);
        }
        let s = per.sample(8, step, &mut ChaCha8Rng::seed_from_u64(seed)).unwrap();
        prop_assert!(s.weights.iter().all(|w| *w == 1.0));
    }

    #[test]
    fn per_weights_are_normalized_and_priorities_positive(
        tds in prop::collection::vec(-10.0f64..10.0, 4..40),
        seed in any::<u64>(),
        step in 0usize..200_000,
    ) {
        let n = tds.len();
        let mut per = PerBuffer::new(n, PerConfig::default()).unwrap();
        for i in 0..n {
            per.push(t(i, 0.0, false));
        }
        per.update_priorities(&(0..n).collect::<Vec<_>>(), &tds).unwrap();
        for i in 0..n {
            prop_assert!(per.tree().get(i) > 0.0);
        }
        let s = per.sample(4, step, &mut ChaCha8Rng::seed_from_u64(seed)).unwrap();
        let max = s.weights.iter().cloned().fold(0.0, f64::max);
        prop_assert!((max - 1.0).abs() < 1e-12);
        prop_assert!(s.weights.iter().all(|w| *w > 0.0 && *w <= 1.0));
        prop_assert!(s.indices.iter().all(|&i| i < n));
    }

    #[test]
    fn multistep_returns_are_discounted_window_sums(
        rewards in prop::collection::vec(-5.0f64..5.0, 1..60),
        ends in prop::collection::vec(prop::bool::weighted(0.1), 60),
        n in 1usize..6,
        gamma in 0.5f64..1.0,
    ) {
        let len = rewards.len();
        let done: Vec<bool> = (0..len).map(|i| ends[i] || i + 1 == len).collect();
        let mut q = MultistepQueue::new(n, gamma).unwrap();
        let mut out = Vec::new();
        for i in 0..len {
            out.extend(q.push(t(i, rewards[i], done[i])));
        }
        prop_assert_eq!(q.pending(), 0);
        prop_assert_eq!(out.len(), len, "every raw step starts exactly one aggregate");
        let mut starts: Vec<usize> = out.iter().map(|a| a.state[0] as usize).collect();
        starts.sort();
        prop_assert_eq!(starts, (0..len).collect::<Vec<_>>());
        for a in &out {
            let i = a.state[0] as usize;
            let mut expect = 0.0;
            let mut k = 0;
            loop {
                expect += gamma.powi(k as i32) * rewards[i + k];
                k += 1;
                if done[i + k - 1] || k == n {
                    break;
                }
            }
            prop_assert_eq!(a.span, k);
            prop_assert!((a.reward - expect).abs() < 1e-9);
            prop_assert_eq!(a.next_state[0] as usize, i + k);
            prop_assert_eq!(a.done, done[i + k - 1]);
        }
    }

    #[test]
    fn multistep_conserves_undiscounted_rewards(
        rewards in prop::collection::vec(-5.0f64..5.0, 1..60),
        n in 1usize..6,
        truncate in any::<bool>(),
    ) {
        let len = rewards.len();
        let mut q = MultistepQueue::new(n, 1.0).unwrap();
        let mut out = Vec::new();
        for i in 0..len {
            let last = i + 1 == len;
            let step = if last && truncate { t(i, rewards[i], false).with_truncated(true) } else { t(i, rewards[i], last) };
            out.extend(q.push(step));
        }
        // Windows start at every step; chaining them from the first step
        // covers each raw reward exactly once.
        let by_start: std::collections::HashMap<usize, &Transition> = out.iter().map(|a| (a.state[0] as usize, a)).collect();
        let (mut at, mut total) = (0, 0.0);
        while at < len {
            let a = by_start[&at];
            total += a.reward;
            at += a.span;
        }
        prop_assert_eq!(at, len);
        let raw: f64 = rewards.iter().sum();
        prop_assert!((total - raw).abs() < 1e-9, "{total} vs {raw}");
    }

    #[test]
    fn replay_keeps_the_most_recent_capacity_items(cap in 1usize..50, pushes in 0usize..200) {
        let mut buf = ReplayBuffer::new(cap).unwrap();
        for i in 0..pushes {
            buf.push(t(i, 0.0, false));
        }
        prop_assert_eq!(buf.len(), pushes.min(cap));
        let mut held: Vec<usize> = buf.iter().map(|x| x.state[0] as usize).collect();
        held.sort();
        let expect: Vec<usize> = (pushes.saturating_sub(cap)..pushes).collect();
        prop_assert_eq!(held, expect);
    }

    #[test]
    fn replay_samples_stay_in_range(cap in 1usize..50, pushes in 1usize..100, batch in 1usize..10, seed in any::<u64>()) {
        let mut buf = ReplayBuffer::new(cap).unwrap();
        for i in 0..pushes {
            buf.push(t(i, 0.0, false));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        match buf.sample_indices(batch, &mut rng) {
            Ok(ix) => {
                prop_assert_eq!(ix.len(), batch);
                prop_assert!(ix.iter().all(|&i| i < buf.len()));
            }
            Err(_) => prop_assert!(buf.len() < batch),
        }
    }
}

#[test]
fn per_without_prioritization_samples_uniformly() {
    let n = 24;
    let cfg = PerConfig { alpha: 0.0, beta_start: 1.0, ..PerConfig::default() };
    let mut per = PerBuffer::new(n, cfg).unwrap();
    for i in 0..n {
        per.push(t(i, 0.0, false));
    }
    let tds: Vec<f64> = (0..n).map(|i| (i * i) as f64).collect();
    per.update_priorities(&(0..n).collect::<Vec<_>>(), &tds).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(21);
    let draws = 48_000;
    let mut counts = vec![0u64; n];
    for _ in 0..draws {
        counts[per.sample(1, 0, &mut rng).unwrap().indices[0]] += 1;
    }
    let expected = draws as f64 / n as f64;
    let chi2: f64 = counts.iter().map(|&c| (c as f64 - expected).powi(2) / expected).sum();
    let p = 1.0 - ChiSquared::new((n - 1) as f64).unwrap().cdf(chi2);
    assert!(p > 0.01, "chi2 {chi2}, p {p}");
}

#[test]
fn rollout_drain_returns_insertion_order() {
    let mut r = RolloutBuffer::new();
    for i in 0..10 {
        r.collect(t(i, i as f64, false), -(i as f64), 0.5);
    }
    let out = r.drain();
    assert!(r.is_empty());
    assert_eq!(out.iter().map(|e| e.transition.state[0] as usize).collect::<Vec<_>>(), (0..10).collect::<Vec<_>>());
}

#[test]
fn truncation_flushes_the_multistep_window_without_done() {
    let mut q = MultistepQueue::new(3, 0.9).unwrap();
    assert!(q.push(t(0, 1.0, false)).is_empty());
    let out = q.push(t(1, 1.0, false).with_truncated(true));
    assert_eq!(out.len(), 2);
    assert!(out.iter().all(|a| a.truncated && !a.done));
    assert!((out[0].reward - 1.9).abs() < 1e-12);
}
