use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use chrono::NaiveDate;
use sha2::{Digest, Sha256};

use modrl::config::{ConfigTree, OverrideSpec};
use modrl::logging::{load_checkpoint, read_metrics, read_trajectory, Checkpoint, LogError, ManualClock};
use modrl::runtime::{self, RunMode, RunOptions, RunSummary};

fn tree(agent: Option<&str>, pairs: &[(&str, &str)]) -> ConfigTree {
    let mut t = match agent {
        Some(a) => modrl::config::load_config(
            &PathBuf::from(env!("CARGO_MANIFEST_DIR")).join(format!("../../config/{a}/cartpole.json")),
        )
        .unwrap(),
        None => ConfigTree::default_config(),
    };
    for (k, v) in pairs {
        t.apply_override_in_place(&OverrideSpec::parse(k, v).unwrap()).unwrap();
    }
    t
}

fn manual_opts(root: &Path) -> RunOptions {
    let at = NaiveDate::from_ymd_opt(2024, 3, 9).unwrap().and_hms_opt(8, 0, 0).unwrap();
    RunOptions {
        logs_root: root.to_path_buf(),
        clock: Arc::new(ManualClock::new(at)),
        ..RunOptions::default()
    }
}

fn short_run(root: &Path, t: &ConfigTree) -> RunSummary {
    runtime::run(t, RunMode::Single, &manual_opts(root)).unwrap()
}

fn digest_dir(dir: &Path) -> BTreeMap<String, String> {
    let mut out = BTreeMap::new();
    let mut stack = vec![dir.to_path_buf()];
    while let Some(d) = stack.pop() {
        for e in std::fs::read_dir(&d).unwrap() {
            let p = e.unwrap().path();
            if p.is_dir() {
                stack.push(p);
            } else {
                let hash = Sha256::digest(std::fs::read(&p).unwrap());
                let name = p.strip_prefix(dir).unwrap().display().to_string();
                out.insert(name, hash.iter().map(|b| format!("{b:02x}")).collect());
            }
        }
    }
    out
}

const SHORT: [(&str, &str); 5] = [
    ("train.run_step", "1000"),
    ("train.print_period", "100"),
    ("train.save_period", "500"),
    ("train.eval_iteration", "2"),
    ("agent.start_train_step", "200"),
];

#[test]
fn one_score_per_print_period() {
    let dir = tempfile::tempdir().unwrap();
    let s = short_run(dir.path(), &tree(None, &SHORT));
    let scores: Vec<_> = read_metrics(&s.run_dir.eval_metrics_path())
        .unwrap()
        .into_iter()
        .filter(|r| r.name == "score")
        .collect();
    assert_eq!(scores.len(), 10);
    let steps: Vec<u64> = scores.iter().map(|r| r.step).collect();
    assert_eq!(steps, (1..=10).map(|k| k * 100).collect::<Vec<_>>());
    assert_eq!(s.evals.len(), 10);
    let train = read_metrics(&s.run_dir.train_metrics_path()).unwrap();
    assert!(train.windows(2).all(|w| w[0].step <= w[1].step));
    assert!(train.iter().any(|r| r.name == "loss"));
}

#[test]
fn run_directory_is_complete() {
    let dir = tempfile::tempdir().unwrap();
    let s = short_run(dir.path(), &tree(None, &SHORT));
    assert_eq!(s.run_dir.root, dir.path().join("cartpole/dqn/20240309080000"));
    let saved = ConfigTree::parse_str(&std::fs::read_to_string(s.run_dir.config_path()).unwrap(), "saved").unwrap();
    assert_eq!(saved, tree(None, &SHORT));
    assert_eq!(s.checkpoints, vec![s.run_dir.checkpoint_path(500), s.run_dir.checkpoint_path(1000)]);
    for p in &s.checkpoints {
        let c = load_checkpoint(p).unwrap();
        assert_eq!(c.agent, "dqn");
    }
    for step in [500, 1000] {
        let traj = read_trajectory(&s.run_dir.trajectory_path(step)).unwrap();
        assert!(!traj.is_empty());
        assert!(traj.iter().enumerate().all(|(i, r)| r.step == i as u64));
        assert!(traj.iter().all(|r| r.reward == 1.0 && r.observation.len() == 4));
    }
    let second = short_run(dir.path(), &tree(None, &SHORT));
    assert_eq!(second.run_dir.root, dir.path().join("cartpole/dqn/20240309080000-1"));
}

#[test]
fn fixed_seed_runs_write_identical_logs() {
    for agent in [None, Some("ppo"), Some("rainbow")] {
        let (a, b) = (tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap());
        let t = tree(agent, &SHORT);
        let ra = short_run(a.path(), &t);
        let rb = short_run(b.path(), &t);
        assert_eq!(digest_dir(&ra.run_dir.root), digest_dir(&rb.run_dir.root), "{agent:?}");
    }
}

#[test]
fn evaluation_reads_but_never_writes_checkpoints() {
    let dir = tempfile::tempdir().unwrap();
    let trained = short_run(dir.path(), &tree(None, &SHORT));
    let ckpt = trained.checkpoints.last().unwrap().clone();
    let before = digest_dir(dir.path());
    let t = tree(None, &[("train.load_path", ckpt.to_str().unwrap()), ("train.eval_iteration", "3")]);
    let eval = runtime::run(&t, RunMode::Eval, &manual_opts(dir.path())).unwrap();
    assert!(eval.checkpoints.is_empty());
    let after = digest_dir(dir.path());
    for (name, hash) in &before {
        assert_eq!(after.get(name), Some(hash), "{name} changed");
    }
    assert!(std::fs::read_dir(eval.run_dir.checkpoint_dir()).map(|d| d.count()).unwrap_or(0) == 0);
    let scores = read_metrics(&eval.run_dir.eval_metrics_path()).unwrap();
    assert_eq!(scores.len(), 1);
    assert_eq!(scores[0].step, 1000);
}

#[test]
fn damaged_checkpoints_are_refused() {
    let dir = tempfile::tempdir().unwrap();
    let s = short_run(dir.path(), &tree(None, &SHORT));
    let bytes = std::fs::read(&s.checkpoints[0]).unwrap();
    assert!(Checkpoint::from_bytes(&bytes).is_ok());
    assert!(matches!(Checkpoint::from_bytes(&bytes[..bytes.len() - 7]), Err(LogError::Integrity(_))));
    let mut flipped = bytes.clone();
    let mid = flipped.len() / 2;
    flipped[mid] ^= 0x40;
    assert!(matches!(Checkpoint::from_bytes(&flipped), Err(LogError::Integrity(_))));
    let mut other_version = bytes.clone();
    other_version[8] = other_version[8].wrapping_add(1);
    assert!(matches!(Checkpoint::from_bytes(&other_version), Err(LogError::Compatibility(_))));
    let ppo = tree(Some("ppo"), &[("train.load_path", s.checkpoints[0].to_str().unwrap())]);
    assert!(runtime::run(&ppo, RunMode::Eval, &manual_opts(dir.path())).is_err());
}
