use std::sync::atomic::{AtomicBool, Ordering};
use std::sync::mpsc::{channel, Sender};
use std::sync::Arc;
use std::thread::JoinHandle;

use rand::RngCore;

use super::Result;
use crate::agents::{derive_rng, Policy};
use crate::envs::Env;
use crate::logging::{LogError, MetricRecord, MetricsWriter, RunDir, SharedClock, TrajectoryRecord, TrajectoryWriter};
use crate::nn::Matrix;

const EVAL_STREAM: u64 = 1 << 40;

#[derive(Debug, Clone, PartialEq)]
pub struct EvalOutcome {
    pub mean: f64,
    pub returns: Vec<f64>,
}

/// Plays `episodes` greedy episodes. Reset seeds and any acting randomness
/// come from `(seed, step)`, so a snapshot always scores the same. The first
/// episode is recorded when a writer is given.
pub fn evaluate(
    policy: &mut dyn Policy,
    env: &mut dyn Env,
    episodes: usize,
    seed: u64,
    step: u64,
    mut trajectory: Option<&mut TrajectoryWriter>,
) -> Result<EvalOutcome> {
    let mut rng = derive_rng(seed, EVAL_STREAM + step);
    let mut returns = Vec::with_capacity(episodes);
    for ep in 0..episodes {
        let reset_seed = rng.next_u64();
        let mut obs = env.reset(reset_seed);
        let mut total = 0.0;
        for t in 0u64.. {
            let out = policy.act(&obs, step as usize, false, &mut rng)?;
            let r = env.step(&out.action)?;
            total += r.reward;
            if ep == 0 {
                if let Some(w) = trajectory.as_deref_mut() {
                    w.record(&TrajectoryRecord {
                        step: t,
                        seed: reset_seed,
                        observation: obs,
                        action: out.action,
                        reward: r.reward,
                    })?;
                }
            }
            obs = r.observation;
            if r.done || r.truncated {
                break;
            }
        }
        returns.push(total);
    }
    let mean = returns.iter().sum::<f64>() / returns.len().max(1) as f64;
    Ok(EvalOutcome { mean, returns })
}

pub(crate) struct EvalRequest {
    pub step: u64,
    pub params: Arc<Vec<Matrix>>,
    pub record_trajectory: bool,
}

/// The evaluation worker. Failures are logged and skipped.
pub(crate) struct Manager {
    tx: Option<Sender<EvalRequest>>,
    handle: Option<JoinHandle<Vec<(u64, f64)>>>,
    pub stop: Arc<AtomicBool>,
}

pub(crate) struct ManagerSetup {
    pub policy: Box<dyn Policy>,
    pub env: Box<dyn Env>,
    pub episodes: usize,
    pub seed: u64,
    pub run_dir: RunDir,
    pub clock: SharedClock,
    pub stop_score: Option<f64>,
}

impl Manager {
    pub fn spawn(setup: ManagerSetup) -> std::result::Result<Self, LogError> {
        let mut log = MetricsWriter::open(&setup.run_dir.eval_metrics_path())?;
        let (tx, rx) = channel::<EvalRequest>();
        let stop = Arc::new(AtomicBool::new(false));
        let stop_flag = stop.clone();
        let handle = std::thread::Builder::new()
            .name("manager".into())
            .spawn(move || {
                let ManagerSetup {
                    mut policy,
                    mut env,
                    episodes,
                    seed,
                    run_dir,
                    clock,
                    stop_score,
                } = setup;
                let mut scores = Vec::new();
                for req in rx {
                    match eval_once(policy.as_mut(), env.as_mut(), episodes, seed, &req, &run_dir) {
                        Ok(score) => {
                            log::info!("step {:>8}  score {:.2}", req.step, score);
                            let rec = MetricRecord {
                                step: req.step,
                                name: "score".into(),
                                value: score,
                                wall_time: clock.elapsed(),
                            };
                            if let Err(e) = log.append(&rec) {
                                log::warn!("could not record score at step {}: {e}", req.step);
                            }
                            scores.push((req.step, score));
                            if stop_score.is_some_and(|s| score >= s) {
                                stop_flag.store(true, Ordering::SeqCst);
                            }
                        }
                        Err(e) => log::warn!("evaluation at step {} failed: {e}", req.step),
                    }
                }
                scores
            })
            .expect("spawn manager thread");
        Ok(Self {
            tx: Some(tx),
            handle: Some(handle),
            stop,
        })
    }

    pub fn request(&self, step: u64, params: Vec<Matrix>, record_trajectory: bool) {
        if let Some(tx) = &self.tx {
            let _ = tx.send(EvalRequest {
                step,
                params: Arc::new(params),
                record_trajectory,
            });
        }
    }

    pub fn should_stop(&self) -> bool {
        self.stop.load(Ordering::SeqCst)
    }

    /// Waits for queued evaluations and returns every recorded score.
    pub fn finish(mut self) -> Vec<(u64, f64)> {
        self.tx.take();
        self.handle.take().map(|h| h.join().unwrap_or_default()).unwrap_or_default()
    }
}

fn eval_once(
    policy: &mut dyn Policy,
    env: &mut dyn Env,
    episodes: usize,
    seed: u64,
    req: &EvalRequest,
    run_dir: &RunDir,
) -> Result<f64> {
    policy.set_params(&req.params)?;
    let outcome = if req.record_trajectory {
        let mut w = TrajectoryWriter::create(&run_dir.trajectory_path(req.step))?;
        let o = evaluate(policy, env, episodes, seed, req.step, Some(&mut w))?;
        w.finish()?;
        o
    } else {
        evaluate(policy, env, episodes, seed, req.step, None)?
    };
    Ok(outcome.mean)
}
