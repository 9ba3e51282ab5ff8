//! Training loops: single process, synchronous rounds and asynchronous
//! windows, each with an evaluation worker that scores parameter snapshots.
//!
//! Actors, learner and evaluator share no mutable state. Actors send
//! [`TransitionBatchMsg`]s over a bounded channel and block for a
//! [`ParamUpdateMsg`] after each block; the evaluator receives snapshots
//! over its own channel.

mod actor;
mod distributed;
mod manager;
mod single;

pub use actor::Actor;
pub use manager::{evaluate, EvalOutcome};

use std::path::PathBuf;
use std::sync::mpsc::Sender;
use std::sync::Arc;
use std::time::Duration;

use thiserror::Error;

use crate::agents::{build_agent, Agent, AgentError};
use crate::buffers::Transition;
use crate::config::{ConfigError, ConfigTree, Table};
use crate::envs::{build_env, EnvError};
use crate::logging::{
    apply_checkpoint, load_checkpoint, make_run_dir, Checkpoint, LogError, MetricRecord, MetricsWriter, RunDir,
    SharedClock, SystemClock,
};
use crate::nn::Matrix;

#[derive(Debug, Error)]
pub enum RuntimeError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error(transparent)]
    Agent(#[from] AgentError),
    #[error(transparent)]
    Env(#[from] EnvError),
    #[error(transparent)]
    Log(#[from] LogError),
    #[error("actor {actor_id} failed: {message}")]
    Actor { actor_id: usize, message: String },
    #[error("invalid parameter: {0}")]
    Parameter(String),
}

pub type Result<T> = std::result::Result<T, RuntimeError>;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RunMode {
    Single,
    Sync,
    Async,
    Eval,
}

impl RunMode {
    pub const NAMES: [&'static str; 4] = ["single", "sync", "async", "eval"];

    pub fn from_flag(flag: &str) -> Option<Self> {
        match flag {
            "single" => Some(Self::Single),
            "sync" => Some(Self::Sync),
            "async" => Some(Self::Async),
            "eval" => Some(Self::Eval),
            _ => None,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Self::Single => "single",
            Self::Sync => "sync",
            Self::Async => "async",
            Self::Eval => "eval",
        }
    }
}

#[derive(Debug, Clone)]
pub struct TransitionBatchMsg {
    pub actor_id: usize,
    pub transitions: Vec<Transition>,
    /// Steps the actor had taken once this batch was complete.
    pub actor_step: u64,
    pub param_version: u64,
}

#[derive(Debug, Clone)]
pub struct ParamUpdateMsg {
    pub version: u64,
    pub params: Arc<Vec<Matrix>>,
}

/// Settings read from the `train` table.
#[derive(Debug, Clone, PartialEq)]
pub struct TrainSettings {
    pub training: bool,
    pub load_path: Option<PathBuf>,
    pub run_step: u64,
    pub print_period: u64,
    pub save_period: u64,
    pub eval_iteration: usize,
    pub update_period: usize,
    pub num_workers: usize,
    pub seed: u64,
    pub window_ms: f64,
}

impl TrainSettings {
    pub fn from_table(t: &Table) -> Result<Self> {
        let s = Self {
            training: t.bool_or("training", true)?,
            load_path: t.opt_str("load_path")?.map(PathBuf::from),
            run_step: t.u64_or("run_step", 100_000)?,
            print_period: t.u64_or("print_period", 1000)?,
            save_period: t.u64_or("save_period", 10_000)?,
            eval_iteration: t.usize_or("eval_iteration", 10)?,
            update_period: t.usize_or("update_period", 32)?,
            num_workers: t.usize_or("num_workers", 8)?,
            seed: t.u64_or("seed", 0)?,
            window_ms: t.f64_or("window_ms", 100.0)?,
        };
        for (key, v) in [
            ("print_period", s.print_period),
            ("save_period", s.save_period),
            ("eval_iteration", s.eval_iteration as u64),
            ("update_period", s.update_period as u64),
            ("num_workers", s.num_workers as u64),
        ] {
            if v == 0 {
                return Err(RuntimeError::Parameter(format!("train.{key} must be at least 1")));
            }
        }
        Ok(s)
    }
}

/// Slows one actor: after each block it sleeps `factor - 1` times as long
/// as the block took.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Stall {
    pub actor_id: usize,
    pub factor: f64,
}

/// Makes one actor fail once it has taken `after_steps` steps.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct InjectedFailure {
    pub actor_id: usize,
    pub after_steps: u64,
}

/// Harness hooks and host settings that are not part of a config document.
#[derive(Clone)]
pub struct RunOptions {
    pub logs_root: PathBuf,
    pub clock: SharedClock,
    /// Receives every transition in the order the learner consumes it.
    pub tap: Option<Sender<(usize, Transition)>>,
    pub stall: Option<Stall>,
    pub failure: Option<InjectedFailure>,
    pub time_limit: Option<Duration>,
    /// Ends training once an evaluation reaches this score.
    pub stop_score: Option<f64>,
}

impl Default for RunOptions {
    fn default() -> Self {
        Self {
            logs_root: PathBuf::from("logs"),
            clock: Arc::new(SystemClock::new()),
            tap: None,
            stall: None,
            failure: None,
            time_limit: None,
            stop_score: None,
        }
    }
}

impl std::fmt::Debug for RunOptions {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("RunOptions")
            .field("logs_root", &self.logs_root)
            .field("tap", &self.tap.is_some())
            .field("stall", &self.stall)
            .field("failure", &self.failure)
            .field("time_limit", &self.time_limit)
            .field("stop_score", &self.stop_score)
            .finish()
    }
}

/// One consumed actor batch, as seen by the learner.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ConsumedBatch {
    pub actor_id: usize,
    pub len: usize,
    pub actor_step: u64,
    pub param_version: u64,
    pub learner_version: u64,
}

#[derive(Debug, Clone)]
pub struct RunSummary {
    pub mode: RunMode,
    pub run_dir: RunDir,
    /// Transitions consumed by the learner.
    pub steps: u64,
    pub learner_updates: u64,
    /// Transitions consumed per round (sync) or window (async).
    pub rounds: Vec<usize>,
    pub consumed: Vec<ConsumedBatch>,
    /// `(step, mean score)` for every evaluation that completed.
    pub evals: Vec<(u64, f64)>,
    pub checkpoints: Vec<PathBuf>,
    pub final_version: u64,
    /// Actor threads the run used.
    pub workers: usize,
}

impl RunSummary {
    pub fn best_score(&self) -> Option<f64> {
        self.evals.iter().map(|e| e.1).reduce(f64::max)
    }
}

/// Runs `tree` in `mode`. A `train.training = false` document is evaluated
/// whatever the mode.
pub fn run(tree: &ConfigTree, mode: RunMode, opts: &RunOptions) -> Result<RunSummary> {
    let settings = TrainSettings::from_table(&tree.train)?;
    if mode == RunMode::Eval || !settings.training {
        return single::run_eval(tree, &settings, opts);
    }
    match mode {
        RunMode::Single => single::run_single(tree, &settings, opts),
        RunMode::Sync => distributed::run_sync(tree, &settings, opts),
        RunMode::Async => distributed::run_async(tree, &settings, opts),
        RunMode::Eval => unreachable!("handled above"),
    }
}

/// What every mode sets up before the first step.
struct Session {
    agent: Box<dyn Agent>,
    run_dir: RunDir,
    train_log: MetricsWriter,
    clock: SharedClock,
}

impl Session {
    fn open(tree: &ConfigTree, settings: &TrainSettings, opts: &RunOptions) -> Result<Self> {
        let probe = build_env(&tree.env)?;
        let env_spec = probe.spec().clone();
        let mut agent = build_agent(tree, &env_spec, settings.seed)?;
        if let Some(path) = &settings.load_path {
            let ckpt = load_checkpoint(path)?;
            apply_checkpoint(agent.as_mut(), &ckpt)?;
        }
        let run_dir = make_run_dir(&opts.logs_root, &env_spec.name, agent.name(), opts.clock.as_ref(), tree)?;
        let train_log = MetricsWriter::open(&run_dir.train_metrics_path())?;
        Ok(Self {
            agent,
            run_dir,
            train_log,
            clock: opts.clock.clone(),
        })
    }

    fn checkpoint(&self, step: u64) -> Result<PathBuf> {
        let path = self.run_dir.checkpoint_path(step);
        let ckpt = Checkpoint::capture(self.agent.as_ref(), step, self.clock.elapsed());
        crate::logging::save_checkpoint(&path, &ckpt)?;
        Ok(path)
    }

    fn log_train(&mut self, step: u64, losses: &mut Vec<f64>) -> Result<()> {
        let wall_time = self.clock.elapsed();
        if !losses.is_empty() {
            let mean = losses.iter().sum::<f64>() / losses.len() as f64;
            self.train_log.append(&MetricRecord {
                step,
                name: "loss".into(),
                value: mean,
                wall_time,
            })?;
            losses.clear();
        }
        self.train_log.append(&MetricRecord {
            step,
            name: "updates".into(),
            value: self.agent.learn_count() as f64,
            wall_time,
        })?;
        Ok(())
    }
}
