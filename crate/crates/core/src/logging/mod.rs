//! Run directories, line-delimited metrics, checkpoints and evaluation
//! trajectory records.
//!
//! A run writes into `logs/<env>/<agent>/<YYYYMMDDhhmmss>/`:
//!
//! ```text
//! config.json        the resolved configuration
//! train.jsonl        learner metrics
//! eval.jsonl         evaluation scores
//! checkpoints/       step_<N>.ckpt
//! trajectories/      step_<N>.jsonl, one evaluation episode each
//! ```

mod checkpoint;
mod metrics;
mod trajectory;

pub use checkpoint::{apply_checkpoint, load_checkpoint, save_checkpoint, Checkpoint, CHECKPOINT_VERSION};
pub use metrics::{read_metrics, MetricRecord, MetricsWriter};
pub use trajectory::{read_trajectory, TrajectoryRecord, TrajectoryWriter};

use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::Arc;
use std::time::Instant;

use chrono::{Local, NaiveDateTime};
use thiserror::Error;

use crate::config::ConfigTree;

#[derive(Debug, Error)]
pub enum LogError {
    #[error("{path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("{0}")]
    Format(String),
    #[error("incompatible checkpoint: {0}")]
    Compatibility(String),
    #[error("corrupt checkpoint: {0}")]
    Integrity(String),
}

pub(crate) fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> LogError + '_ {
    move |source| LogError::Io {
        path: path.display().to_string(),
        source,
    }
}

/// Source of run timestamps and elapsed wall time.
pub trait Clock: Send + Sync {
    /// Local time used to name the run directory.
    fn timestamp(&self) -> NaiveDateTime;
    /// Seconds since the run started.
    fn elapsed(&self) -> f64;
}

#[derive(Debug)]
pub struct SystemClock {
    start: Instant,
}

impl SystemClock {
    pub fn new() -> Self {
        Self { start: Instant::now() }
    }
}

impl Default for SystemClock {
    fn default() -> Self {
        Self::new()
    }
}

impl Clock for SystemClock {
    fn timestamp(&self) -> NaiveDateTime {
        Local::now().naive_local()
    }

    fn elapsed(&self) -> f64 {
        self.start.elapsed().as_secs_f64()
    }
}

/// A clock that stands still unless advanced by hand.
#[derive(Debug)]
pub struct ManualClock {
    at: NaiveDateTime,
    elapsed_micros: AtomicU64,
}

impl ManualClock {
    pub fn new(at: NaiveDateTime) -> Self {
        Self {
            at,
            elapsed_micros: AtomicU64::new(0),
        }
    }

    pub fn advance(&self, secs: f64) {
        self.elapsed_micros.fetch_add((secs * 1e6) as u64, Ordering::SeqCst);
    }
}

impl Clock for ManualClock {
    fn timestamp(&self) -> NaiveDateTime {
        self.at
    }

    fn elapsed(&self) -> f64 {
        self.elapsed_micros.load(Ordering::SeqCst) as f64 / 1e6
    }
}

pub type SharedClock = Arc<dyn Clock>;

pub const TIMESTAMP_FORMAT: &str = "%Y%m%d%H%M%S";

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RunDir {
    pub root: PathBuf,
}

impl RunDir {
    pub fn config_path(&self) -> PathBuf {
        self.root.join("config.json")
    }

    pub fn train_metrics_path(&self) -> PathBuf {
        self.root.join("train.jsonl")
    }

    pub fn eval_metrics_path(&self) -> PathBuf {
        self.root.join("eval.jsonl")
    }

    pub fn checkpoint_dir(&self) -> PathBuf {
        self.root.join("checkpoints")
    }

    pub fn checkpoint_path(&self, step: u64) -> PathBuf {
        self.checkpoint_dir().join(format!("step_{step}.ckpt"))
    }

    pub fn trajectory_dir(&self) -> PathBuf {
        self.root.join("trajectories")
    }

    pub fn trajectory_path(&self, step: u64) -> PathBuf {
        self.trajectory_dir().join(format!("step_{step}.jsonl"))
    }
}

/// Creates `<logs_root>/<env>/<agent>/<timestamp>[-k]/` and writes the
/// config copy into it.
pub fn make_run_dir(logs_root: &Path, env: &str, agent: &str, clock: &dyn Clock, config: &ConfigTree) -> Result<RunDir, LogError> {
    let parent = logs_root.join(env).join(agent);
    std::fs::create_dir_all(&parent).map_err(io_err(&parent))?;
    let stamp = clock.timestamp().format(TIMESTAMP_FORMAT).to_string();
    let mut k = 0;
    let root = loop {
        let name = if k == 0 { stamp.clone() } else { format!("{stamp}-{k}") };
        let candidate = parent.join(name);
        match std::fs::create_dir(&candidate) {
            Ok(()) => break candidate,
            Err(e) if e.kind() == std::io::ErrorKind::AlreadyExists => k += 1,
            Err(e) => return Err(io_err(&candidate)(e)),
        }
    };
    let run = RunDir { root };
    for dir in [run.checkpoint_dir(), run.trajectory_dir()] {
        std::fs::create_dir_all(&dir).map_err(io_err(&dir))?;
    }
    let cfg_path = run.config_path();
    std::fs::write(&cfg_path, config.to_json_string()).map_err(io_err(&cfg_path))?;
    Ok(run)
}
