use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use serde_json::{json, Value as Json};

use super::{io_err, LogError};
use crate::buffers::Action;

/// One environment step of an evaluation episode: the observation the action
/// was chosen from, the action, and the reward it earned. `seed` is the reset
/// seed, so the episode can be replayed.
#[derive(Debug, Clone, PartialEq)]
pub struct TrajectoryRecord {
    pub step: u64,
    pub seed: u64,
    pub observation: Vec<f64>,
    pub action: Action,
    pub reward: f64,
}

impl TrajectoryRecord {
    fn to_json(&self) -> Json {
        let action = match &self.action {
            Action::Discrete(a) => json!(a),
            Action::Continuous(v) => json!(v),
        };
        json!({
            "step": self.step,
            "seed": self.seed,
            "observation": self.observation,
            "action": action,
            "reward": self.reward,
        })
    }

    fn from_json(v: &Json) -> Option<Self> {
        let floats = |x: &Json| -> Option<Vec<f64>> { x.as_array()?.iter().map(|e| e.as_f64()).collect() };
        let action = match v.get("action")? {
            Json::Array(_) => Action::Continuous(floats(v.get("action")?)?),
            a => Action::Discrete(a.as_u64()? as usize),
        };
        Some(Self {
            step: v.get("step")?.as_u64()?,
            seed: v.get("seed")?.as_u64()?,
            observation: floats(v.get("observation")?)?,
            action,
            reward: v.get("reward")?.as_f64()?,
        })
    }
}

#[derive(Debug)]
pub struct TrajectoryWriter {
    path: PathBuf,
    out: BufWriter<File>,
}

impl TrajectoryWriter {
    pub fn create(path: &Path) -> Result<Self, LogError> {
        let file = File::create(path).map_err(io_err(path))?;
        Ok(Self {
            path: path.to_path_buf(),
            out: BufWriter::new(file),
        })
    }

    pub fn record(&mut self, rec: &TrajectoryRecord) -> Result<(), LogError> {
        let line = rec.to_json().to_string();
        writeln!(self.out, "{line}").map_err(io_err(&self.path))
    }

    pub fn finish(mut self) -> Result<(), LogError> {
        self.out.flush().map_err(io_err(&self.path))
    }
}

pub fn read_trajectory(path: &Path) -> Result<Vec<TrajectoryRecord>, LogError> {
    let text = std::fs::read_to_string(path).map_err(io_err(path))?;
    text.lines()
        .filter(|l| !l.trim().is_empty())
        .enumerate()
        .map(|(i, l)| {
            serde_json::from_str::<Json>(l)
                .ok()
                .and_then(|v| TrajectoryRecord::from_json(&v))
                .ok_or_else(|| LogError::Format(format!("{}: bad record on line {}", path.display(), i + 1)))
        })
        .collect()
}
