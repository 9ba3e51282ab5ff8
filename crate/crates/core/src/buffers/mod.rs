//! Experience storage: uniform replay, proportional prioritized replay over a
//! sum tree, on-policy rollout storage and n-step aggregation.

mod multistep;
mod per;
mod replay;
mod rollout;
mod sum_tree;

pub use multistep::MultistepQueue;
pub use per::{PerBuffer, PerConfig, PerSample};
pub use replay::ReplayBuffer;
pub use rollout::{RolloutBuffer, RolloutEntry};
pub use sum_tree::SumTree;

use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum BufferError {
    #[error("cannot sample {requested} transitions from a buffer holding {available}")]
    Insufficient { requested: usize, available: usize },
    #[error("index {index} out of bounds for capacity {capacity}")]
    Bounds { index: usize, capacity: usize },
    #[error("{0}")]
    Invalid(String),
}

#[derive(Debug, Clone, PartialEq)]
pub enum Action {
    Discrete(usize),
    Continuous(Vec<f64>),
}

impl Action {
    pub fn discrete(&self) -> Option<usize> {
        match self {
            Self::Discrete(a) => Some(*a),
            Self::Continuous(_) => None,
        }
    }

    pub fn continuous(&self) -> Option<&[f64]> {
        match self {
            Self::Discrete(_) => None,
            Self::Continuous(v) => Some(v),
        }
    }
}

/// Log-probability and value estimate recorded by the acting policy.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PolicyOutput {
    pub log_prob: f64,
    pub value: f64,
}

/// One environment interaction.
///
/// `done` marks genuine termination only; hitting a time limit sets
/// `truncated` instead so that value targets keep bootstrapping. `span` is
/// the number of raw steps folded into `reward` (1 unless produced by
/// [`MultistepQueue`]).
#[derive(Debug, Clone, PartialEq)]
pub struct Transition {
    pub state: Vec<f64>,
    pub action: Action,
    pub reward: f64,
    pub next_state: Vec<f64>,
    pub done: bool,
    pub truncated: bool,
    pub span: usize,
    pub policy: Option<PolicyOutput>,
}

impl Transition {
    pub fn new(state: Vec<f64>, action: Action, reward: f64, next_state: Vec<f64>, done: bool) -> Self {
        Self {
            state,
            action,
            reward,
            next_state,
            done,
            truncated: false,
            span: 1,
            policy: None,
        }
    }

    pub fn with_truncated(mut self, truncated: bool) -> Self {
        self.truncated = truncated;
        self
    }

    pub fn with_policy(mut self, policy: Option<PolicyOutput>) -> Self {
        self.policy = policy;
        self
    }

    /// Episode boundary of either kind.
    pub fn episode_end(&self) -> bool {
        self.done || self.truncated
    }
}
