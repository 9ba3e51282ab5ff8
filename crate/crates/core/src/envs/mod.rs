//! Built-in environments: CartPole (discrete), Pendulum (continuous) and a
//! deterministic GridWorld chain with exact value oracles.

mod cartpole;
mod gridworld;
mod pendulum;

pub use cartpole::{CartPole, CartPoleParams, CartPoleState};
pub use gridworld::{tabular_q_learning, value_iteration, GridWorld, QLearningConfig};
pub use pendulum::Pendulum;

use thiserror::Error;

use crate::buffers::Action;
use crate::config::{warn_unknown_keys, ConfigError, Table};

#[derive(Debug, Error)]
pub enum EnvError {
    #[error("unknown environment '{name}'; available: {available}")]
    Unknown { name: String, available: String },
    #[error("environment '{0}' needs an external binding (gym, ALE, ML-Agents, MuJoCo, Procgen, Mario), which is not supported; built-in environments: cartpole, pendulum, gridworld")]
    Unsupported(String),
    #[error("action {action} out of bounds for discrete({n})")]
    Bounds { action: usize, n: usize },
    #[error("{0}")]
    State(String),
    #[error("{0}")]
    Invalid(String),
    #[error(transparent)]
    Config(#[from] ConfigError),
}

#[derive(Debug, Clone, PartialEq)]
pub enum ActionSpace {
    Discrete(usize),
    Continuous { low: Vec<f64>, high: Vec<f64> },
}

impl ActionSpace {
    pub fn action_type(&self) -> &'static str {
        match self {
            Self::Discrete(_) => "discrete",
            Self::Continuous { .. } => "continuous",
        }
    }

    /// Number of discrete actions or the continuous action dimension.
    pub fn dim(&self) -> usize {
        match self {
            Self::Discrete(n) => *n,
            Self::Continuous { low, .. } => low.len(),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct EnvSpec {
    pub name: String,
    pub obs_dim: usize,
    pub action_space: ActionSpace,
    pub max_episode_steps: usize,
}

impl EnvSpec {
    pub fn action_type(&self) -> &'static str {
        self.action_space.action_type()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct StepResult {
    pub observation: Vec<f64>,
    pub reward: f64,
    pub done: bool,
    pub truncated: bool,
}

pub trait Env: Send {
    fn spec(&self) -> &EnvSpec;

    /// Starts a new episode; the same seed gives the same initial observation.
    fn reset(&mut self, seed: u64) -> Vec<f64>;

    /// Errors once the episode has ended until the next reset.
    fn step(&mut self, action: &Action) -> Result<StepResult, EnvError>;
}

/// Episode bookkeeping shared by the built-in environments.
#[derive(Debug, Clone, Default)]
pub(crate) struct EpisodeClock {
    pub steps: usize,
    pub active: bool,
}

impl EpisodeClock {
    pub fn reset(&mut self) {
        self.steps = 0;
        self.active = true;
    }

    pub fn check(&self, name: &str) -> Result<(), EnvError> {
        if self.active {
            Ok(())
        } else {
            Err(EnvError::State(format!("{name}: step called before reset or after the episode ended")))
        }
    }

    /// Counts one step and reports `(done, truncated)`; a termination takes
    /// precedence over the time limit.
    pub fn tick(&mut self, terminal: bool, max_steps: usize) -> (bool, bool) {
        self.steps += 1;
        let truncated = !terminal && self.steps >= max_steps;
        if terminal || truncated {
            self.active = false;
        }
        (terminal, truncated)
    }
}

pub(crate) fn discrete_action(action: &Action, n: usize, name: &str) -> Result<usize, EnvError> {
    match action {
        Action::Discrete(a) if *a < n => Ok(*a),
        Action::Discrete(a) => Err(EnvError::Bounds { action: *a, n }),
        Action::Continuous(_) => Err(EnvError::Invalid(format!("{name} takes discrete actions"))),
    }
}

const ENV_REGISTRY: [(&str, &str); 3] = [
    ("cartpole", "cart-pole balancing, 4-d observation, discrete(2)"),
    ("pendulum", "torque-limited pendulum swing-up, 3-d observation, continuous(1) in [-2, 2]"),
    ("gridworld", "deterministic 1xL chain, one-hot observation, discrete(2)"),
];

const UNSUPPORTED: [&str; 9] = [
    "atari", "gym", "mujoco", "procgen", "mario", "ml_agents", "mlagents", "pong", "breakout",
];

pub fn env_names() -> Vec<&'static str> {
    ENV_REGISTRY.iter().map(|(n, _)| *n).collect()
}

pub fn env_registry() -> &'static [(&'static str, &'static str)] {
    &ENV_REGISTRY
}

const KNOWN_KEYS: [&str; 4] = ["action_type", "render", "max_episode_steps", "length"];

/// Builds an environment from its config table.
pub fn build_env(table: &Table) -> Result<Box<dyn Env>, EnvError> {
    let name = table.str_or("name", "")?;
    let lower = name.to_ascii_lowercase();
    if UNSUPPORTED.iter().any(|u| lower.starts_with(u)) {
        return Err(EnvError::Unsupported(name));
    }
    warn_unknown_keys(table, &KNOWN_KEYS);
    let env: Box<dyn Env> = match name.as_str() {
        "cartpole" => Box::new(CartPole::new(table.usize_or("max_episode_steps", 500)?)),
        "pendulum" => Box::new(Pendulum::new(table.usize_or("max_episode_steps", 200)?)),
        "gridworld" => Box::new(GridWorld::new(
            table.usize_or("length", 5)?,
            table.usize_or("max_episode_steps", 100)?,
        )?),
        _ => {
            return Err(EnvError::Unknown {
                name,
                available: env_names().join(", "),
            })
        }
    };
    if let Some(declared) = table.opt_str("action_type")? {
        if declared != env.spec().action_type() {
            return Err(EnvError::Invalid(format!(
                "env.action_type is '{declared}' but {} is {}",
                env.spec().name,
                env.spec().action_type()
            )));
        }
    }
    if env.spec().max_episode_steps == 0 {
        return Err(EnvError::Invalid("max_episode_steps must be positive".into()));
    }
    Ok(env)
}

/// Builds by name with default settings.
pub fn make_env(name: &str) -> Result<Box<dyn Env>, EnvError> {
    let mut t = Table::new("env");
    t.insert("name", crate::config::Value::Str(name.to_string()));
    build_env(&t)
}
