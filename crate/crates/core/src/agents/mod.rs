//! Agents built from a network head, a buffer, an optimizer and target/loss
//! rules.
//!
//! Every registered name is a preset over the same option table, so any
//! preset can be recombined from config: `dqn` with `network = "dueling"`
//! and `buffer = "per"` is a dueling PER agent.

mod ddpg;
mod policy_gradient;
mod schedule;
pub mod targets;
mod value;

pub use ddpg::{actor_loss_and_grad, critic_loss_and_grad, DdpgAgent, DdpgConfig, DeterministicPolicy};
pub use policy_gradient::{CategoricalPolicy, PpoAgent, PpoConfig, ReinforceAgent, ReinforceConfig};
pub use schedule::EpsilonSchedule;
pub use value::{ValueAgent, ValueAgentConfig, ValuePolicy};

use indexmap::IndexMap;
use rand::RngCore;
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

use crate::buffers::{Action, BufferError, PolicyOutput, Transition};
use crate::config::{ConfigError, ConfigTree, Table, Value};
use crate::envs::{ActionSpace, EnvSpec};
use crate::networks::NetworkError;
use crate::nn::{AdamConfig, Matrix, NnError, Optimizer, OptimizerKind};

#[derive(Debug, Error)]
pub enum AgentError {
    #[error("unknown agent '{name}'; available: {available}")]
    Unknown { name: String, available: String },
    #[error("agent config: {0}")]
    Config(String),
    #[error("incompatible components: {0}")]
    Incompatible(String),
    #[error("non-finite network output: {0}")]
    NonFinite(String),
    #[error("dimension mismatch: {0}")]
    Dimension(String),
    #[error("agent state: {0}")]
    State(String),
    #[error(transparent)]
    Network(#[from] NetworkError),
    #[error(transparent)]
    Buffer(#[from] BufferError),
    #[error(transparent)]
    Nn(#[from] NnError),
    #[error(transparent)]
    ConfigValue(#[from] ConfigError),
}

pub type Result<T> = std::result::Result<T, AgentError>;

/// Loss plus named auxiliary scalars, averaged over the learns of one call.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct LearnStats {
    pub loss: f64,
    pub extras: IndexMap<String, f64>,
}

impl LearnStats {
    pub fn new(loss: f64) -> Self {
        Self {
            loss,
            extras: IndexMap::new(),
        }
    }

    pub fn with(mut self, key: &str, value: f64) -> Self {
        self.extras.insert(key.to_string(), value);
        self
    }

    pub fn is_finite(&self) -> bool {
        self.loss.is_finite() && self.extras.values().all(|v| v.is_finite())
    }

    pub fn mean(stats: &[LearnStats]) -> Option<LearnStats> {
        if stats.is_empty() {
            return None;
        }
        let n = stats.len() as f64;
        let mut out = LearnStats::new(stats.iter().map(|s| s.loss).sum::<f64>() / n);
        for s in stats {
            for (k, v) in &s.extras {
                *out.extras.entry(k.clone()).or_insert(0.0) += v / n;
            }
        }
        Some(out)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ActOutput {
    pub action: Action,
    pub policy: Option<PolicyOutput>,
}

/// The act-only part of an agent, as held by actors.
pub trait Policy: Send {
    fn act(&mut self, state: &[f64], step: usize, training: bool, rng: &mut dyn RngCore) -> Result<ActOutput>;
    fn params(&self) -> Vec<Matrix>;
    fn set_params(&mut self, params: &[Matrix]) -> Result<()>;
    fn box_clone(&self) -> Box<dyn Policy>;
}

impl Clone for Box<dyn Policy> {
    fn clone(&self) -> Self {
        self.box_clone()
    }
}

pub trait Agent: Send {
    fn name(&self) -> &str;

    /// Acts with the live parameters and the agent's own acting stream.
    fn act(&mut self, state: &[f64], step: usize, training: bool) -> Result<ActOutput>;

    /// A detached copy of the acting policy.
    fn policy(&self) -> Box<dyn Policy>;

    /// The parameters a [`Policy`] from [`Agent::policy`] accepts.
    fn policy_params(&self) -> Vec<Matrix>;

    /// Stores transitions from one actor and runs whatever learning the
    /// agent's cadence calls for.
    fn process(&mut self, actor_id: usize, transitions: Vec<Transition>) -> Result<Option<LearnStats>>;

    /// One learning update on exactly this batch, bypassing storage.
    fn learn_batch(&mut self, batch: &[Transition]) -> Result<LearnStats>;

    /// Transitions consumed so far.
    fn env_steps(&self) -> u64;

    /// Learning updates so far.
    fn learn_count(&self) -> u64;

    /// Parameters, optimizer moments and counters.
    fn state_tensors(&self) -> Vec<Matrix>;
    fn load_state_tensors(&mut self, tensors: &[Matrix]) -> Result<()>;

    fn rng_states(&self) -> Vec<RngState>;
    fn load_rng_states(&mut self, states: &[RngState]) -> Result<()>;

    /// Agents whose learning is driven by rollouts or episodes ignore this.
    fn set_cadence(&mut self, _cadence: LearnCadence) {}
}

/// When replay-based agents learn from what [`Agent::process`] hands them.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum LearnCadence {
    /// One update per stored transition.
    #[default]
    PerStep,
    /// One update per call, as in distributed rounds.
    PerBatch,
}

/// Position of a ChaCha stream, enough to resume it exactly.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct RngState {
    pub seed: [u8; 32],
    pub stream: u64,
    pub word_pos: u128,
}

impl RngState {
    pub fn capture(rng: &ChaCha8Rng) -> Self {
        Self {
            seed: rng.get_seed(),
            stream: rng.get_stream(),
            word_pos: rng.get_word_pos(),
        }
    }

    pub fn restore(&self) -> ChaCha8Rng {
        use rand::SeedableRng;
        let mut rng = ChaCha8Rng::from_seed(self.seed);
        rng.set_stream(self.stream);
        rng.set_word_pos(self.word_pos);
        rng
    }
}

/// Independent stream `k` derived from a base seed.
pub fn derive_rng(seed: u64, k: u64) -> ChaCha8Rng {
    use rand::SeedableRng;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(k);
    rng
}

pub(crate) fn load_rngs(slots: &mut [&mut ChaCha8Rng], states: &[RngState]) -> Result<()> {
    if slots.len() != states.len() {
        return Err(AgentError::State(format!(
            "expected {} rng states, got {}",
            slots.len(),
            states.len()
        )));
    }
    for (slot, s) in slots.iter_mut().zip(states) {
        **slot = s.restore();
    }
    Ok(())
}

/// Groups of tensors behind a header row holding the group sizes and the
/// counters.
pub(crate) fn pack_state(groups: Vec<Vec<Matrix>>, counters: &[u64]) -> Vec<Matrix> {
    let mut header = vec![groups.len() as f64];
    header.extend(groups.iter().map(|g| g.len() as f64));
    header.extend(counters.iter().map(|&c| c as f64));
    let mut out = vec![Matrix::row_vector(&header)];
    out.extend(groups.into_iter().flatten());
    out
}

pub(crate) fn unpack_state(tensors: &[Matrix], n_counters: usize) -> Result<(Vec<Vec<Matrix>>, Vec<u64>)> {
    let bad = || AgentError::State("malformed agent state".into());
    let header = tensors.first().ok_or_else(bad)?.data();
    let n_groups = *header.first().ok_or_else(bad)? as usize;
    if header.len() != 1 + n_groups + n_counters {
        return Err(bad());
    }
    let mut groups = Vec::with_capacity(n_groups);
    let mut at = 1;
    for g in 0..n_groups {
        let len = header[1 + g] as usize;
        let group = tensors.get(at..at + len).ok_or_else(bad)?.to_vec();
        groups.push(group);
        at += len;
    }
    if at != tensors.len() {
        return Err(bad());
    }
    let counters = header[1 + n_groups..].iter().map(|&c| c as u64).collect();
    Ok((groups, counters))
}

pub(crate) fn check_finite(m: &Matrix, what: &str) -> Result<()> {
    if m.is_finite() {
        Ok(())
    } else {
        Err(AgentError::NonFinite(what.to_string()))
    }
}

pub(crate) fn rows_matrix<'a, I: IntoIterator<Item = &'a [f64]>>(rows: I, width: usize) -> Result<Matrix> {
    let mut data = Vec::new();
    let mut n = 0;
    for r in rows {
        if r.len() != width {
            return Err(AgentError::Dimension(format!("expected width {width}, got {}", r.len())));
        }
        data.extend_from_slice(r);
        n += 1;
    }
    Ok(Matrix::from_vec(n, width, data)?)
}

/// Builds an optimizer from the `optim` table, with `lr` replaced when
/// given.
pub fn build_optimizer(optim: &Table, lr: Option<f64>) -> Result<Optimizer> {
    let name = optim.str_or("name", "adam")?;
    let lr = match lr {
        Some(l) => l,
        None => optim.f64_or("lr", 1e-3)?,
    };
    if !(lr > 0.0) {
        return Err(AgentError::Config(format!("learning rate must be positive, got {lr}")));
    }
    let kind = match name.as_str() {
        "adam" => {
            let d = AdamConfig::default();
            OptimizerKind::Adam(AdamConfig {
                lr,
                beta1: optim.f64_or("beta1", d.beta1)?,
                beta2: optim.f64_or("beta2", d.beta2)?,
                eps: optim.f64_or("eps", d.eps)?,
            })
        }
        "sgd" => OptimizerKind::Sgd { lr },
        other => {
            return Err(AgentError::Config(format!(
                "unknown optimizer '{other}'; available: {}",
                OptimizerKind::NAMES.join(", ")
            )))
        }
    };
    Ok(Optimizer::new(kind))
}

/// Hidden layer sizes from `hidden_size` × `hidden_layers`.
pub(crate) fn hidden_sizes(t: &Table, size: usize, layers: usize) -> Result<Vec<usize>> {
    let size = t.usize_or("hidden_size", size)?;
    let layers = t.usize_or("hidden_layers", layers)?;
    if size == 0 || layers == 0 {
        return Err(AgentError::Config("hidden_size and hidden_layers must be positive".into()));
    }
    Ok(vec![size; layers])
}

pub(crate) fn check_gamma(gamma: f64) -> Result<f64> {
    if gamma > 0.0 && gamma <= 1.0 {
        Ok(gamma)
    } else {
        Err(AgentError::Config(format!("gamma must lie in (0, 1], got {gamma}")))
    }
}

const AGENT_REGISTRY: [(&str, &str); 12] = [
    ("dqn", "deep Q-network with epsilon-greedy exploration"),
    ("double", "DQN with double-Q targets"),
    ("dueling", "DQN on the dueling network"),
    ("multistep", "DQN with 3-step returns"),
    ("per", "DQN with proportional prioritized replay"),
    ("noisy", "DQN with noisy-layer exploration"),
    ("c51", "categorical distributional DQN"),
    ("qr_dqn", "quantile regression DQN"),
    ("rainbow", "double, dueling, multistep, PER, noisy and C51 combined"),
    ("reinforce", "Monte Carlo policy gradient"),
    ("ppo", "clipped-surrogate actor-critic with GAE"),
    ("ddpg", "deterministic policy gradient for continuous actions"),
];

pub fn agent_names() -> Vec<&'static str> {
    AGENT_REGISTRY.iter().map(|(n, _)| *n).collect()
}

pub fn agent_registry() -> &'static [(&'static str, &'static str)] {
    &AGENT_REGISTRY
}

/// Preset option values that distinguish one value-based agent name from
/// another.
fn value_preset(name: &str) -> Vec<(&'static str, Value)> {
    let s = |v: &str| Value::Str(v.to_string());
    match name {
        "double" => vec![("double", Value::Bool(true))],
        "dueling" => vec![("network", s("dueling"))],
        "multistep" => vec![("n_step", Value::Int(3))],
        "per" => vec![("buffer", s("per"))],
        "noisy" => vec![("network", s("noisy"))],
        "c51" => vec![("network", s("c51"))],
        "qr_dqn" => vec![("network", s("qr"))],
        "rainbow" => vec![
            ("network", s("rainbow")),
            ("buffer", s("per")),
            ("n_step", Value::Int(3)),
            ("double", Value::Bool(true)),
        ],
        _ => Vec::new(),
    }
}

/// Everything an agent constructor needs beyond its own tables.
#[derive(Debug, Clone)]
pub struct BuildContext {
    pub env: EnvSpec,
    pub run_step: usize,
    pub seed: u64,
}

/// Builds the agent named in `tree.agent`.
pub fn build_agent(tree: &ConfigTree, env: &EnvSpec, seed: u64) -> Result<Box<dyn Agent>> {
    let ctx = BuildContext {
        env: env.clone(),
        run_step: tree.train.usize_or("run_step", 100_000)?,
        seed,
    };
    build_agent_from(&tree.agent, &tree.optim, &ctx)
}

pub fn build_agent_from(agent: &Table, optim: &Table, ctx: &BuildContext) -> Result<Box<dyn Agent>> {
    let name = agent.str_or("name", "")?;
    let discrete = matches!(ctx.env.action_space, ActionSpace::Discrete(_));
    let need = |want_discrete: bool| -> Result<()> {
        if want_discrete == discrete {
            Ok(())
        } else {
            Err(AgentError::Incompatible(format!(
                "agent '{name}' needs {} actions but {} is {}",
                if want_discrete { "discrete" } else { "continuous" },
                ctx.env.name,
                ctx.env.action_type()
            )))
        }
    };
    match name.as_str() {
        "dqn" | "double" | "dueling" | "multistep" | "per" | "noisy" | "c51" | "qr_dqn" | "rainbow" => {
            need(true)?;
            let table = agent.with_defaults(&value_preset(&name));
            let cfg = ValueAgentConfig::from_table(&table, ctx)?;
            Ok(Box::new(ValueAgent::new(&name, cfg, optim, ctx)?))
        }
        "reinforce" => {
            need(true)?;
            let cfg = ReinforceConfig::from_table(agent)?;
            Ok(Box::new(ReinforceAgent::new(cfg, optim, ctx)?))
        }
        "ppo" => {
            need(true)?;
            let cfg = PpoConfig::from_table(agent)?;
            Ok(Box::new(PpoAgent::new(cfg, optim, ctx)?))
        }
        "ddpg" => {
            need(false)?;
            let cfg = DdpgConfig::from_table(agent, ctx)?;
            Ok(Box::new(DdpgAgent::new(cfg, optim, ctx)?))
        }
        _ => Err(AgentError::Unknown {
            name,
            available: agent_names().join(", "),
        }),
    }
}

/// Rejects replay-only options on on-policy agents.
pub(crate) fn reject_replay_options(agent: &Table, who: &str) -> Result<()> {
    if let Some(b) = agent.opt_str("buffer")? {
        if b != "rollout" {
            return Err(AgentError::Incompatible(format!(
                "{who} learns on-policy from a rollout buffer; buffer '{b}' is not usable"
            )));
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn state_packing_round_trip() {
        let g1 = vec![Matrix::filled(2, 2, 1.0)];
        let g2 = vec![Matrix::filled(1, 3, 2.0), Matrix::zeros(1, 1)];
        let packed = pack_state(vec![g1.clone(), g2.clone(), Vec::new()], &[7, 9]);
        let (groups, counters) = unpack_state(&packed, 2).unwrap();
        assert_eq!(groups, vec![g1, g2, Vec::new()]);
        assert_eq!(counters, vec![7, 9]);
        assert!(unpack_state(&packed, 3).is_err());
    }

    #[test]
    fn rng_state_resumes() {
        use rand::Rng;
        let mut a = derive_rng(3, 1);
        let _: u64 = a.random();
        let snap = RngState::capture(&a);
        let x: u64 = a.random();
        let mut b = snap.restore();
        assert_eq!(b.random::<u64>(), x);
    }

    #[test]
    fn stats_mean() {
        let s = LearnStats::mean(&[LearnStats::new(1.0).with("q", 2.0), LearnStats::new(3.0).with("q", 4.0)]).unwrap();
        assert_eq!(s.loss, 2.0);
        assert_eq!(s.extras["q"], 3.0);
        assert!(LearnStats::mean(&[]).is_none());
    }
}
