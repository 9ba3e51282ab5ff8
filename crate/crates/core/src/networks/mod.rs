//! Network heads selectable by name.
//!
//! Every entry in [`NETWORK_REGISTRY`] maps observations to the output an
//! agent family consumes: per-action values (plain, dueling, noisy,
//! categorical, quantile), categorical policies with an optional value
//! head, or a deterministic actor and state-action critic.

mod noisy;
mod policy;
mod value;

pub use noisy::NoisyLinear;
pub use policy::{ActorNet, CriticNet, PolicyNet};
pub use value::{
    categorical_probs, dueling_combine, expected_from_probs, quantile_midpoints,
    CategoricalSupport, OutputKind, ValueNet,
};

use rand::RngCore;
use thiserror::Error;

use crate::nn::{Activation, Matrix, NnError, Parameter};

#[derive(Debug, Error)]
pub enum NetworkError {
    #[error("unknown network '{name}'; did you mean {suggestions}? available: {available}")]
    Unknown {
        name: String,
        suggestions: String,
        available: String,
    },
    #[error("invalid network spec: {0}")]
    Invalid(String),
    #[error(transparent)]
    Nn(#[from] NnError),
}

/// Registry of network names with a one-line description each.
pub const NETWORK_REGISTRY: &[(&str, &str)] = &[
    ("discrete_q_network", "MLP with one Q-value per action"),
    ("dueling", "dueling value/advantage streams"),
    ("noisy", "Q-network with a factorised-noise head"),
    ("noisy_dueling", "dueling streams with noisy layers"),
    ("c51", "categorical return distribution per action"),
    ("qr", "quantile values per action"),
    ("rainbow", "noisy dueling categorical head"),
    ("discrete_policy", "softmax policy logits"),
    ("discrete_policy_value", "shared-trunk policy logits and state value"),
    ("deterministic_actor", "tanh-bounded continuous actor"),
    ("q_critic", "state-action value critic"),
];

pub fn network_names() -> Vec<&'static str> {
    NETWORK_REGISTRY.iter().map(|(n, _)| *n).collect()
}

/// Names closest to `name` by edit distance, best first.
pub(crate) fn nearest_names<'a>(name: &str, candidates: &[&'a str]) -> Vec<&'a str> {
    let mut scored: Vec<(usize, &str)> = candidates
        .iter()
        .map(|c| (strsim::levenshtein(name, c), *c))
        .collect();
    scored.sort();
    let best = scored.first().map(|s| s.0).unwrap_or(0);
    scored
        .into_iter()
        .take_while(|(d, _)| *d <= best + 2)
        .take(3)
        .map(|(_, c)| c)
        .collect()
}

#[derive(Debug, Clone, PartialEq)]
pub struct NetworkExtra {
    pub n_atoms: usize,
    pub v_min: f64,
    pub v_max: f64,
    pub n_quantiles: usize,
    pub sigma_init: f64,
    pub action_low: Vec<f64>,
    pub action_high: Vec<f64>,
}

impl Default for NetworkExtra {
    fn default() -> Self {
        Self {
            n_atoms: 51,
            v_min: -10.0,
            v_max: 10.0,
            n_quantiles: 51,
            sigma_init: 0.5,
            action_low: vec![-1.0],
            action_high: vec![1.0],
        }
    }
}

/// What to build: `in_dim` is the observation size, `out_dim` the number of
/// actions (discrete) or the action dimension (continuous).
#[derive(Debug, Clone, PartialEq)]
pub struct NetworkSpec {
    pub name: String,
    pub in_dim: usize,
    pub out_dim: usize,
    pub hidden: Vec<usize>,
    pub activation: Activation,
    pub extra: NetworkExtra,
}

impl NetworkSpec {
    pub fn new(name: &str, in_dim: usize, out_dim: usize) -> Self {
        Self {
            name: name.to_string(),
            in_dim,
            out_dim,
            hidden: vec![64, 64],
            activation: Activation::Relu,
            extra: NetworkExtra::default(),
        }
    }
}

#[derive(Debug, Clone)]
pub enum Network {
    Value(ValueNet),
    Policy(PolicyNet),
    Actor(ActorNet),
    Critic(CriticNet),
}

impl Network {
    pub fn params(&self) -> Vec<&Parameter> {
        match self {
            Self::Value(n) => n.params(),
            Self::Policy(n) => n.params(),
            Self::Actor(n) => n.params(),
            Self::Critic(n) => n.params(),
        }
    }

    pub fn params_mut(&mut self) -> Vec<&mut Parameter> {
        match self {
            Self::Value(n) => n.params_mut(),
            Self::Policy(n) => n.params_mut(),
            Self::Actor(n) => n.params_mut(),
            Self::Critic(n) => n.params_mut(),
        }
    }

    pub fn family(&self) -> &'static str {
        match self {
            Self::Value(_) => "value",
            Self::Policy(_) => "policy",
            Self::Actor(_) => "actor",
            Self::Critic(_) => "critic",
        }
    }
}

/// Builds the network named in `spec`.
pub fn build_network(spec: &NetworkSpec, rng: &mut dyn RngCore) -> Result<Network, NetworkError> {
    if spec.in_dim == 0 || spec.out_dim == 0 {
        return Err(NetworkError::Invalid(format!(
            "network '{}' needs positive dims, got in={} out={}",
            spec.name, spec.in_dim, spec.out_dim
        )));
    }
    let e = &spec.extra;
    let value = |kind: OutputKind, dueling: bool, noisy: bool, rng: &mut dyn RngCore| {
        ValueNet::build(
            spec.in_dim,
            spec.out_dim,
            &spec.hidden,
            spec.activation,
            kind,
            dueling,
            noisy.then_some(e.sigma_init),
            rng,
        )
        .map(Network::Value)
    };
    let categorical = || CategoricalSupport::new(e.n_atoms, e.v_min, e.v_max).map(OutputKind::Categorical);
    match spec.name.as_str() {
        "discrete_q_network" => value(OutputKind::Scalar, false, false, rng),
        "dueling" => value(OutputKind::Scalar, true, false, rng),
        "noisy" => value(OutputKind::Scalar, false, true, rng),
        "noisy_dueling" => value(OutputKind::Scalar, true, true, rng),
        "c51" => value(categorical()?, false, false, rng),
        "rainbow" => value(categorical()?, true, true, rng),
        "qr" => {
            if e.n_quantiles == 0 {
                return Err(NetworkError::Invalid("quantile count must be positive".into()));
            }
            value(OutputKind::Quantile { n: e.n_quantiles }, false, false, rng)
        }
        "discrete_policy" => {
            PolicyNet::build(spec.in_dim, spec.out_dim, &spec.hidden, spec.activation, false, rng)
                .map(Network::Policy)
        }
        "discrete_policy_value" => {
            PolicyNet::build(spec.in_dim, spec.out_dim, &spec.hidden, spec.activation, true, rng)
                .map(Network::Policy)
        }
        "deterministic_actor" => {
            if e.action_low.len() != spec.out_dim {
                return Err(NetworkError::Invalid(format!(
                    "actor bounds have {} entries for action dim {}",
                    e.action_low.len(),
                    spec.out_dim
                )));
            }
            ActorNet::build(
                spec.in_dim,
                &spec.hidden,
                spec.activation,
                e.action_low.clone(),
                e.action_high.clone(),
                rng,
            )
            .map(Network::Actor)
        }
        "q_critic" => CriticNet::build(spec.in_dim, spec.out_dim, &spec.hidden, spec.activation, rng)
            .map(Network::Critic),
        other => {
            let names = network_names();
            Err(NetworkError::Unknown {
                name: other.to_string(),
                suggestions: nearest_names(other, &names).join(", "),
                available: names.join(", "),
            })
        }
    }
}

/// Copies of all parameter values, in order.
pub fn param_values(params: &[&Parameter]) -> Vec<Matrix> {
    params.iter().map(|p| p.value.clone()).collect()
}

/// Overwrites parameter values, checking count and shapes.
pub fn load_param_values(params: Vec<&mut Parameter>, values: &[Matrix]) -> Result<(), NetworkError> {
    if params.len() != values.len() {
        return Err(NetworkError::Invalid(format!(
            "expected {} parameter tensors, got {}",
            params.len(),
            values.len()
        )));
    }
    for (i, (p, v)) in params.into_iter().zip(values).enumerate() {
        if p.value.shape() != v.shape() {
            return Err(NetworkError::Invalid(format!(
                "tensor {i} has shape {:?}, expected {:?}",
                v.shape(),
                p.value.shape()
            )));
        }
        p.value = v.clone();
    }
    Ok(())
}

/// `target ← τ·source + (1−τ)·target`, elementwise.
pub fn soft_update(target: Vec<&mut Parameter>, source: Vec<&Parameter>, tau: f64) {
    for (t, s) in target.into_iter().zip(source) {
        for (tv, sv) in t.value.data_mut().iter_mut().zip(s.value.data()) {
            *tv = tau * sv + (1.0 - tau) * *tv;
        }
    }
}
