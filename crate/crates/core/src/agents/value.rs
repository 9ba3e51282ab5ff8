use std::collections::BTreeMap;

use rand::{Rng, RngCore};
use rand_chacha::ChaCha8Rng;

use super::targets::{argmax, bootstrap_discount, categorical_cross_entropy, project_distribution, quantile_huber_loss};
use super::{
    check_finite, check_gamma, derive_rng, hidden_sizes, load_rngs, pack_state, rows_matrix, unpack_state, ActOutput,
    Agent, AgentError, BuildContext, EpsilonSchedule, LearnCadence, LearnStats, Policy, Result, RngState,
};
use crate::buffers::{Action, MultistepQueue, PerBuffer, PerConfig, ReplayBuffer, Transition};
use crate::config::{warn_unknown_keys, Table};
use crate::envs::ActionSpace;
use crate::networks::{
    build_network, load_param_values, param_values, quantile_midpoints, Network, NetworkExtra, NetworkSpec,
    OutputKind, ValueNet,
};
use crate::nn::{clip_grad_norm, huber_elem, softmax_rows, Matrix, Optimizer};

const KNOWN_KEYS: [&str; 24] = [
    "network",
    "hidden_size",
    "hidden_layers",
    "gamma",
    "epsilon_init",
    "epsilon_min",
    "explore_ratio",
    "buffer_size",
    "batch_size",
    "start_train_step",
    "target_update_period",
    "n_step",
    "double",
    "buffer",
    "alpha",
    "beta",
    "epsilon_priority",
    "v_min",
    "v_max",
    "num_atoms",
    "num_quantiles",
    "kappa",
    "sigma_init",
    "grad_clip",
];

#[derive(Debug, Clone, PartialEq)]
pub struct ValueAgentConfig {
    pub network: String,
    pub hidden: Vec<usize>,
    pub gamma: f64,
    pub schedule: EpsilonSchedule,
    pub buffer_size: usize,
    pub batch_size: usize,
    pub start_train_step: usize,
    pub target_update_period: usize,
    pub n_step: usize,
    pub double: bool,
    pub prioritized: bool,
    pub per: PerConfig,
    pub kappa: f64,
    /// Global gradient-norm bound; `None` disables clipping.
    pub grad_clip: Option<f64>,
    pub extra: NetworkExtra,
    /// Keeps the noise scales of noisy layers fixed at their initial value.
    pub freeze_noise: bool,
}

impl ValueAgentConfig {
    pub fn from_table(t: &Table, ctx: &BuildContext) -> Result<Self> {
        let mut known = KNOWN_KEYS.to_vec();
        known.push("freeze_noise");
        warn_unknown_keys(t, &known);
        let buffer = t.str_or("buffer", "replay")?;
        let prioritized = match buffer.as_str() {
            "replay" => false,
            "per" => true,
            other => {
                return Err(AgentError::Incompatible(format!(
                    "value-based agents learn from 'replay' or 'per' buffers, not '{other}'"
                )))
            }
        };
        let d = NetworkExtra::default();
        let cfg = Self {
            network: t.str_or("network", "discrete_q_network")?,
            hidden: hidden_sizes(t, 128, 2)?,
            gamma: check_gamma(t.f64_or("gamma", 0.99)?)?,
            schedule: EpsilonSchedule::new(
                t.f64_or("epsilon_init", 1.0)?,
                t.f64_or("epsilon_min", 0.01)?,
                t.f64_or("explore_ratio", 0.2)?,
                ctx.run_step,
            )?,
            buffer_size: t.usize_or("buffer_size", 50_000)?,
            batch_size: t.usize_or("batch_size", 32)?,
            start_train_step: t.usize_or("start_train_step", 2000)?,
            target_update_period: t.usize_or("target_update_period", 500)?,
            n_step: t.usize_or("n_step", 1)?,
            double: t.bool_or("double", false)?,
            prioritized,
            per: PerConfig {
                alpha: t.f64_or("alpha", 0.6)?,
                beta_start: t.f64_or("beta", 0.4)?,
                epsilon_priority: t.f64_or("epsilon_priority", 1e-6)?,
                anneal_steps: ctx.run_step,
            },
            kappa: t.f64_or("kappa", 1.0)?,
            grad_clip: match t.f64_or("grad_clip", 10.0)? {
                c if c > 0.0 => Some(c),
                _ => None,
            },
            extra: NetworkExtra {
                n_atoms: t.usize_or("num_atoms", d.n_atoms)?,
                v_min: t.f64_or("v_min", d.v_min)?,
                v_max: t.f64_or("v_max", d.v_max)?,
                n_quantiles: t.usize_or("num_quantiles", d.n_quantiles)?,
                sigma_init: t.f64_or("sigma_init", d.sigma_init)?,
                ..d
            },
            freeze_noise: t.bool_or("freeze_noise", false)?,
        };
        cfg.validate()?;
        Ok(cfg)
    }

    fn validate(&self) -> Result<()> {
        if self.batch_size == 0 || self.buffer_size < self.batch_size {
            return Err(AgentError::Config(format!(
                "need 0 < batch_size <= buffer_size, got {} and {}",
                self.batch_size, self.buffer_size
            )));
        }
        if self.start_train_step < self.batch_size {
            return Err(AgentError::Config(format!(
                "start_train_step ({}) must be at least batch_size ({})",
                self.start_train_step, self.batch_size
            )));
        }
        if self.target_update_period == 0 || self.n_step == 0 {
            return Err(AgentError::Config("target_update_period and n_step must be positive".into()));
        }
        if !(self.kappa > 0.0) {
            return Err(AgentError::Config("kappa must be positive".into()));
        }
        Ok(())
    }
}

enum Storage {
    Uniform(ReplayBuffer),
    Prioritized(PerBuffer),
}

fn state_matrix(state: &[f64], dim: usize) -> Result<Matrix> {
    if state.len() != dim {
        return Err(AgentError::Dimension(format!("state has {} entries, expected {dim}", state.len())));
    }
    Ok(Matrix::row_vector(state))
}

fn value_act(
    net: &mut ValueNet,
    schedule: &EpsilonSchedule,
    state: &[f64],
    step: usize,
    training: bool,
    rng: &mut dyn RngCore,
) -> Result<ActOutput> {
    let x = state_matrix(state, net.in_dim())?;
    let noisy = training && net.is_noisy();
    if noisy {
        net.resample_noise(rng);
    } else if training {
        let eps = schedule.epsilon(step);
        if rng.random::<f64>() < eps {
            return Ok(ActOutput {
                action: Action::Discrete(rng.random_range(0..net.num_actions())),
                policy: None,
            });
        }
    }
    let raw = net.infer(&x, noisy)?;
    let q = net.q_values(&raw);
    check_finite(&q, "action values")?;
    Ok(ActOutput {
        action: Action::Discrete(argmax(q.row(0))),
        policy: None,
    })
}

/// Epsilon-greedy (or noise-greedy) acting over a copy of the online net.
#[derive(Debug, Clone)]
pub struct ValuePolicy {
    net: ValueNet,
    schedule: EpsilonSchedule,
}

impl ValuePolicy {
    pub fn q_values(&self, state: &[f64]) -> Result<Vec<f64>> {
        let raw = self.net.infer(&state_matrix(state, self.net.in_dim())?, false)?;
        Ok(self.net.q_values(&raw).row(0).to_vec())
    }
}

impl Policy for ValuePolicy {
    fn act(&mut self, state: &[f64], step: usize, training: bool, rng: &mut dyn RngCore) -> Result<ActOutput> {
        value_act(&mut self.net, &self.schedule, state, step, training, rng)
    }

    fn params(&self) -> Vec<Matrix> {
        param_values(&self.net.params())
    }

    fn set_params(&mut self, params: &[Matrix]) -> Result<()> {
        Ok(load_param_values(self.net.params_mut(), params)?)
    }

    fn box_clone(&self) -> Box<dyn Policy> {
        Box::new(self.clone())
    }
}

/// The value-based family: scalar, categorical and quantile heads; uniform
/// or prioritized replay; optional n-step returns and double targets.
pub struct ValueAgent {
    name: String,
    cfg: ValueAgentConfig,
    online: ValueNet,
    target: ValueNet,
    optimizer: Optimizer,
    storage: Storage,
    queues: BTreeMap<usize, MultistepQueue>,
    taus: Vec<f64>,
    act_rng: ChaCha8Rng,
    learn_rng: ChaCha8Rng,
    env_steps: u64,
    learns: u64,
    cadence: LearnCadence,
}

impl ValueAgent {
    pub fn new(name: &str, cfg: ValueAgentConfig, optim: &Table, ctx: &BuildContext) -> Result<Self> {
        let ActionSpace::Discrete(n_actions) = ctx.env.action_space else {
            return Err(AgentError::Incompatible(format!("{name} needs a discrete action space")));
        };
        let mut init_rng = derive_rng(ctx.seed, 0);
        let spec = NetworkSpec {
            hidden: cfg.hidden.clone(),
            extra: cfg.extra.clone(),
            ..NetworkSpec::new(&cfg.network, ctx.env.obs_dim, n_actions)
        };
        let Network::Value(mut online) = build_network(&spec, &mut init_rng)? else {
            return Err(AgentError::Incompatible(format!(
                "{name} needs an action-value network, '{}' is not one",
                cfg.network
            )));
        };
        if cfg.freeze_noise {
            online.freeze_noise();
        }
        let storage = if cfg.prioritized {
            Storage::Prioritized(PerBuffer::new(cfg.buffer_size, cfg.per)?)
        } else {
            Storage::Uniform(ReplayBuffer::new(cfg.buffer_size)?)
        };
        let taus = match online.kind() {
            OutputKind::Quantile { n } => quantile_midpoints(*n),
            _ => Vec::new(),
        };
        Ok(Self {
            name: name.to_string(),
            optimizer: super::build_optimizer(optim, None)?,
            target: online.clone(),
            online,
            storage,
            queues: BTreeMap::new(),
            taus,
            act_rng: derive_rng(ctx.seed, 1),
            learn_rng: derive_rng(ctx.seed, 2),
            env_steps: 0,
            learns: 0,
            cadence: LearnCadence::default(),
            cfg,
        })
    }

    pub fn config(&self) -> &ValueAgentConfig {
        &self.cfg
    }

    pub fn online(&self) -> &ValueNet {
        &self.online
    }

    pub fn target(&self) -> &ValueNet {
        &self.target
    }

    /// Replaces both online and target networks, e.g. to start two agents
    /// from identical weights.
    pub fn set_networks(&mut self, net: ValueNet) -> Result<()> {
        if net.params().len() != self.online.params().len() {
            return Err(AgentError::Incompatible("replacement network has a different layout".into()));
        }
        self.online = net.clone();
        self.target = net;
        Ok(())
    }

    /// Hard copy of the online parameters into the target network.
    pub fn sync_target(&mut self) {
        let values = param_values(&self.online.params());
        load_param_values(self.target.params_mut(), &values).expect("identical layouts");
    }

    pub fn buffer_len(&self) -> usize {
        match &self.storage {
            Storage::Uniform(b) => b.len(),
            Storage::Prioritized(b) => b.len(),
        }
    }

    fn store(&mut self, t: Transition) {
        match &mut self.storage {
            Storage::Uniform(b) => {
                b.push(t);
            }
            Storage::Prioritized(b) => b.push(t),
        }
    }

    fn ready_to_learn(&self) -> bool {
        self.env_steps as usize >= self.cfg.start_train_step && self.buffer_len() >= self.cfg.batch_size
    }

    fn learn_from_storage(&mut self) -> Result<LearnStats> {
        let bs = self.cfg.batch_size;
        let (indices, batch, weights) = match &self.storage {
            Storage::Uniform(b) => {
                let idx = b.sample_indices(bs, &mut self.learn_rng)?;
                let batch: Vec<Transition> = idx.iter().map(|&i| b.get(i).expect("sampled").clone()).collect();
                (idx, batch, vec![1.0; bs])
            }
            Storage::Prioritized(b) => {
                let s = b.sample(bs, self.env_steps as usize, &mut self.learn_rng)?;
                let batch = s.indices.iter().map(|&i| b.get(i).expect("sampled").clone()).collect();
                (s.indices, batch, s.weights)
            }
        };
        let (stats, td) = self.learn_on_batch(&batch, &weights)?;
        if let Storage::Prioritized(b) = &mut self.storage {
            b.update_priorities(&indices, &td)?;
        }
        Ok(stats)
    }

    /// One optimizer step on `batch` with per-sample loss weights.
    ///
    /// Returns the stats and each sample's priority signal (the TD error for
    /// scalar heads, the per-sample loss for distributional heads).
    pub fn learn_on_batch(&mut self, batch: &[Transition], weights: &[f64]) -> Result<(LearnStats, Vec<f64>)> {
        let b = batch.len();
        if b == 0 || weights.len() != b {
            return Err(AgentError::Dimension(format!("{b} transitions with {} weights", weights.len())));
        }
        let dim = self.online.in_dim();
        let a_n = self.online.num_actions();
        let states = rows_matrix(batch.iter().map(|t| t.state.as_slice()), dim)?;
        let next = rows_matrix(batch.iter().map(|t| t.next_state.as_slice()), dim)?;
        let noisy = self.online.is_noisy();
        if noisy {
            self.online.resample_noise(&mut self.learn_rng);
            self.target.resample_noise(&mut self.learn_rng);
        }
        let raw = self.online.forward(&states, noisy)?;
        check_finite(&raw, "online outputs")?;
        let target_raw = self.target.infer(&next, noisy)?;
        let target_q = self.target.q_values(&target_raw);
        let chooser = if self.cfg.double {
            self.online.q_values(&self.online.infer(&next, noisy)?)
        } else {
            target_q.clone()
        };
        let actions: Vec<usize> = batch
            .iter()
            .map(|t| match t.action {
                Action::Discrete(a) if a < a_n => Ok(a),
                _ => Err(AgentError::Dimension("stored action is not a valid discrete action".into())),
            })
            .collect::<Result<_>>()?;
        let width = self.online.kind().width();
        let mut grad = Matrix::zeros(b, raw.cols());
        let mut td = vec![0.0; b];
        let mut loss = 0.0;
        let mut mean_q = 0.0;
        let q_now = self.online.q_values(&raw);
        let inv = 1.0 / b as f64;
        for i in 0..b {
            let t = &batch[i];
            let a = actions[i];
            let a_star = argmax(chooser.row(i));
            let disc = bootstrap_discount(self.cfg.gamma, t.span, t.done);
            let w = weights[i];
            mean_q += q_now.get(i, a) * inv;
            let off = a * width;
            let sample_loss = match self.online.kind() {
                OutputKind::Scalar => {
                    let y = t.reward + disc * target_q.get(i, a_star);
                    let err = raw.get(i, a) - y;
                    let (l, d) = huber_elem(err, self.cfg.kappa);
                    grad.set(i, a, w * d * inv);
                    td[i] = err;
                    l
                }
                OutputKind::Categorical(support) => {
                    let k = support.n_atoms;
                    let row = target_raw.row(i);
                    let next_p = softmax_rows(&row[a_star * k..(a_star + 1) * k], k);
                    let m = project_distribution(&next_p, t.reward, disc, support);
                    let (l, dl) = categorical_cross_entropy(&raw.row(i)[off..off + k], &m);
                    let g = grad.row_mut(i);
                    for j in 0..k {
                        g[off + j] = w * dl[j] * inv;
                    }
                    td[i] = l;
                    l
                }
                OutputKind::Quantile { n } => {
                    let n = *n;
                    let row = target_raw.row(i);
                    let tq: Vec<f64> = row[a_star * n..(a_star + 1) * n].iter().map(|q| t.reward + disc * q).collect();
                    let (l, dl) = quantile_huber_loss(&raw.row(i)[off..off + n], &tq, &self.taus, self.cfg.kappa);
                    let g = grad.row_mut(i);
                    for j in 0..n {
                        g[off + j] = w * dl[j] * inv;
                    }
                    td[i] = l;
                    l
                }
            };
            loss += w * sample_loss * inv;
        }
        self.online.backward(&grad)?;
        let mut params = self.online.params_mut();
        if let Some(c) = self.cfg.grad_clip {
            clip_grad_norm(&mut params, c)?;
        }
        self.optimizer.step(params)?;
        self.learns += 1;
        let stats = LearnStats::new(loss)
            .with("mean_q", mean_q)
            .with("epsilon", if noisy { 0.0 } else { self.cfg.schedule.epsilon(self.env_steps as usize) });
        if !stats.is_finite() {
            return Err(AgentError::NonFinite(format!("{} loss", self.name)));
        }
        Ok((stats, td))
    }
}

impl Agent for ValueAgent {
    fn name(&self) -> &str {
        &self.name
    }

    fn act(&mut self, state: &[f64], step: usize, training: bool) -> Result<ActOutput> {
        value_act(&mut self.online, &self.cfg.schedule, state, step, training, &mut self.act_rng)
    }

    fn policy(&self) -> Box<dyn Policy> {
        let mut net = self.online.clone();
        net.clear_cache();
        Box::new(ValuePolicy {
            net,
            schedule: self.cfg.schedule,
        })
    }

    fn policy_params(&self) -> Vec<Matrix> {
        param_values(&self.online.params())
    }

    fn process(&mut self, actor_id: usize, transitions: Vec<Transition>) -> Result<Option<LearnStats>> {
        let mut stats = Vec::new();
        let period = self.cfg.target_update_period as u64;
        let before = self.env_steps;
        for t in transitions {
            let queue = match self.queues.entry(actor_id) {
                std::collections::btree_map::Entry::Occupied(e) => e.into_mut(),
                std::collections::btree_map::Entry::Vacant(e) => {
                    e.insert(MultistepQueue::new(self.cfg.n_step, self.cfg.gamma)?)
                }
            };
            for agg in queue.push(t) {
                self.store(agg);
            }
            self.env_steps += 1;
            if self.cadence == LearnCadence::PerStep {
                if self.ready_to_learn() {
                    stats.push(self.learn_from_storage()?);
                }
                if self.env_steps % period == 0 {
                    self.sync_target();
                }
            }
        }
        if self.cadence == LearnCadence::PerBatch && self.env_steps > before {
            if self.ready_to_learn() {
                stats.push(self.learn_from_storage()?);
            }
            if self.env_steps / period != before / period {
                self.sync_target();
            }
        }
        Ok(LearnStats::mean(&stats))
    }

    fn set_cadence(&mut self, cadence: LearnCadence) {
        self.cadence = cadence;
    }

    fn learn_batch(&mut self, batch: &[Transition]) -> Result<LearnStats> {
        let w = vec![1.0; batch.len()];
        Ok(self.learn_on_batch(batch, &w)?.0)
    }

    fn env_steps(&self) -> u64 {
        self.env_steps
    }

    fn learn_count(&self) -> u64 {
        self.learns
    }

    fn state_tensors(&self) -> Vec<Matrix> {
        pack_state(
            vec![
                param_values(&self.online.params()),
                param_values(&self.target.params()),
                self.optimizer.state_tensors(),
            ],
            &[self.env_steps, self.learns],
        )
    }

    fn load_state_tensors(&mut self, tensors: &[Matrix]) -> Result<()> {
        let (groups, counters) = unpack_state(tensors, 2)?;
        if groups.len() != 3 {
            return Err(AgentError::State(format!("{} state has 3 groups", self.name)));
        }
        load_param_values(self.online.params_mut(), &groups[0])?;
        load_param_values(self.target.params_mut(), &groups[1])?;
        self.optimizer.load_state_tensors(&groups[2])?;
        self.env_steps = counters[0];
        self.learns = counters[1];
        Ok(())
    }

    fn rng_states(&self) -> Vec<RngState> {
        vec![RngState::capture(&self.act_rng), RngState::capture(&self.learn_rng)]
    }

    fn load_rng_states(&mut self, states: &[RngState]) -> Result<()> {
        load_rngs(&mut [&mut self.act_rng, &mut self.learn_rng], states)
    }
}
