use rand::RngCore;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use super::targets::bootstrap_discount;
use super::{
    check_finite, check_gamma, derive_rng, load_rngs, pack_state, rows_matrix, unpack_state, ActOutput, Agent,
    AgentError, BuildContext, LearnCadence, LearnStats, Policy, Result, RngState,
};
use crate::buffers::{Action, ReplayBuffer, Transition};
use crate::config::{warn_unknown_keys, Table};
use crate::envs::ActionSpace;
use crate::networks::{
    build_network, load_param_values, param_values, soft_update, ActorNet, CriticNet, Network, NetworkExtra,
    NetworkSpec,
};
use crate::nn::{Matrix, Optimizer};

#[derive(Debug, Clone, PartialEq)]
pub struct DdpgConfig {
    pub actor_hidden: Vec<usize>,
    pub critic_hidden: Vec<usize>,
    pub gamma: f64,
    pub tau: f64,
    /// Exploration noise standard deviation as a fraction of the action range.
    pub noise_scale: f64,
    pub buffer_size: usize,
    pub batch_size: usize,
    pub start_train_step: usize,
    pub actor_lr: Option<f64>,
    pub critic_lr: Option<f64>,
    pub low: Vec<f64>,
    pub high: Vec<f64>,
}

impl DdpgConfig {
    pub fn from_table(t: &Table, ctx: &BuildContext) -> Result<Self> {
        warn_unknown_keys(
            t,
            &[
                "network",
                "critic_network",
                "hidden_size",
                "hidden_layers",
                "gamma",
                "tau",
                "noise_scale",
                "buffer_size",
                "batch_size",
                "start_train_step",
                "actor_lr",
                "critic_lr",
                "buffer",
            ],
        );
        if let Some(b) = t.opt_str("buffer")? {
            if b != "replay" {
                return Err(AgentError::Incompatible(format!("ddpg learns from a 'replay' buffer, not '{b}'")));
            }
        }
        for (key, want) in [("network", "deterministic_actor"), ("critic_network", "q_critic")] {
            let got = t.str_or(key, want)?;
            if got != want {
                return Err(AgentError::Incompatible(format!("ddpg needs {key} '{want}', got '{got}'")));
            }
        }
        let ActionSpace::Continuous { low, high } = &ctx.env.action_space else {
            return Err(AgentError::Incompatible("ddpg needs a continuous action space".into()));
        };
        let hidden = super::hidden_sizes(t, 64, 2)?;
        let cfg = Self {
            actor_hidden: hidden.clone(),
            critic_hidden: hidden,
            gamma: check_gamma(t.f64_or("gamma", 0.99)?)?,
            tau: t.f64_or("tau", 0.005)?,
            noise_scale: t.f64_or("noise_scale", 0.1)?,
            buffer_size: t.usize_or("buffer_size", 100_000)?,
            batch_size: t.usize_or("batch_size", 64)?,
            start_train_step: t.usize_or("start_train_step", 1000)?,
            actor_lr: t.opt_f64("actor_lr")?,
            critic_lr: t.opt_f64("critic_lr")?,
            low: low.clone(),
            high: high.clone(),
        };
        if !(cfg.tau > 0.0 && cfg.tau <= 1.0) {
            return Err(AgentError::Config(format!("tau must lie in (0, 1], got {}", cfg.tau)));
        }
        if cfg.batch_size == 0 || cfg.start_train_step < cfg.batch_size || cfg.buffer_size < cfg.batch_size {
            return Err(AgentError::Config(
                "need 0 < batch_size <= start_train_step and batch_size <= buffer_size".into(),
            ));
        }
        Ok(cfg)
    }
}

fn zero_grads(params: Vec<&mut crate::nn::Parameter>) {
    for p in params {
        p.zero_grad();
    }
}

/// Mean squared error between `Q(s, a)` and `targets`; accumulates critic
/// gradients (after zeroing them).
pub fn critic_loss_and_grad(critic: &mut CriticNet, states: &Matrix, actions: &Matrix, targets: &[f64]) -> Result<f64> {
    zero_grads(critic.params_mut());
    let q = critic.forward(states, actions)?;
    check_finite(&q, "critic output")?;
    let b = q.rows();
    let inv = 1.0 / b as f64;
    let mut dq = Matrix::zeros(b, 1);
    let mut loss = 0.0;
    for i in 0..b {
        let e = q.get(i, 0) - targets[i];
        loss += e * e * inv;
        dq.set(i, 0, 2.0 * e * inv);
    }
    critic.backward(&dq)?;
    Ok(loss)
}

/// `−mean_s Q(s, μ(s))`; accumulates actor gradients through the critic and
/// leaves critic gradients zeroed.
pub fn actor_loss_and_grad(actor: &mut ActorNet, critic: &mut CriticNet, states: &Matrix) -> Result<f64> {
    zero_grads(actor.params_mut());
    let a = actor.forward(states)?;
    let q = critic.forward(states, &a)?;
    check_finite(&q, "critic output")?;
    let b = q.rows();
    let loss = -q.data().iter().sum::<f64>() / b as f64;
    let dq = Matrix::filled(b, 1, -1.0 / b as f64);
    let da = critic.backward(&dq)?;
    zero_grads(critic.params_mut());
    actor.backward(&da)?;
    Ok(loss)
}

/// Deterministic actor plus Gaussian exploration noise, clipped to bounds.
#[derive(Debug, Clone)]
pub struct DeterministicPolicy {
    actor: ActorNet,
    noise_std: Vec<f64>,
}

fn deterministic_act(actor: &ActorNet, noise_std: &[f64], state: &[f64], training: bool, rng: &mut dyn RngCore) -> Result<ActOutput> {
    let x = rows_matrix([state].into_iter(), actor_in_dim(actor, state.len())?)?;
    let a = actor.infer(&x)?;
    check_finite(&a, "actor output")?;
    let (low, high) = actor.bounds();
    let mut out = a.row(0).to_vec();
    if training {
        for (j, v) in out.iter_mut().enumerate() {
            let n: f64 = StandardNormal.sample(rng);
            *v = (*v + noise_std[j] * n).clamp(low[j], high[j]);
        }
    }
    Ok(ActOutput {
        action: Action::Continuous(out),
        policy: None,
    })
}

fn actor_in_dim(actor: &ActorNet, got: usize) -> Result<usize> {
    let want = actor.params()[0].value.rows();
    if got == want {
        Ok(want)
    } else {
        Err(AgentError::Dimension(format!("state has {got} entries, expected {want}")))
    }
}

impl Policy for DeterministicPolicy {
    fn act(&mut self, state: &[f64], _step: usize, training: bool, rng: &mut dyn RngCore) -> Result<ActOutput> {
        deterministic_act(&self.actor, &self.noise_std, state, training, rng)
    }

    fn params(&self) -> Vec<Matrix> {
        param_values(&self.actor.params())
    }

    fn set_params(&mut self, params: &[Matrix]) -> Result<()> {
        Ok(load_param_values(self.actor.params_mut(), params)?)
    }

    fn box_clone(&self) -> Box<dyn Policy> {
        Box::new(self.clone())
    }
}

pub struct DdpgAgent {
    cfg: DdpgConfig,
    actor: ActorNet,
    critic: CriticNet,
    actor_target: ActorNet,
    critic_target: CriticNet,
    actor_opt: Optimizer,
    critic_opt: Optimizer,
    buffer: ReplayBuffer,
    noise_std: Vec<f64>,
    act_rng: ChaCha8Rng,
    learn_rng: ChaCha8Rng,
    env_steps: u64,
    learns: u64,
    cadence: LearnCadence,
}

impl DdpgAgent {
    pub fn new(cfg: DdpgConfig, optim: &Table, ctx: &BuildContext) -> Result<Self> {
        let dim = cfg.low.len();
        let mut rng = derive_rng(ctx.seed, 0);
        let extra = NetworkExtra {
            action_low: cfg.low.clone(),
            action_high: cfg.high.clone(),
            ..NetworkExtra::default()
        };
        let actor_spec = NetworkSpec {
            hidden: cfg.actor_hidden.clone(),
            extra: extra.clone(),
            ..NetworkSpec::new("deterministic_actor", ctx.env.obs_dim, dim)
        };
        let critic_spec = NetworkSpec {
            hidden: cfg.critic_hidden.clone(),
            extra,
            ..NetworkSpec::new("q_critic", ctx.env.obs_dim, dim)
        };
        let (Network::Actor(actor), Network::Critic(critic)) =
            (build_network(&actor_spec, &mut rng)?, build_network(&critic_spec, &mut rng)?)
        else {
            unreachable!("registry names map to these families")
        };
        let noise_std = cfg.low.iter().zip(&cfg.high).map(|(l, h)| cfg.noise_scale * (h - l)).collect();
        Ok(Self {
            actor_opt: super::build_optimizer(optim, cfg.actor_lr)?,
            critic_opt: super::build_optimizer(optim, cfg.critic_lr)?,
            buffer: ReplayBuffer::new(cfg.buffer_size)?,
            actor_target: actor.clone(),
            critic_target: critic.clone(),
            actor,
            critic,
            noise_std,
            act_rng: derive_rng(ctx.seed, 1),
            learn_rng: derive_rng(ctx.seed, 2),
            env_steps: 0,
            learns: 0,
            cadence: LearnCadence::default(),
            cfg,
        })
    }

    fn ready_to_learn(&self) -> bool {
        self.env_steps as usize >= self.cfg.start_train_step && self.buffer.len() >= self.cfg.batch_size
    }

    fn learn_from_storage(&mut self) -> Result<LearnStats> {
        let idx = self.buffer.sample_indices(self.cfg.batch_size, &mut self.learn_rng)?;
        let batch: Vec<Transition> = idx.iter().map(|&i| self.buffer.get(i).expect("sampled").clone()).collect();
        self.learn_on(&batch)
    }

    pub fn actor(&self) -> &ActorNet {
        &self.actor
    }

    pub fn critic(&self) -> &CriticNet {
        &self.critic
    }

    fn learn_on(&mut self, batch: &[Transition]) -> Result<LearnStats> {
        let dim = self.cfg.low.len();
        let obs = actor_in_dim(&self.actor, batch[0].state.len())?;
        let states = rows_matrix(batch.iter().map(|t| t.state.as_slice()), obs)?;
        let next = rows_matrix(batch.iter().map(|t| t.next_state.as_slice()), obs)?;
        let actions = rows_matrix(
            batch.iter().map(|t| t.action.continuous().unwrap_or(&[])),
            dim,
        )?;
        let next_a = self.actor_target.infer(&next)?;
        let next_q = self.critic_target.infer(&next, &next_a)?;
        let targets: Vec<f64> = batch
            .iter()
            .enumerate()
            .map(|(i, t)| t.reward + bootstrap_discount(self.cfg.gamma, t.span, t.done) * next_q.get(i, 0))
            .collect();
        let critic_loss = critic_loss_and_grad(&mut self.critic, &states, &actions, &targets)?;
        self.critic_opt.step(self.critic.params_mut())?;
        let actor_loss = actor_loss_and_grad(&mut self.actor, &mut self.critic, &states)?;
        self.actor_opt.step(self.actor.params_mut())?;
        soft_update(self.actor_target.params_mut(), self.actor.params(), self.cfg.tau);
        soft_update(self.critic_target.params_mut(), self.critic.params(), self.cfg.tau);
        self.learns += 1;
        let s = LearnStats::new(critic_loss + actor_loss)
            .with("critic_loss", critic_loss)
            .with("actor_loss", actor_loss);
        if !s.is_finite() {
            return Err(AgentError::NonFinite("ddpg loss".into()));
        }
        Ok(s)
    }
}

impl Agent for DdpgAgent {
    fn name(&self) -> &str {
        "ddpg"
    }

    fn act(&mut self, state: &[f64], _step: usize, training: bool) -> Result<ActOutput> {
        deterministic_act(&self.actor, &self.noise_std, state, training, &mut self.act_rng)
    }

    fn policy(&self) -> Box<dyn Policy> {
        Box::new(DeterministicPolicy {
            actor: self.actor.clone(),
            noise_std: self.noise_std.clone(),
        })
    }

    fn policy_params(&self) -> Vec<Matrix> {
        param_values(&self.actor.params())
    }

    fn process(&mut self, _actor_id: usize, transitions: Vec<Transition>) -> Result<Option<LearnStats>> {
        let mut stats = Vec::new();
        let n = transitions.len();
        for t in transitions {
            self.buffer.push(t);
            self.env_steps += 1;
            if self.cadence == LearnCadence::PerStep && self.ready_to_learn() {
                stats.push(self.learn_from_storage()?);
            }
        }
        if self.cadence == LearnCadence::PerBatch && n > 0 && self.ready_to_learn() {
            stats.push(self.learn_from_storage()?);
        }
        Ok(LearnStats::mean(&stats))
    }

    fn set_cadence(&mut self, cadence: LearnCadence) {
        self.cadence = cadence;
    }

    fn learn_batch(&mut self, batch: &[Transition]) -> Result<LearnStats> {
        if batch.is_empty() {
            return Err(AgentError::Dimension("empty batch".into()));
        }
        self.learn_on(batch)
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
                param_values(&self.actor.params()),
                param_values(&self.critic.params()),
                param_values(&self.actor_target.params()),
                param_values(&self.critic_target.params()),
                self.actor_opt.state_tensors(),
                self.critic_opt.state_tensors(),
            ],
            &[self.env_steps, self.learns],
        )
    }

    fn load_state_tensors(&mut self, tensors: &[Matrix]) -> Result<()> {
        let (g, counters) = unpack_state(tensors, 2)?;
        if g.len() != 6 {
            return Err(AgentError::State("ddpg state has 6 groups".into()));
        }
        load_param_values(self.actor.params_mut(), &g[0])?;
        load_param_values(self.critic.params_mut(), &g[1])?;
        load_param_values(self.actor_target.params_mut(), &g[2])?;
        load_param_values(self.critic_target.params_mut(), &g[3])?;
        self.actor_opt.load_state_tensors(&g[4])?;
        self.critic_opt.load_state_tensors(&g[5])?;
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
