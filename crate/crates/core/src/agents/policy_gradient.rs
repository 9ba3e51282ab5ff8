use std::collections::BTreeMap;

use rand::seq::SliceRandom;
use rand::{Rng, RngCore};
use rand_chacha::ChaCha8Rng;

use super::targets::{argmax, discounted_returns, gae_with_next, ppo_loss, whiten, PpoLossConfig};
use super::{
    check_finite, check_gamma, derive_rng, hidden_sizes, load_rngs, pack_state, reject_replay_options, rows_matrix,
    unpack_state, ActOutput, Agent, AgentError, BuildContext, LearnStats, Policy, Result, RngState,
};
use crate::buffers::{Action, PolicyOutput, RolloutBuffer, Transition};
use crate::config::{warn_unknown_keys, Table};
use crate::envs::ActionSpace;
use crate::networks::{build_network, load_param_values, param_values, Network, NetworkSpec, PolicyNet};
use crate::nn::{clip_grad_norm, log_softmax_rows, softmax_rows, Matrix, Optimizer};

/// Samples from (or, in evaluation, takes the argmax of) a softmax policy.
#[derive(Debug, Clone)]
pub struct CategoricalPolicy {
    net: PolicyNet,
}

impl CategoricalPolicy {
    pub fn new(net: PolicyNet) -> Self {
        Self { net }
    }

    pub fn probabilities(&self, state: &[f64]) -> Result<Vec<f64>> {
        let (logits, _) = self.net.infer(&state_row(state, self.net.in_dim())?)?;
        Ok(softmax_rows(logits.data(), logits.cols()))
    }
}

fn state_row(state: &[f64], dim: usize) -> Result<Matrix> {
    if state.len() != dim {
        return Err(AgentError::Dimension(format!("state has {} entries, expected {dim}", state.len())));
    }
    Ok(Matrix::row_vector(state))
}

fn categorical_act(net: &PolicyNet, state: &[f64], training: bool, rng: &mut dyn RngCore) -> Result<ActOutput> {
    let (logits, value) = net.infer(&state_row(state, net.in_dim())?)?;
    check_finite(&logits, "policy logits")?;
    let k = logits.cols();
    let logp = log_softmax_rows(logits.data(), k);
    let a = if training {
        let u: f64 = rng.random();
        let mut acc = 0.0;
        let mut chosen = k - 1;
        for (i, lp) in logp.iter().enumerate() {
            acc += lp.exp();
            if u < acc {
                chosen = i;
                break;
            }
        }
        chosen
    } else {
        argmax(logits.row(0))
    };
    Ok(ActOutput {
        action: Action::Discrete(a),
        policy: Some(PolicyOutput {
            log_prob: logp[a],
            value: value.map(|v| v.get(0, 0)).unwrap_or(0.0),
        }),
    })
}

impl Policy for CategoricalPolicy {
    fn act(&mut self, state: &[f64], _step: usize, training: bool, rng: &mut dyn RngCore) -> Result<ActOutput> {
        categorical_act(&self.net, state, training, rng)
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

fn build_policy_net(network: &str, hidden: &[usize], ctx: &BuildContext, who: &str, need_value: bool) -> Result<PolicyNet> {
    let ActionSpace::Discrete(n) = ctx.env.action_space else {
        return Err(AgentError::Incompatible(format!("{who} needs a discrete action space")));
    };
    let spec = NetworkSpec {
        hidden: hidden.to_vec(),
        ..NetworkSpec::new(network, ctx.env.obs_dim, n)
    };
    let mut rng = derive_rng(ctx.seed, 0);
    match build_network(&spec, &mut rng)? {
        Network::Policy(p) if p.has_value() || !need_value => Ok(p),
        _ => Err(AgentError::Incompatible(format!(
            "{who} needs a {} network, '{network}' is not one",
            if need_value { "policy-value" } else { "policy" }
        ))),
    }
}

fn discrete_actions(batch: &[Transition], n: usize) -> Result<Vec<usize>> {
    batch
        .iter()
        .map(|t| match t.action {
            Action::Discrete(a) if a < n => Ok(a),
            _ => Err(AgentError::Dimension("stored action is not a valid discrete action".into())),
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq)]
pub struct ReinforceConfig {
    pub network: String,
    pub hidden: Vec<usize>,
    pub gamma: f64,
    pub grad_clip: Option<f64>,
}

impl ReinforceConfig {
    pub fn from_table(t: &Table) -> Result<Self> {
        warn_unknown_keys(t, &["network", "hidden_size", "hidden_layers", "gamma", "grad_clip", "buffer"]);
        reject_replay_options(t, "reinforce")?;
        Ok(Self {
            network: t.str_or("network", "discrete_policy")?,
            hidden: hidden_sizes(t, 64, 2)?,
            gamma: check_gamma(t.f64_or("gamma", 0.99)?)?,
            grad_clip: t.opt_f64("grad_clip")?.filter(|c| *c > 0.0),
        })
    }
}

/// Monte Carlo policy gradient, one update per finished episode.
pub struct ReinforceAgent {
    cfg: ReinforceConfig,
    net: PolicyNet,
    optimizer: Optimizer,
    episodes: BTreeMap<usize, Vec<Transition>>,
    act_rng: ChaCha8Rng,
    env_steps: u64,
    learns: u64,
}

impl ReinforceAgent {
    pub fn new(cfg: ReinforceConfig, optim: &Table, ctx: &BuildContext) -> Result<Self> {
        let net = build_policy_net(&cfg.network, &cfg.hidden, ctx, "reinforce", false)?;
        Ok(Self {
            optimizer: super::build_optimizer(optim, None)?,
            net,
            episodes: BTreeMap::new(),
            act_rng: derive_rng(ctx.seed, 1),
            env_steps: 0,
            learns: 0,
            cfg,
        })
    }

    /// `−Σ_t log π(a_t|s_t)·Ĝ_t` with whitened returns, and one optimizer step.
    pub fn learn_episode(&mut self, episode: &[Transition]) -> Result<LearnStats> {
        if episode.is_empty() {
            return Ok(LearnStats::new(0.0));
        }
        let k = self.net.num_actions();
        let actions = discrete_actions(episode, k)?;
        let rewards: Vec<f64> = episode.iter().map(|t| t.reward).collect();
        let g_hat = whiten(&discounted_returns(&rewards, self.cfg.gamma));
        let states = rows_matrix(episode.iter().map(|t| t.state.as_slice()), self.net.in_dim())?;
        let (logits, _) = self.net.forward(&states)?;
        check_finite(&logits, "policy logits")?;
        let p = softmax_rows(logits.data(), k);
        let logp = log_softmax_rows(logits.data(), k);
        let mut loss = 0.0;
        let mut dlogits = Matrix::zeros(episode.len(), k);
        for (i, (&a, &g)) in actions.iter().zip(&g_hat).enumerate() {
            loss -= logp[i * k + a] * g;
            let row = dlogits.row_mut(i);
            for j in 0..k {
                let ind = if j == a { 1.0 } else { 0.0 };
                row[j] = -g * (ind - p[i * k + j]);
            }
        }
        self.net.backward(&dlogits, None)?;
        let mut params = self.net.params_mut();
        if let Some(c) = self.cfg.grad_clip {
            clip_grad_norm(&mut params, c)?;
        }
        self.optimizer.step(params)?;
        self.learns += 1;
        Ok(LearnStats::new(loss).with("episode_return", rewards.iter().sum()))
    }
}

impl Agent for ReinforceAgent {
    fn name(&self) -> &str {
        "reinforce"
    }

    fn act(&mut self, state: &[f64], _step: usize, training: bool) -> Result<ActOutput> {
        categorical_act(&self.net, state, training, &mut self.act_rng)
    }

    fn policy(&self) -> Box<dyn Policy> {
        Box::new(CategoricalPolicy::new(self.net.clone()))
    }

    fn policy_params(&self) -> Vec<Matrix> {
        param_values(&self.net.params())
    }

    fn process(&mut self, actor_id: usize, transitions: Vec<Transition>) -> Result<Option<LearnStats>> {
        let mut stats = Vec::new();
        for t in transitions {
            self.env_steps += 1;
            let end = t.episode_end();
            let ep = self.episodes.entry(actor_id).or_default();
            ep.push(t);
            if end {
                let ep = std::mem::take(ep);
                stats.push(self.learn_episode(&ep)?);
            }
        }
        Ok(LearnStats::mean(&stats))
    }

    fn learn_batch(&mut self, batch: &[Transition]) -> Result<LearnStats> {
        self.learn_episode(batch)
    }

    fn env_steps(&self) -> u64 {
        self.env_steps
    }

    fn learn_count(&self) -> u64 {
        self.learns
    }

    fn state_tensors(&self) -> Vec<Matrix> {
        pack_state(
            vec![param_values(&self.net.params()), self.optimizer.state_tensors()],
            &[self.env_steps, self.learns],
        )
    }

    fn load_state_tensors(&mut self, tensors: &[Matrix]) -> Result<()> {
        let (groups, counters) = unpack_state(tensors, 2)?;
        if groups.len() != 2 {
            return Err(AgentError::State("reinforce state has 2 groups".into()));
        }
        load_param_values(self.net.params_mut(), &groups[0])?;
        self.optimizer.load_state_tensors(&groups[1])?;
        self.env_steps = counters[0];
        self.learns = counters[1];
        Ok(())
    }

    fn rng_states(&self) -> Vec<RngState> {
        vec![RngState::capture(&self.act_rng)]
    }

    fn load_rng_states(&mut self, states: &[RngState]) -> Result<()> {
        load_rngs(&mut [&mut self.act_rng], states)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PpoConfig {
    pub network: String,
    pub hidden: Vec<usize>,
    pub gamma: f64,
    pub gae_lambda: f64,
    /// Transitions gathered across all actors before each update.
    pub n_step: usize,
    pub batch_size: usize,
    pub epochs: usize,
    pub loss: PpoLossConfig,
    pub grad_clip: Option<f64>,
}

impl PpoConfig {
    pub fn from_table(t: &Table) -> Result<Self> {
        warn_unknown_keys(
            t,
            &[
                "network",
                "hidden_size",
                "hidden_layers",
                "gamma",
                "gae_lambda",
                "n_step",
                "batch_size",
                "n_epoch",
                "clip_ratio",
                "vf_coef",
                "ent_coef",
                "grad_clip",
                "buffer",
            ],
        );
        reject_replay_options(t, "ppo")?;
        let d = PpoLossConfig::default();
        let cfg = Self {
            network: t.str_or("network", "discrete_policy_value")?,
            hidden: hidden_sizes(t, 64, 2)?,
            gamma: check_gamma(t.f64_or("gamma", 0.99)?)?,
            gae_lambda: t.f64_or("gae_lambda", 0.95)?,
            n_step: t.usize_or("n_step", 128)?,
            batch_size: t.usize_or("batch_size", 32)?,
            epochs: t.usize_or("n_epoch", 3)?,
            loss: PpoLossConfig {
                clip_ratio: t.f64_or("clip_ratio", d.clip_ratio)?,
                value_coef: t.f64_or("vf_coef", d.value_coef)?,
                entropy_coef: t.f64_or("ent_coef", d.entropy_coef)?,
            },
            grad_clip: match t.f64_or("grad_clip", 0.5)? {
                c if c > 0.0 => Some(c),
                _ => None,
            },
        };
        if cfg.n_step == 0 || cfg.batch_size == 0 || cfg.epochs == 0 {
            return Err(AgentError::Config("n_step, batch_size and n_epoch must be positive".into()));
        }
        if !(0.0..=1.0).contains(&cfg.gae_lambda) || !(cfg.loss.clip_ratio > 0.0) {
            return Err(AgentError::Config("need gae_lambda in [0, 1] and clip_ratio > 0".into()));
        }
        Ok(cfg)
    }
}

/// Clipped-surrogate actor-critic over a shared-trunk policy-value network.
pub struct PpoAgent {
    cfg: PpoConfig,
    net: PolicyNet,
    optimizer: Optimizer,
    rollouts: BTreeMap<usize, RolloutBuffer>,
    act_rng: ChaCha8Rng,
    learn_rng: ChaCha8Rng,
    env_steps: u64,
    learns: u64,
}

impl PpoAgent {
    pub fn new(cfg: PpoConfig, optim: &Table, ctx: &BuildContext) -> Result<Self> {
        let net = build_policy_net(&cfg.network, &cfg.hidden, ctx, "ppo", true)?;
        Ok(Self {
            optimizer: super::build_optimizer(optim, None)?,
            net,
            rollouts: BTreeMap::new(),
            act_rng: derive_rng(ctx.seed, 1),
            learn_rng: derive_rng(ctx.seed, 2),
            env_steps: 0,
            learns: 0,
            cfg,
        })
    }

    pub fn net(&self) -> &PolicyNet {
        &self.net
    }

    fn pending(&self) -> usize {
        self.rollouts.values().map(|r| r.len()).sum()
    }

    /// Log-probabilities and values of the current network for `batch`.
    fn evaluate(&self, batch: &[Transition]) -> Result<Vec<PolicyOutput>> {
        let k = self.net.num_actions();
        let actions = discrete_actions(batch, k)?;
        let states = rows_matrix(batch.iter().map(|t| t.state.as_slice()), self.net.in_dim())?;
        let (logits, values) = self.net.infer(&states)?;
        let logp = log_softmax_rows(logits.data(), k);
        let values = values.expect("policy-value network");
        Ok(actions
            .iter()
            .enumerate()
            .map(|(i, &a)| PolicyOutput {
                log_prob: logp[i * k + a],
                value: values.get(i, 0),
            })
            .collect())
    }

    /// Runs the clipped update over contiguous segments; `ends[i]` cuts the
    /// advantage recursion after entry `i`.
    pub fn update(&mut self, batch: &[Transition], old: &[PolicyOutput], ends: &[bool]) -> Result<LearnStats> {
        let n = batch.len();
        if n == 0 {
            return Ok(LearnStats::new(0.0));
        }
        let k = self.net.num_actions();
        let actions = discrete_actions(batch, k)?;
        let next = rows_matrix(batch.iter().map(|t| t.next_state.as_slice()), self.net.in_dim())?;
        let (_, next_v) = self.net.infer(&next)?;
        let next_v = next_v.expect("policy-value network");
        let values: Vec<f64> = self.evaluate(batch)?.iter().map(|o| o.value).collect();
        let rewards: Vec<f64> = batch.iter().map(|t| t.reward).collect();
        let dones: Vec<bool> = batch.iter().map(|t| t.done).collect();
        let (adv, returns) = gae_with_next(
            &rewards,
            &values,
            next_v.data(),
            &dones,
            ends,
            self.cfg.gamma,
            self.cfg.gae_lambda,
        );
        let adv = whiten(&adv);
        let old_lp: Vec<f64> = old.iter().map(|o| o.log_prob).collect();
        let mut order: Vec<usize> = (0..n).collect();
        let mut stats = Vec::new();
        for _ in 0..self.cfg.epochs {
            order.shuffle(&mut self.learn_rng);
            for chunk in order.chunks(self.cfg.batch_size) {
                let states = rows_matrix(chunk.iter().map(|&i| batch[i].state.as_slice()), self.net.in_dim())?;
                let (logits, v) = self.net.forward(&states)?;
                check_finite(&logits, "policy logits")?;
                let v = v.expect("policy-value network");
                let pick = |x: &[f64]| chunk.iter().map(|&i| x[i]).collect::<Vec<f64>>();
                let acts: Vec<usize> = chunk.iter().map(|&i| actions[i]).collect();
                let out = ppo_loss(&logits, &v, &acts, &pick(&old_lp), &pick(&adv), &pick(&returns), &self.cfg.loss);
                self.net.backward(&out.dlogits, Some(&out.dvalues))?;
                let mut params = self.net.params_mut();
                if let Some(c) = self.cfg.grad_clip {
                    clip_grad_norm(&mut params, c)?;
                }
                self.optimizer.step(params)?;
                stats.push(
                    LearnStats::new(out.total)
                        .with("policy_loss", out.policy)
                        .with("value_loss", out.value)
                        .with("entropy", out.entropy)
                        .with("clip_fraction", out.clip_fraction),
                );
            }
        }
        self.learns += 1;
        let s = LearnStats::mean(&stats).expect("at least one minibatch");
        if !s.is_finite() {
            return Err(AgentError::NonFinite("ppo loss".into()));
        }
        Ok(s)
    }

    fn learn_rollouts(&mut self) -> Result<LearnStats> {
        let mut batch = Vec::new();
        let mut old = Vec::new();
        let mut ends = Vec::new();
        let rollouts = std::mem::take(&mut self.rollouts);
        for (_, mut rb) in rollouts {
            let entries = rb.drain();
            let last = entries.len().saturating_sub(1);
            for (i, e) in entries.into_iter().enumerate() {
                ends.push(e.transition.episode_end() || i == last);
                old.push(PolicyOutput {
                    log_prob: e.log_prob,
                    value: e.value,
                });
                batch.push(e.transition);
            }
        }
        self.update(&batch, &old, &ends)
    }
}

impl Agent for PpoAgent {
    fn name(&self) -> &str {
        "ppo"
    }

    fn act(&mut self, state: &[f64], _step: usize, training: bool) -> Result<ActOutput> {
        categorical_act(&self.net, state, training, &mut self.act_rng)
    }

    fn policy(&self) -> Box<dyn Policy> {
        Box::new(CategoricalPolicy::new(self.net.clone()))
    }

    fn policy_params(&self) -> Vec<Matrix> {
        param_values(&self.net.params())
    }

    fn process(&mut self, actor_id: usize, transitions: Vec<Transition>) -> Result<Option<LearnStats>> {
        let missing: Vec<Transition> = transitions.iter().filter(|t| t.policy.is_none()).cloned().collect();
        let mut computed = self.evaluate(&missing)?.into_iter();
        let rb = self.rollouts.entry(actor_id).or_default();
        for t in transitions {
            let p = match t.policy {
                Some(p) => p,
                None => computed.next().expect("one per missing"),
            };
            self.env_steps += 1;
            rb.collect(t, p.log_prob, p.value);
        }
        if self.pending() >= self.cfg.n_step {
            Ok(Some(self.learn_rollouts()?))
        } else {
            Ok(None)
        }
    }

    fn learn_batch(&mut self, batch: &[Transition]) -> Result<LearnStats> {
        let old: Vec<PolicyOutput> = match batch.iter().map(|t| t.policy).collect::<Option<Vec<_>>>() {
            Some(o) => o,
            None => self.evaluate(batch)?,
        };
        let mut ends: Vec<bool> = batch.iter().map(|t| t.episode_end()).collect();
        if let Some(l) = ends.last_mut() {
            *l = true;
        }
        self.update(batch, &old, &ends)
    }

    fn env_steps(&self) -> u64 {
        self.env_steps
    }

    fn learn_count(&self) -> u64 {
        self.learns
    }

    fn state_tensors(&self) -> Vec<Matrix> {
        pack_state(
            vec![param_values(&self.net.params()), self.optimizer.state_tensors()],
            &[self.env_steps, self.learns],
        )
    }

    fn load_state_tensors(&mut self, tensors: &[Matrix]) -> Result<()> {
        let (groups, counters) = unpack_state(tensors, 2)?;
        if groups.len() != 2 {
            return Err(AgentError::State("ppo state has 2 groups".into()));
        }
        load_param_values(self.net.params_mut(), &groups[0])?;
        self.optimizer.load_state_tensors(&groups[1])?;
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
