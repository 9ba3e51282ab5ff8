//! Bootstrap targets, distributional projections and policy-gradient
//! estimators, written as plain functions over slices so they can be checked
//! in isolation.

use super::AgentError;
use crate::networks::CategoricalSupport;
use crate::nn::{huber_elem, log_softmax_rows, softmax_rows, Matrix};

/// Index of the largest entry; ties go to the lowest index.
pub fn argmax(values: &[f64]) -> usize {
    let mut best = 0;
    for (i, &v) in values.iter().enumerate().skip(1) {
        if v > values[best] {
            best = i;
        }
    }
    best
}

/// `γ^span · (1 − done)`.
pub fn bootstrap_discount(gamma: f64, span: usize, done: bool) -> f64 {
    if done {
        0.0
    } else {
        gamma.powi(span as i32)
    }
}

/// `y = R + γⁿ(1−done)·max_a' Q_target(s', a')` for one transition.
pub fn dqn_target(reward: f64, done: bool, gamma: f64, n: usize, target_q_next: &[f64]) -> f64 {
    let d = bootstrap_discount(gamma, n, done);
    if d == 0.0 {
        reward
    } else {
        reward + d * target_q_next[argmax(target_q_next)]
    }
}

/// `y = R + γⁿ(1−done)·Q_target(s', argmax_a Q_online(s', a))`.
pub fn double_dqn_target(
    reward: f64,
    done: bool,
    gamma: f64,
    n: usize,
    online_q_next: &[f64],
    target_q_next: &[f64],
) -> f64 {
    let d = bootstrap_discount(gamma, n, done);
    if d == 0.0 {
        reward
    } else {
        reward + d * target_q_next[argmax(online_q_next)]
    }
}

/// Projects the shifted distribution `r + discount·z` back onto the support,
/// splitting every atom's mass linearly between its two neighbours.
pub fn project_distribution(next_probs: &[f64], reward: f64, discount: f64, support: &CategoricalSupport) -> Vec<f64> {
    let k = support.n_atoms;
    let atoms = support.atoms();
    let dz = support.delta_z();
    let mut m = vec![0.0; k];
    for (p, z) in next_probs.iter().zip(&atoms) {
        let tz = (reward + discount * z).clamp(support.v_min, support.v_max);
        let b = ((tz - support.v_min) / dz).clamp(0.0, (k - 1) as f64);
        let l = b.floor();
        let u = b.ceil();
        if l == u {
            m[l as usize] += p;
        } else {
            m[l as usize] += p * (u - b);
            m[u as usize] += p * (b - l);
        }
    }
    m
}

/// `−Σ_j m_j log softmax(logits)_j` and its gradient with respect to the
/// logits.
pub fn categorical_cross_entropy(logits: &[f64], target: &[f64]) -> (f64, Vec<f64>) {
    let k = logits.len();
    let logp = log_softmax_rows(logits, k);
    let p = softmax_rows(logits, k);
    let mass: f64 = target.iter().sum();
    let loss = -target.iter().zip(&logp).map(|(m, lp)| m * lp).sum::<f64>();
    let grad = p.iter().zip(target).map(|(pi, mi)| pi * mass - mi).collect();
    (loss, grad)
}

/// Mean over all (i, j) pairs of `|τ_i − 1{u<0}|·Huber_κ(u)/κ`, with
/// `u = target_j − online_i`, and its gradient with respect to `online`.
pub fn quantile_huber_loss(online: &[f64], target: &[f64], taus: &[f64], kappa: f64) -> (f64, Vec<f64>) {
    let n = online.len();
    let m = target.len();
    let scale = 1.0 / (n * m) as f64;
    let mut loss = 0.0;
    let mut grad = vec![0.0; n];
    for i in 0..n {
        for &t in target {
            let u = t - online[i];
            let w = (taus[i] - if u < 0.0 { 1.0 } else { 0.0 }).abs();
            let (h, dh) = huber_elem(u, kappa);
            loss += w * h / kappa * scale;
            grad[i] -= w * dh / kappa * scale;
        }
    }
    (loss, grad)
}

/// Discounted return-to-go of every step of one episode.
pub fn discounted_returns(rewards: &[f64], gamma: f64) -> Vec<f64> {
    let mut out = vec![0.0; rewards.len()];
    let mut g = 0.0;
    for t in (0..rewards.len()).rev() {
        g = rewards[t] + gamma * g;
        out[t] = g;
    }
    out
}

/// `(x − mean)/max(std, 1e-8)` using the population standard deviation.
pub fn whiten(x: &[f64]) -> Vec<f64> {
    if x.is_empty() {
        return Vec::new();
    }
    let n = x.len() as f64;
    let mean = x.iter().sum::<f64>() / n;
    let var = x.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n;
    let std = var.sqrt().max(1e-8);
    x.iter().map(|v| (v - mean) / std).collect()
}

/// Generalized advantage estimation over one trajectory.
///
/// `values` carries one bootstrap entry beyond the rewards.
pub fn gae(rewards: &[f64], values: &[f64], dones: &[bool], gamma: f64, lambda: f64) -> Result<(Vec<f64>, Vec<f64>), AgentError> {
    let n = rewards.len();
    if values.len() != n + 1 || dones.len() != n {
        return Err(AgentError::Dimension(format!(
            "gae needs {n} dones and {} values, got {} and {}",
            n + 1,
            dones.len(),
            values.len()
        )));
    }
    Ok(gae_with_next(rewards, &values[..n], &values[1..], dones, dones, gamma, lambda))
}

/// GAE where each step carries its own next-state value. `ends` marks where
/// the recursion is cut (termination, truncation or the end of a segment);
/// `dones` alone removes the bootstrap.
pub fn gae_with_next(
    rewards: &[f64],
    values: &[f64],
    next_values: &[f64],
    dones: &[bool],
    ends: &[bool],
    gamma: f64,
    lambda: f64,
) -> (Vec<f64>, Vec<f64>) {
    let n = rewards.len();
    let mut adv = vec![0.0; n];
    let mut next_adv = 0.0;
    for t in (0..n).rev() {
        let live = if dones[t] { 0.0 } else { 1.0 };
        let delta = rewards[t] + gamma * live * next_values[t] - values[t];
        let carry = if ends[t] { 0.0 } else { next_adv };
        adv[t] = delta + gamma * lambda * carry;
        next_adv = adv[t];
    }
    let returns = adv.iter().zip(values).map(|(a, v)| a + v).collect();
    (adv, returns)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PpoLossConfig {
    pub clip_ratio: f64,
    pub value_coef: f64,
    pub entropy_coef: f64,
}

impl Default for PpoLossConfig {
    fn default() -> Self {
        Self {
            clip_ratio: 0.2,
            value_coef: 0.5,
            entropy_coef: 0.01,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PpoLoss {
    pub total: f64,
    pub policy: f64,
    pub value: f64,
    pub entropy: f64,
    pub clip_fraction: f64,
    pub dlogits: Matrix,
    pub dvalues: Matrix,
}

/// `−mean min(ρA, clip(ρ, 1±ε)A) + c_v·mean (V−R)² − c_e·mean H` with
/// gradients for the logits and value predictions.
pub fn ppo_loss(
    logits: &Matrix,
    values: &Matrix,
    actions: &[usize],
    old_log_probs: &[f64],
    advantages: &[f64],
    returns: &[f64],
    cfg: &PpoLossConfig,
) -> PpoLoss {
    let b = logits.rows();
    let k = logits.cols();
    let inv = 1.0 / b as f64;
    let p = softmax_rows(logits.data(), k);
    let logp = log_softmax_rows(logits.data(), k);
    let mut dlogits = Matrix::zeros(b, k);
    let mut dvalues = Matrix::zeros(b, 1);
    let (mut pol, mut val, mut ent, mut clipped) = (0.0, 0.0, 0.0, 0.0);
    for i in 0..b {
        let row_p = &p[i * k..(i + 1) * k];
        let row_lp = &logp[i * k..(i + 1) * k];
        let a = actions[i];
        let ratio = (row_lp[a] - old_log_probs[i]).exp();
        let adv = advantages[i];
        let lo = 1.0 - cfg.clip_ratio;
        let hi = 1.0 + cfg.clip_ratio;
        let unclipped = ratio * adv;
        let clipped_term = ratio.clamp(lo, hi) * adv;
        // d(−min)/d logπ(a); zero when the clipped branch is active.
        let dlogp = if unclipped <= clipped_term {
            -unclipped * inv
        } else {
            0.0
        };
        if ratio < lo || ratio > hi {
            clipped += inv;
        }
        pol -= unclipped.min(clipped_term) * inv;
        let h: f64 = -row_p.iter().zip(row_lp).map(|(pk, lk)| pk * lk).sum::<f64>();
        ent += h * inv;
        let g = dlogits.row_mut(i);
        for j in 0..k {
            let indicator = if j == a { 1.0 } else { 0.0 };
            g[j] = dlogp * (indicator - row_p[j]) + cfg.entropy_coef * row_p[j] * (row_lp[j] + h) * inv;
        }
        let e = values.get(i, 0) - returns[i];
        val += e * e * inv;
        dvalues.set(i, 0, cfg.value_coef * 2.0 * e * inv);
    }
    PpoLoss {
        total: pol + cfg.value_coef * val - cfg.entropy_coef * ent,
        policy: pol,
        value: val,
        entropy: ent,
        clip_fraction: clipped,
        dlogits,
        dvalues,
    }
}
