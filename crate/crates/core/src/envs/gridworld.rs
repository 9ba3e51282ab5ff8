use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::{discrete_action, ActionSpace, Env, EnvError, EnvSpec, EpisodeClock, StepResult};
use crate::buffers::Action;

pub const LEFT: usize = 0;
pub const RIGHT: usize = 1;

/// A 1×L chain starting at 0 with the goal at L−1. Moving left from 0 stays
/// put; arriving at the goal pays 1 and ends the episode.
#[derive(Debug, Clone)]
pub struct GridWorld {
    spec: EnvSpec,
    length: usize,
    position: usize,
    clock: EpisodeClock,
}

impl GridWorld {
    pub fn new(length: usize, max_episode_steps: usize) -> Result<Self, EnvError> {
        if length < 2 {
            return Err(EnvError::Invalid(format!("gridworld length must be at least 2, got {length}")));
        }
        Ok(Self {
            spec: EnvSpec {
                name: "gridworld".into(),
                obs_dim: length,
                action_space: ActionSpace::Discrete(2),
                max_episode_steps,
            },
            length,
            position: 0,
            clock: EpisodeClock::default(),
        })
    }

    pub fn length(&self) -> usize {
        self.length
    }

    pub fn position(&self) -> usize {
        self.position
    }

    pub fn one_hot(&self, position: usize) -> Vec<f64> {
        let mut v = vec![0.0; self.length];
        v[position] = 1.0;
        v
    }

    /// `(next position, reward, done)` for a non-goal position.
    pub fn transition(&self, position: usize, action: usize) -> (usize, f64, bool) {
        let next = if action == RIGHT {
            (position + 1).min(self.length - 1)
        } else {
            position.saturating_sub(1)
        };
        let done = next == self.length - 1;
        (next, if done { 1.0 } else { 0.0 }, done)
    }
}

impl Env for GridWorld {
    fn spec(&self) -> &EnvSpec {
        &self.spec
    }

    fn reset(&mut self, _seed: u64) -> Vec<f64> {
        self.position = 0;
        self.clock.reset();
        self.one_hot(0)
    }

    fn step(&mut self, action: &Action) -> Result<StepResult, EnvError> {
        self.clock.check("gridworld")?;
        let a = discrete_action(action, 2, "gridworld")?;
        let (next, reward, terminal) = self.transition(self.position, a);
        self.position = next;
        let (done, truncated) = self.clock.tick(terminal, self.spec.max_episode_steps);
        Ok(StepResult {
            observation: self.one_hot(next),
            reward,
            done,
            truncated,
        })
    }
}

/// Optimal `Q[s][a]` by repeated Bellman optimality backups. The goal row is
/// zero.
pub fn value_iteration(length: usize, gamma: f64, tol: f64) -> Vec<[f64; 2]> {
    let world = GridWorld::new(length, usize::MAX).expect("length >= 2");
    let mut q: Vec<[f64; 2]> = vec![[0.0; 2]; length];
    loop {
        let mut delta: f64 = 0.0;
        for s in 0..length - 1 {
            for a in [LEFT, RIGHT] {
                let (next, r, done) = world.transition(s, a);
                let boot = if done { 0.0 } else { q[next][0].max(q[next][1]) };
                let new = r + gamma * boot;
                delta = delta.max((new - q[s][a]).abs());
                q[s][a] = new;
            }
        }
        if delta <= tol {
            return q;
        }
    }
}

#[derive(Debug, Clone, Copy)]
pub struct QLearningConfig {
    pub gamma: f64,
    pub alpha: f64,
    pub episodes: usize,
    pub seed: u64,
}

impl Default for QLearningConfig {
    fn default() -> Self {
        Self {
            gamma: 0.99,
            alpha: 0.5,
            episodes: 3000,
            seed: 0,
        }
    }
}

/// Tabular Q-learning under a uniformly random behaviour policy, stepping
/// the environment through the [`Env`] interface.
pub fn tabular_q_learning(length: usize, cfg: QLearningConfig) -> Result<Vec<[f64; 2]>, EnvError> {
    let mut env = GridWorld::new(length, 1000)?;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut q: Vec<[f64; 2]> = vec![[0.0; 2]; length];
    for ep in 0..cfg.episodes {
        env.reset(ep as u64);
        let mut s = 0;
        loop {
            let a = rng.random_range(0..2);
            let r = env.step(&Action::Discrete(a))?;
            let next = env.position();
            let boot = if r.done { 0.0 } else { q[next][0].max(q[next][1]) };
            q[s][a] += cfg.alpha * (r.reward + cfg.gamma * boot - q[s][a]);
            s = next;
            if r.done || r.truncated {
                break;
            }
        }
    }
    Ok(q)
}
