use std::time::Instant;

use rand::RngCore;
use rand_chacha::ChaCha8Rng;

use super::{InjectedFailure, Result, RuntimeError, Stall};
use crate::agents::{derive_rng, Policy};
use crate::buffers::Transition;
use crate::envs::Env;
use crate::nn::Matrix;

const ACT_STREAM: u64 = 100;
const ENV_STREAM: u64 = 200;

/// An environment driven by an act-only policy snapshot.
pub struct Actor {
    pub id: usize,
    env: Box<dyn Env>,
    policy: Box<dyn Policy>,
    rng: ChaCha8Rng,
    env_rng: ChaCha8Rng,
    obs: Option<Vec<f64>>,
    steps: u64,
    stride: u64,
    stall: Option<f64>,
    fail_after: Option<u64>,
}

impl Actor {
    /// Streams are derived from `(seed, id)`; `stride` is the number of
    /// actors, so actor steps map onto global steps for schedules.
    pub fn new(id: usize, env: Box<dyn Env>, policy: Box<dyn Policy>, seed: u64, stride: usize) -> Self {
        Self {
            id,
            env,
            policy,
            rng: derive_rng(seed, ACT_STREAM + id as u64),
            env_rng: derive_rng(seed, ENV_STREAM + id as u64),
            obs: None,
            steps: 0,
            stride: stride as u64,
            stall: None,
            fail_after: None,
        }
    }

    pub fn with_faults(mut self, stall: Option<Stall>, failure: Option<InjectedFailure>) -> Self {
        self.stall = stall.filter(|s| s.actor_id == self.id).map(|s| s.factor);
        self.fail_after = failure.filter(|f| f.actor_id == self.id).map(|f| f.after_steps);
        self
    }

    pub fn steps(&self) -> u64 {
        self.steps
    }

    pub fn set_params(&mut self, params: &[Matrix]) -> Result<()> {
        Ok(self.policy.set_params(params)?)
    }

    pub fn step(&mut self) -> Result<Transition> {
        if self.fail_after.is_some_and(|n| self.steps >= n) {
            return Err(RuntimeError::Actor {
                actor_id: self.id,
                message: "injected failure".into(),
            });
        }
        let state = match self.obs.take() {
            Some(o) => o,
            None => self.env.reset(self.env_rng.next_u64()),
        };
        let global = self.steps * self.stride + self.id as u64;
        let out = self.policy.act(&state, global as usize, true, &mut self.rng)?;
        let r = self.env.step(&out.action)?;
        self.steps += 1;
        let mut t = Transition::new(state, out.action, r.reward, r.observation.clone(), r.done);
        t.truncated = r.truncated;
        t.policy = out.policy;
        if !(r.done || r.truncated) {
            self.obs = Some(r.observation);
        }
        Ok(t)
    }

    pub fn run_block(&mut self, n: usize) -> Result<Vec<Transition>> {
        let start = Instant::now();
        let block = (0..n).map(|_| self.step()).collect::<Result<Vec<_>>>()?;
        if let Some(factor) = self.stall {
            std::thread::sleep(start.elapsed().mul_f64((factor - 1.0).max(0.0)));
        }
        Ok(block)
    }
}
