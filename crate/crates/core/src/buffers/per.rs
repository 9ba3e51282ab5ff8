use rand::{Rng, RngCore};

use super::{BufferError, ReplayBuffer, SumTree, Transition};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PerConfig {
    pub alpha: f64,
    /// Importance-sampling exponent at step 0, annealed linearly to 1.
    pub beta_start: f64,
    pub epsilon_priority: f64,
    /// Steps over which beta reaches 1.
    pub anneal_steps: usize,
}

impl Default for PerConfig {
    fn default() -> Self {
        Self {
            alpha: 0.6,
            beta_start: 0.4,
            epsilon_priority: 1e-6,
            anneal_steps: 100_000,
        }
    }
}

/// A prioritized draw: storage slots with their normalized IS weights.
#[derive(Debug, Clone, PartialEq)]
pub struct PerSample {
    pub indices: Vec<usize>,
    pub weights: Vec<f64>,
}

/// Proportional prioritized replay.
///
/// Leaf `i` of the tree holds `(|δ_i| + ε)^α`; items are drawn with
/// probability proportional to their leaf using one draw per equal-mass
/// stratum.
#[derive(Debug, Clone)]
pub struct PerBuffer {
    storage: ReplayBuffer,
    tree: SumTree,
    config: PerConfig,
    max_priority: f64,
}

impl PerBuffer {
    pub fn new(capacity: usize, config: PerConfig) -> Result<Self, BufferError> {
        if !(0.0..=1.0).contains(&config.alpha) || !(0.0..=1.0).contains(&config.beta_start) {
            return Err(BufferError::Invalid(format!(
                "alpha and beta must lie in [0, 1], got {} and {}",
                config.alpha, config.beta_start
            )));
        }
        if !(config.epsilon_priority > 0.0) {
            return Err(BufferError::Invalid("epsilon_priority must be positive".into()));
        }
        Ok(Self {
            storage: ReplayBuffer::new(capacity)?,
            tree: SumTree::new(capacity),
            config,
            max_priority: 1.0,
        })
    }

    pub fn len(&self) -> usize {
        self.storage.len()
    }

    pub fn is_empty(&self) -> bool {
        self.storage.is_empty()
    }

    pub fn capacity(&self) -> usize {
        self.storage.capacity()
    }

    pub fn tree(&self) -> &SumTree {
        &self.tree
    }

    pub fn max_priority(&self) -> f64 {
        self.max_priority
    }

    pub fn get(&self, slot: usize) -> Option<&Transition> {
        self.storage.get(slot)
    }

    pub fn beta(&self, step: usize) -> f64 {
        let frac = if self.config.anneal_steps == 0 {
            1.0
        } else {
            (step as f64 / self.config.anneal_steps as f64).min(1.0)
        };
        self.config.beta_start + (1.0 - self.config.beta_start) * frac
    }

    /// New transitions enter at the largest priority seen so far.
    pub fn push(&mut self, t: Transition) {
        let slot = self.storage.push(t);
        self.tree
            .update(slot, self.max_priority)
            .expect("slot within capacity");
    }

    pub fn store<I: IntoIterator<Item = Transition>>(&mut self, transitions: I) {
        for t in transitions {
            self.push(t);
        }
    }

    /// Stratified proportional draw with IS weights `(N·P(i))^−β / max_j w_j`.
    pub fn sample(&self, batch_size: usize, step: usize, rng: &mut dyn RngCore) -> Result<PerSample, BufferError> {
        let n = self.storage.len();
        if batch_size == 0 || n < batch_size {
            return Err(BufferError::Insufficient {
                requested: batch_size,
                available: n,
            });
        }
        let total = self.tree.total();
        let segment = total / batch_size as f64;
        let beta = self.beta(step);
        let mut indices = Vec::with_capacity(batch_size);
        let mut weights = Vec::with_capacity(batch_size);
        for i in 0..batch_size {
            let u = segment * (i as f64 + rng.random::<f64>());
            let idx = self.tree.find(u.min(total));
            let prob = self.tree.get(idx) / total;
            indices.push(idx);
            weights.push((n as f64 * prob).powf(-beta));
        }
        let max_w = weights.iter().cloned().fold(f64::MIN_POSITIVE, f64::max);
        for w in weights.iter_mut() {
            *w /= max_w;
        }
        Ok(PerSample { indices, weights })
    }

    pub fn update_priorities(&mut self, indices: &[usize], td_errors: &[f64]) -> Result<(), BufferError> {
        if indices.len() != td_errors.len() {
            return Err(BufferError::Invalid(format!(
                "{} indices but {} td errors",
                indices.len(),
                td_errors.len()
            )));
        }
        for (&i, &td) in indices.iter().zip(td_errors) {
            if i >= self.storage.capacity() {
                return Err(BufferError::Bounds {
                    index: i,
                    capacity: self.storage.capacity(),
                });
            }
            let p = (td.abs() + self.config.epsilon_priority).powf(self.config.alpha);
            self.tree.update(i, p)?;
            self.max_priority = self.max_priority.max(p);
        }
        Ok(())
    }
}
