use rand::{Rng, RngCore};

use super::{BufferError, Transition};

/// Fixed-capacity FIFO ring of transitions with uniform sampling.
#[derive(Debug, Clone)]
pub struct ReplayBuffer {
    capacity: usize,
    storage: Vec<Transition>,
    next: usize,
}

impl ReplayBuffer {
    pub fn new(capacity: usize) -> Result<Self, BufferError> {
        if capacity == 0 {
            return Err(BufferError::Invalid("replay capacity must be positive".into()));
        }
        Ok(Self {
            capacity,
            storage: Vec::new(),
            next: 0,
        })
    }

    pub fn capacity(&self) -> usize {
        self.capacity
    }

    pub fn len(&self) -> usize {
        self.storage.len()
    }

    pub fn is_empty(&self) -> bool {
        self.storage.is_empty()
    }

    /// Stores one transition, returning the slot it occupies.
    pub fn push(&mut self, t: Transition) -> usize {
        let slot = self.next;
        if self.storage.len() < self.capacity {
            self.storage.push(t);
        } else {
            self.storage[slot] = t;
        }
        self.next = (self.next + 1) % self.capacity;
        slot
    }

    pub fn store<I: IntoIterator<Item = Transition>>(&mut self, transitions: I) {
        for t in transitions {
            self.push(t);
        }
    }

    pub fn get(&self, slot: usize) -> Option<&Transition> {
        self.storage.get(slot)
    }

    /// Contents from oldest to newest.
    pub fn iter(&self) -> impl Iterator<Item = &Transition> {
        let split = if self.storage.len() < self.capacity {
            0
        } else {
            self.next
        };
        self.storage[split..].iter().chain(self.storage[..split].iter())
    }

    /// Uniform sampling with replacement; returns slot indices.
    pub fn sample_indices(&self, batch_size: usize, rng: &mut dyn RngCore) -> Result<Vec<usize>, BufferError> {
        if batch_size == 0 || self.storage.len() < batch_size {
            return Err(BufferError::Insufficient {
                requested: batch_size,
                available: self.storage.len(),
            });
        }
        let n = self.storage.len();
        Ok((0..batch_size).map(|_| rng.random_range(0..n)).collect())
    }

    pub fn sample(&self, batch_size: usize, rng: &mut dyn RngCore) -> Result<Vec<&Transition>, BufferError> {
        Ok(self
            .sample_indices(batch_size, rng)?
            .into_iter()
            .map(|i| &self.storage[i])
            .collect())
    }
}
