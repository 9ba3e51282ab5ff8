use std::collections::VecDeque;

use super::{BufferError, Transition};

/// Sliding n-step window over one actor's transition stream.
///
/// Once the window holds `n` transitions it emits their aggregate and slides
/// by one. At an episode boundary every pending suffix is flushed, so each
/// raw step still starts exactly one aggregate.
#[derive(Debug, Clone)]
pub struct MultistepQueue {
    n: usize,
    gamma: f64,
    window: VecDeque<Transition>,
}

impl MultistepQueue {
    pub fn new(n: usize, gamma: f64) -> Result<Self, BufferError> {
        if n == 0 {
            return Err(BufferError::Invalid("n_step must be at least 1".into()));
        }
        if !(gamma > 0.0 && gamma <= 1.0) {
            return Err(BufferError::Invalid(format!("gamma must lie in (0, 1], got {gamma}")));
        }
        Ok(Self {
            n,
            gamma,
            window: VecDeque::with_capacity(n),
        })
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn pending(&self) -> usize {
        self.window.len()
    }

    fn aggregate_from(&self, start: usize) -> Transition {
        let first = &self.window[start];
        let last = self.window.back().expect("non-empty window");
        let mut reward = 0.0;
        let mut discount = 1.0;
        for t in self.window.iter().skip(start) {
            reward += discount * t.reward;
            discount *= self.gamma;
        }
        Transition {
            state: first.state.clone(),
            action: first.action.clone(),
            reward,
            next_state: last.next_state.clone(),
            done: last.done,
            truncated: last.truncated,
            span: self.window.len() - start,
            policy: first.policy,
        }
    }

    pub fn push(&mut self, t: Transition) -> Vec<Transition> {
        if self.n == 1 {
            return vec![t];
        }
        let end = t.episode_end();
        self.window.push_back(t);
        if end {
            let out = (0..self.window.len()).map(|s| self.aggregate_from(s)).collect();
            self.window.clear();
            out
        } else if self.window.len() == self.n {
            let out = vec![self.aggregate_from(0)];
            self.window.pop_front();
            out
        } else {
            Vec::new()
        }
    }
}
