use super::BufferError;

/// Complete binary tree over a power-of-two number of leaves where every
/// internal node holds the sum of its two children.
///
/// Node 1 is the root; leaf `i` lives at node `leaves + i`.
#[derive(Debug, Clone)]
pub struct SumTree {
    leaves: usize,
    nodes: Vec<f64>,
}

impl SumTree {
    pub fn new(capacity: usize) -> Self {
        let leaves = capacity.max(1).next_power_of_two();
        Self {
            leaves,
            nodes: vec![0.0; 2 * leaves],
        }
    }

    /// Leaf count (power of two).
    pub fn capacity(&self) -> usize {
        self.leaves
    }

    pub fn total(&self) -> f64 {
        self.nodes[1]
    }

    pub fn get(&self, leaf: usize) -> f64 {
        self.nodes[self.leaves + leaf]
    }

    /// Sets a leaf priority and recomputes the sums on its root path.
    pub fn update(&mut self, leaf: usize, priority: f64) -> Result<(), BufferError> {
        if leaf >= self.leaves {
            return Err(BufferError::Bounds {
                index: leaf,
                capacity: self.leaves,
            });
        }
        if !(priority >= 0.0) || !priority.is_finite() {
            return Err(BufferError::Invalid(format!(
                "priority must be finite and non-negative, got {priority}"
            )));
        }
        let mut n = self.leaves + leaf;
        self.nodes[n] = priority;
        while n > 1 {
            n /= 2;
            self.nodes[n] = self.nodes[2 * n] + self.nodes[2 * n + 1];
        }
        Ok(())
    }

    /// Leaf whose cumulative-priority interval contains `mass`.
    ///
    /// `mass` is clamped into `[0, total)`; a zero-mass subtree is never
    /// entered while its sibling has mass.
    pub fn find(&self, mass: f64) -> usize {
        let mut u = mass.max(0.0);
        let mut n = 1;
        while n < self.leaves {
            let left = self.nodes[2 * n];
            let right = self.nodes[2 * n + 1];
            if (u < left || right <= 0.0) && left > 0.0 {
                n *= 2;
            } else if right > 0.0 {
                u = (u - left).max(0.0);
                n = 2 * n + 1;
            } else {
                n *= 2;
            }
        }
        n - self.leaves
    }

    /// Largest deviation between an internal node and the sum of its children.
    pub fn max_invariant_error(&self) -> f64 {
        (1..self.leaves)
            .map(|n| (self.nodes[n] - self.nodes[2 * n] - self.nodes[2 * n + 1]).abs())
            .fold(0.0, f64::max)
    }
}
