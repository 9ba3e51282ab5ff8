use super::Transition;

#[derive(Debug, Clone, PartialEq)]
pub struct RolloutEntry {
    pub transition: Transition,
    pub log_prob: f64,
    pub value: f64,
}

/// On-policy storage drained in insertion order by each learn.
#[derive(Debug, Clone, Default)]
pub struct RolloutBuffer {
    entries: Vec<RolloutEntry>,
}

impl RolloutBuffer {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn collect(&mut self, transition: Transition, log_prob: f64, value: f64) {
        self.entries.push(RolloutEntry {
            transition,
            log_prob,
            value,
        });
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn entries(&self) -> &[RolloutEntry] {
        &self.entries
    }

    /// Everything collected so far, oldest first; the buffer is left empty.
    pub fn drain(&mut self) -> Vec<RolloutEntry> {
        std::mem::take(&mut self.entries)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::buffers::Action;

    fn t(i: usize) -> Transition {
        Transition::new(vec![i as f64], Action::Discrete(i % 2), i as f64, vec![0.0], false)
    }

    #[test]
    fn drain_preserves_order_then_empties() {
        let mut rb = RolloutBuffer::new();
        for i in 0..5 {
            rb.collect(t(i), -(i as f64), i as f64 * 0.1);
        }
        let out = rb.drain();
        assert_eq!(out.len(), 5);
        assert!(out.iter().enumerate().all(|(i, e)| e.transition.reward == i as f64));
        assert!(rb.drain().is_empty());
    }

    #[test]
    fn interleaved_segments_keep_their_order() {
        let mut rb = RolloutBuffer::new();
        let mut next = 0;
        let mut seen = Vec::new();
        for seg in [3usize, 1, 4, 0, 2] {
            for _ in 0..seg {
                rb.collect(t(next), 0.0, 0.0);
                next += 1;
            }
            seen.extend(rb.drain().into_iter().map(|e| e.transition.reward as usize));
        }
        assert_eq!(seen, (0..next).collect::<Vec<_>>());
    }
}
