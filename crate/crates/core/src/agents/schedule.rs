use super::AgentError;

/// Linear decay from `epsilon_init` at step 0 to `epsilon_min` at
/// `explore_ratio · run_step`, constant afterwards.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EpsilonSchedule {
    pub epsilon_init: f64,
    pub epsilon_min: f64,
    pub explore_ratio: f64,
    pub run_step: usize,
}

impl EpsilonSchedule {
    pub fn new(epsilon_init: f64, epsilon_min: f64, explore_ratio: f64, run_step: usize) -> Result<Self, AgentError> {
        let unit = |v: f64| (0.0..=1.0).contains(&v);
        if !unit(epsilon_init) || !unit(epsilon_min) {
            return Err(AgentError::Config(format!(
                "epsilon_init and epsilon_min must lie in [0, 1], got {epsilon_init} and {epsilon_min}"
            )));
        }
        if epsilon_min > epsilon_init {
            return Err(AgentError::Config("epsilon_min exceeds epsilon_init".into()));
        }
        if !(explore_ratio > 0.0 && explore_ratio <= 1.0) {
            return Err(AgentError::Config(format!(
                "explore_ratio must lie in (0, 1], got {explore_ratio}"
            )));
        }
        Ok(Self {
            epsilon_init,
            epsilon_min,
            explore_ratio,
            run_step,
        })
    }

    /// Step at which the minimum is reached.
    pub fn horizon(&self) -> f64 {
        self.explore_ratio * self.run_step as f64
    }

    pub fn epsilon(&self, step: usize) -> f64 {
        let h = self.horizon();
        if step as f64 >= h {
            self.epsilon_min
        } else {
            self.epsilon_init + (self.epsilon_min - self.epsilon_init) * (step as f64 / h)
        }
    }
}
