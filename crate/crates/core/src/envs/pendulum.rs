use std::f64::consts::PI;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::{ActionSpace, Env, EnvError, EnvSpec, EpisodeClock, StepResult};
use crate::buffers::Action;

const MAX_SPEED: f64 = 8.0;
const MAX_TORQUE: f64 = 2.0;
const DT: f64 = 0.05;
const G: f64 = 10.0;
const MASS: f64 = 1.0;
const LENGTH: f64 = 1.0;

fn angle_normalize(x: f64) -> f64 {
    (x + PI).rem_euclid(2.0 * PI) - PI
}

/// Swing-up pendulum; never terminates, only truncates.
#[derive(Debug, Clone)]
pub struct Pendulum {
    spec: EnvSpec,
    theta: f64,
    theta_dot: f64,
    clock: EpisodeClock,
    warned: bool,
}

impl Pendulum {
    pub fn new(max_episode_steps: usize) -> Self {
        Self {
            spec: EnvSpec {
                name: "pendulum".into(),
                obs_dim: 3,
                action_space: ActionSpace::Continuous {
                    low: vec![-MAX_TORQUE],
                    high: vec![MAX_TORQUE],
                },
                max_episode_steps,
            },
            theta: 0.0,
            theta_dot: 0.0,
            clock: EpisodeClock::default(),
            warned: false,
        }
    }

    fn observation(&self) -> Vec<f64> {
        vec![self.theta.cos(), self.theta.sin(), self.theta_dot]
    }

    pub fn reset_to(&mut self, theta: f64, theta_dot: f64) -> Vec<f64> {
        self.theta = theta;
        self.theta_dot = theta_dot;
        self.clock.reset();
        self.observation()
    }
}

impl Env for Pendulum {
    fn spec(&self) -> &EnvSpec {
        &self.spec
    }

    fn reset(&mut self, seed: u64) -> Vec<f64> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let theta = rng.random_range(-PI..PI);
        let theta_dot = rng.random_range(-1.0..1.0);
        self.reset_to(theta, theta_dot)
    }

    fn step(&mut self, action: &Action) -> Result<StepResult, EnvError> {
        self.clock.check("pendulum")?;
        let raw = match action {
            Action::Continuous(v) if v.len() == 1 => v[0],
            _ => return Err(EnvError::Invalid("pendulum takes a 1-d continuous action".into())),
        };
        if !raw.is_finite() {
            return Err(EnvError::Invalid(format!("non-finite torque {raw}")));
        }
        let u = raw.clamp(-MAX_TORQUE, MAX_TORQUE);
        if u != raw && !self.warned {
            log::warn!("pendulum torque {raw} clipped to [-{MAX_TORQUE}, {MAX_TORQUE}]");
            self.warned = true;
        }
        let th = angle_normalize(self.theta);
        let reward = -(th * th + 0.1 * self.theta_dot * self.theta_dot + 0.001 * u * u);
        let new_dot = (self.theta_dot
            + (3.0 * G / (2.0 * LENGTH) * self.theta.sin() + 3.0 / (MASS * LENGTH * LENGTH) * u) * DT)
            .clamp(-MAX_SPEED, MAX_SPEED);
        self.theta += new_dot * DT;
        self.theta_dot = new_dot;
        let (done, truncated) = self.clock.tick(false, self.spec.max_episode_steps);
        Ok(StepResult {
            observation: self.observation(),
            reward,
            done,
            truncated,
        })
    }
}
