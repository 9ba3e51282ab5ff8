use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::{discrete_action, Env, EnvError, EnvSpec, EpisodeClock, StepResult};
use crate::buffers::Action;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CartPoleParams {
    pub gravity: f64,
    pub cart_mass: f64,
    pub pole_mass: f64,
    /// Distance from the pivot to the pole's centre of mass.
    pub half_length: f64,
    pub force_mag: f64,
    pub dt: f64,
    pub x_threshold: f64,
    pub theta_threshold: f64,
}

impl Default for CartPoleParams {
    fn default() -> Self {
        Self {
            gravity: 9.8,
            cart_mass: 1.0,
            pole_mass: 0.1,
            half_length: 0.5,
            force_mag: 10.0,
            dt: 0.02,
            x_threshold: 2.4,
            theta_threshold: 12.0 * std::f64::consts::PI / 180.0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct CartPoleState {
    pub x: f64,
    pub x_dot: f64,
    pub theta: f64,
    pub theta_dot: f64,
}

impl CartPoleState {
    pub fn to_vec(self) -> Vec<f64> {
        vec![self.x, self.x_dot, self.theta, self.theta_dot]
    }
}

impl CartPoleParams {
    /// One semi-implicit Euler step under horizontal force `force`.
    pub fn integrate(&self, s: CartPoleState, force: f64) -> CartPoleState {
        let total_mass = self.cart_mass + self.pole_mass;
        let pml = self.pole_mass * self.half_length;
        let (sin, cos) = s.theta.sin_cos();
        let temp = (force + pml * s.theta_dot * s.theta_dot * sin) / total_mass;
        let theta_acc = (self.gravity * sin - cos * temp)
            / (self.half_length * (4.0 / 3.0 - self.pole_mass * cos * cos / total_mass));
        let x_acc = temp - pml * theta_acc * cos / total_mass;
        let x_dot = s.x_dot + self.dt * x_acc;
        let theta_dot = s.theta_dot + self.dt * theta_acc;
        CartPoleState {
            x: s.x + self.dt * x_dot,
            x_dot,
            theta: s.theta + self.dt * theta_dot,
            theta_dot,
        }
    }

    /// Kinetic plus gravitational energy, treating the pole as a uniform rod.
    pub fn energy(&self, s: CartPoleState) -> f64 {
        let (m, big_m, l) = (self.pole_mass, self.cart_mass, self.half_length);
        0.5 * (big_m + m) * s.x_dot * s.x_dot
            + m * l * s.x_dot * s.theta_dot * s.theta.cos()
            + 0.5 * (4.0 / 3.0) * m * l * l * s.theta_dot * s.theta_dot
            + m * self.gravity * l * s.theta.cos()
    }

    pub fn is_terminal(&self, s: CartPoleState) -> bool {
        s.x.abs() > self.x_threshold || s.theta.abs() > self.theta_threshold
    }
}

#[derive(Debug, Clone)]
pub struct CartPole {
    spec: EnvSpec,
    params: CartPoleParams,
    state: CartPoleState,
    clock: EpisodeClock,
}

impl CartPole {
    pub fn new(max_episode_steps: usize) -> Self {
        Self::with_params(CartPoleParams::default(), max_episode_steps)
    }

    pub fn with_params(params: CartPoleParams, max_episode_steps: usize) -> Self {
        Self {
            spec: EnvSpec {
                name: "cartpole".into(),
                obs_dim: 4,
                action_space: super::ActionSpace::Discrete(2),
                max_episode_steps,
            },
            params,
            state: CartPoleState::default(),
            clock: EpisodeClock::default(),
        }
    }

    pub fn params(&self) -> &CartPoleParams {
        &self.params
    }

    pub fn state(&self) -> CartPoleState {
        self.state
    }

    /// Starts an episode from an explicit state.
    pub fn reset_to(&mut self, state: CartPoleState) -> Vec<f64> {
        self.state = state;
        self.clock.reset();
        state.to_vec()
    }
}

impl Env for CartPole {
    fn spec(&self) -> &EnvSpec {
        &self.spec
    }

    fn reset(&mut self, seed: u64) -> Vec<f64> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut u = || rng.random_range(-0.05..0.05);
        let state = CartPoleState {
            x: u(),
            x_dot: u(),
            theta: u(),
            theta_dot: u(),
        };
        self.reset_to(state)
    }

    fn step(&mut self, action: &Action) -> Result<StepResult, EnvError> {
        self.clock.check("cartpole")?;
        let a = discrete_action(action, 2, "cartpole")?;
        let force = if a == 1 { self.params.force_mag } else { -self.params.force_mag };
        self.state = self.params.integrate(self.state, force);
        let terminal = self.params.is_terminal(self.state);
        let (done, truncated) = self.clock.tick(terminal, self.spec.max_episode_steps);
        Ok(StepResult {
            observation: self.state.to_vec(),
            reward: 1.0,
            done,
            truncated,
        })
    }
}
