use rand::RngCore;

use super::NetworkError;
use crate::nn::{Activation, Matrix, Mlp, Parameter};

/// Categorical policy: shared trunk, a logits head and, for actor-critic
/// use, a scalar value head on the same trunk.
#[derive(Debug, Clone)]
pub struct PolicyNet {
    trunk: Mlp,
    logits: Mlp,
    value: Option<Mlp>,
}

impl PolicyNet {
    pub(super) fn build(
        in_dim: usize,
        num_actions: usize,
        hidden: &[usize],
        activation: Activation,
        with_value: bool,
        rng: &mut dyn RngCore,
    ) -> Result<Self, NetworkError> {
        if hidden.is_empty() {
            return Err(NetworkError::Invalid(
                "policy networks need at least one hidden layer".into(),
            ));
        }
        let mut sizes = vec![in_dim];
        sizes.extend_from_slice(hidden);
        let trunk = Mlp::new(&sizes, activation, activation, rng)?;
        let h = *hidden.last().unwrap();
        let logits = Mlp::new(&[h, num_actions], Activation::Identity, Activation::Identity, rng)?;
        let value = if with_value {
            Some(Mlp::new(&[h, 1], Activation::Identity, Activation::Identity, rng)?)
        } else {
            None
        };
        Ok(Self {
            trunk,
            logits,
            value,
        })
    }

    pub fn num_actions(&self) -> usize {
        self.logits.out_dim()
    }

    pub fn in_dim(&self) -> usize {
        self.trunk.in_dim()
    }

    pub fn has_value(&self) -> bool {
        self.value.is_some()
    }

    /// `(logits, values)` without caching.
    pub fn infer(&self, x: &Matrix) -> Result<(Matrix, Option<Matrix>), NetworkError> {
        let h = self.trunk.infer(x, false)?;
        let logits = self.logits.infer(&h, false)?;
        let value = match &self.value {
            Some(v) => Some(v.infer(&h, false)?),
            None => None,
        };
        Ok((logits, value))
    }

    pub fn forward(&mut self, x: &Matrix) -> Result<(Matrix, Option<Matrix>), NetworkError> {
        let h = self.trunk.forward(x, false)?;
        let logits = self.logits.forward(&h, false)?;
        let value = match &mut self.value {
            Some(v) => Some(v.forward(&h, false)?),
            None => None,
        };
        Ok((logits, value))
    }

    pub fn backward(
        &mut self,
        dlogits: &Matrix,
        dvalue: Option<&Matrix>,
    ) -> Result<Matrix, NetworkError> {
        let mut dh = self.logits.backward(dlogits)?;
        if let Some(vnet) = &mut self.value {
            let dv = match dvalue {
                Some(d) => d.clone(),
                None => Matrix::zeros(dlogits.rows(), 1),
            };
            dh.add_assign(&vnet.backward(&dv)?)?;
        }
        Ok(self.trunk.backward(&dh)?)
    }

    pub fn params(&self) -> Vec<&Parameter> {
        let mut p = self.trunk.params();
        p.extend(self.logits.params());
        if let Some(v) = &self.value {
            p.extend(v.params());
        }
        p
    }

    pub fn params_mut(&mut self) -> Vec<&mut Parameter> {
        let mut p = self.trunk.params_mut();
        p.extend(self.logits.params_mut());
        if let Some(v) = &mut self.value {
            p.extend(v.params_mut());
        }
        p
    }
}

/// Deterministic continuous actor squashed into `[low, high]` by tanh.
#[derive(Debug, Clone)]
pub struct ActorNet {
    mlp: Mlp,
    low: Vec<f64>,
    high: Vec<f64>,
    squashed: Option<Matrix>,
}

impl ActorNet {
    pub(super) fn build(
        in_dim: usize,
        hidden: &[usize],
        activation: Activation,
        low: Vec<f64>,
        high: Vec<f64>,
        rng: &mut dyn RngCore,
    ) -> Result<Self, NetworkError> {
        if low.is_empty() || low.len() != high.len() {
            return Err(NetworkError::Invalid(
                "actor bounds need matching non-empty low/high".into(),
            ));
        }
        if low.iter().zip(&high).any(|(l, h)| !(l < h)) {
            return Err(NetworkError::Invalid(format!(
                "actor bounds need low < high, got {low:?} / {high:?}"
            )));
        }
        let mut sizes = vec![in_dim];
        sizes.extend_from_slice(hidden);
        sizes.push(low.len());
        let mlp = Mlp::new(&sizes, activation, Activation::Identity, rng)?;
        Ok(Self {
            mlp,
            low,
            high,
            squashed: None,
        })
    }

    pub fn action_dim(&self) -> usize {
        self.low.len()
    }

    pub fn bounds(&self) -> (&[f64], &[f64]) {
        (&self.low, &self.high)
    }

    fn squash(&self, z: &Matrix) -> (Matrix, Matrix) {
        let d = self.low.len();
        let mut t = z.clone();
        t.data_mut().iter_mut().for_each(|v| *v = v.tanh());
        let mut a = t.clone();
        for (i, v) in a.data_mut().iter_mut().enumerate() {
            let j = i % d;
            let mid = 0.5 * (self.high[j] + self.low[j]);
            let half = 0.5 * (self.high[j] - self.low[j]);
            *v = mid + half * *v;
        }
        (a, t)
    }

    pub fn infer(&self, x: &Matrix) -> Result<Matrix, NetworkError> {
        let z = self.mlp.infer(x, false)?;
        Ok(self.squash(&z).0)
    }

    pub fn forward(&mut self, x: &Matrix) -> Result<Matrix, NetworkError> {
        let z = self.mlp.forward(x, false)?;
        let (a, t) = self.squash(&z);
        self.squashed = Some(t);
        Ok(a)
    }

    pub fn backward(&mut self, dact: &Matrix) -> Result<Matrix, NetworkError> {
        let t = self
            .squashed
            .take()
            .ok_or_else(|| NetworkError::Invalid("actor backward without forward".into()))?;
        let d = self.low.len();
        let mut dz = dact.clone();
        for (i, g) in dz.data_mut().iter_mut().enumerate() {
            let j = i % d;
            let half = 0.5 * (self.high[j] - self.low[j]);
            let tv = t.data()[i];
            *g *= half * (1.0 - tv * tv);
        }
        Ok(self.mlp.backward(&dz)?)
    }

    pub fn params(&self) -> Vec<&Parameter> {
        self.mlp.params()
    }

    pub fn params_mut(&mut self) -> Vec<&mut Parameter> {
        self.mlp.params_mut()
    }
}

/// State-action critic `Q(s, a)` on the concatenated input.
#[derive(Debug, Clone)]
pub struct CriticNet {
    mlp: Mlp,
    state_dim: usize,
}

impl CriticNet {
    pub(super) fn build(
        state_dim: usize,
        action_dim: usize,
        hidden: &[usize],
        activation: Activation,
        rng: &mut dyn RngCore,
    ) -> Result<Self, NetworkError> {
        let mut sizes = vec![state_dim + action_dim];
        sizes.extend_from_slice(hidden);
        sizes.push(1);
        Ok(Self {
            mlp: Mlp::new(&sizes, activation, Activation::Identity, rng)?,
            state_dim,
        })
    }

    pub fn infer(&self, state: &Matrix, action: &Matrix) -> Result<Matrix, NetworkError> {
        Ok(self.mlp.infer(&state.hcat(action)?, false)?)
    }

    pub fn forward(&mut self, state: &Matrix, action: &Matrix) -> Result<Matrix, NetworkError> {
        Ok(self.mlp.forward(&state.hcat(action)?, false)?)
    }

    /// Accumulates critic gradients; returns `dQ/da`.
    pub fn backward(&mut self, dq: &Matrix) -> Result<Matrix, NetworkError> {
        let dx = self.mlp.backward(dq)?;
        Ok(dx.columns(self.state_dim, dx.cols()))
    }

    pub fn params(&self) -> Vec<&Parameter> {
        self.mlp.params()
    }

    pub fn params_mut(&mut self) -> Vec<&mut Parameter> {
        self.mlp.params_mut()
    }
}
