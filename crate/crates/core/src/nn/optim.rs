use super::{Matrix, NnError, Parameter, Result};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AdamConfig {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        Self {
            lr: 1e-3,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        }
    }
}

/// Adam moments for a single parameter tensor.
#[derive(Debug, Clone, PartialEq)]
pub struct AdamState {
    pub m: Matrix,
    pub v: Matrix,
    pub t: u64,
    pub config: AdamConfig,
}

impl AdamState {
    pub fn new(shape: (usize, usize), config: AdamConfig) -> Self {
        Self {
            m: Matrix::zeros(shape.0, shape.1),
            v: Matrix::zeros(shape.0, shape.1),
            t: 0,
            config,
        }
    }

    /// Bias-corrected Adam update; zeroes the gradient afterwards.
    pub fn step(&mut self, param: &mut Parameter) -> Result<()> {
        if param.shape() != self.m.shape() {
            return Err(NnError::Dimension(format!(
                "adam state is {:?}, parameter is {:?}",
                self.m.shape(),
                param.shape()
            )));
        }
        self.t += 1;
        let AdamConfig {
            lr,
            beta1,
            beta2,
            eps,
        } = self.config;
        let bc1 = 1.0 - beta1.powi(self.t as i32);
        let bc2 = 1.0 - beta2.powi(self.t as i32);
        let m = self.m.data_mut();
        let v = self.v.data_mut();
        let g = param.grad.data();
        let w = param.value.data_mut();
        for i in 0..w.len() {
            m[i] = beta1 * m[i] + (1.0 - beta1) * g[i];
            v[i] = beta2 * v[i] + (1.0 - beta2) * g[i] * g[i];
            let mhat = m[i] / bc1;
            let vhat = v[i] / bc2;
            w[i] -= lr * mhat / (vhat.sqrt() + eps);
        }
        param.zero_grad();
        Ok(())
    }
}

/// Plain gradient descent; zeroes the gradient afterwards.
pub fn sgd_step(param: &mut Parameter, lr: f64) {
    for (w, g) in param.value.data_mut().iter_mut().zip(param.grad.data()) {
        *w -= lr * g;
    }
    param.zero_grad();
}

/// Rescales all gradients so their global L2 norm is at most `max_norm`.
/// Returns the scale factor applied (1 when no clipping happened).
pub fn clip_grad_norm(params: &mut [&mut Parameter], max_norm: f64) -> Result<f64> {
    if !(max_norm > 0.0) {
        return Err(NnError::Parameter(format!(
            "max_norm must be > 0, got {max_norm}"
        )));
    }
    let norm = params.iter().map(|p| p.grad.sum_squares()).sum::<f64>().sqrt();
    if norm <= max_norm {
        return Ok(1.0);
    }
    let scale = max_norm / norm;
    for p in params.iter_mut() {
        p.grad.scale(scale);
    }
    Ok(scale)
}

#[derive(Debug, Clone, PartialEq)]
pub enum OptimizerKind {
    Adam(AdamConfig),
    Sgd { lr: f64 },
}

impl OptimizerKind {
    pub const NAMES: [&'static str; 2] = ["adam", "sgd"];

    pub fn lr(&self) -> f64 {
        match self {
            Self::Adam(c) => c.lr,
            Self::Sgd { lr } => *lr,
        }
    }
}

/// Optimizer over an ordered list of parameters. State is created lazily,
/// one slot per parameter position.
#[derive(Debug, Clone, PartialEq)]
pub struct Optimizer {
    pub kind: OptimizerKind,
    pub states: Vec<AdamState>,
}

impl Optimizer {
    pub fn new(kind: OptimizerKind) -> Self {
        Self {
            kind,
            states: Vec::new(),
        }
    }

    pub fn step(&mut self, params: Vec<&mut Parameter>) -> Result<()> {
        match &self.kind {
            OptimizerKind::Sgd { lr } => {
                for p in params {
                    sgd_step(p, *lr);
                }
            }
            OptimizerKind::Adam(cfg) => {
                if self.states.is_empty() {
                    self.states = params
                        .iter()
                        .map(|p| AdamState::new(p.shape(), *cfg))
                        .collect();
                }
                if self.states.len() != params.len() {
                    return Err(NnError::Dimension(format!(
                        "optimizer tracks {} parameters, got {}",
                        self.states.len(),
                        params.len()
                    )));
                }
                for (s, p) in self.states.iter_mut().zip(params) {
                    s.step(p)?;
                }
            }
        }
        Ok(())
    }

    /// Moment tensors in a flat list for checkpointing: `m, v` per parameter.
    pub fn state_tensors(&self) -> Vec<Matrix> {
        self.states
            .iter()
            .flat_map(|s| [s.m.clone(), s.v.clone(), Matrix::filled(1, 1, s.t as f64)])
            .collect()
    }

    pub fn load_state_tensors(&mut self, tensors: &[Matrix]) -> Result<()> {
        let cfg = match &self.kind {
            OptimizerKind::Adam(c) => *c,
            OptimizerKind::Sgd { .. } => {
                return if tensors.is_empty() {
                    Ok(())
                } else {
                    Err(NnError::Dimension("sgd carries no state".into()))
                }
            }
        };
        if tensors.len() % 3 != 0 {
            return Err(NnError::Dimension(
                "adam state tensors come in (m, v, t) triples".into(),
            ));
        }
        self.states = tensors
            .chunks(3)
            .map(|c| AdamState {
                m: c[0].clone(),
                v: c[1].clone(),
                t: c[2].data().first().copied().unwrap_or(0.0) as u64,
                config: cfg,
            })
            .collect();
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn param(values: &[f64], grads: &[f64]) -> Parameter {
        let mut p = Parameter::new(Matrix::row_vector(values));
        p.grad = Matrix::row_vector(grads);
        p
    }

    #[test]
    fn adam_first_step_is_lr_times_sign() {
        let cfg = AdamConfig {
            lr: 0.01,
            ..Default::default()
        };
        let grads = [0.3, -2.0, 1e-3, -50.0];
        let mut p = param(&[1.0; 4], &grads);
        let mut s = AdamState::new(p.shape(), cfg);
        s.step(&mut p).unwrap();
        for (w, g) in p.value.data().iter().zip(grads) {
            let delta = 1.0 - w;
            assert!((delta - 0.01 * g.signum()).abs() < 1e-6, "{delta}");
        }
        assert!(p.grad.data().iter().all(|&g| g == 0.0));
        assert_eq!(s.t, 1);
    }

    #[test]
    fn adam_zero_grad_leaves_param() {
        let mut p = param(&[0.7, -0.2], &[0.0, 0.0]);
        let mut s = AdamState::new(p.shape(), AdamConfig::default());
        s.step(&mut p).unwrap();
        assert_eq!(p.value.data(), &[0.7, -0.2]);
        assert_eq!(s.t, 1);
    }

    #[test]
    fn adam_converges_on_quadratic() {
        let cfg = AdamConfig {
            lr: 0.1,
            ..Default::default()
        };
        let mut p = param(&[0.0], &[0.0]);
        let mut s = AdamState::new(p.shape(), cfg);
        for _ in 0..200 {
            let w = p.value.data()[0];
            p.grad.data_mut()[0] = 2.0 * (w - 3.0);
            s.step(&mut p).unwrap();
        }
        assert!((p.value.data()[0] - 3.0).abs() < 0.05);
    }

    #[test]
    fn adam_updates_independent_of_order() {
        let cfg = AdamConfig::default();
        let mut a = param(&[1.0, 2.0], &[0.5, -0.5]);
        let mut b = param(&[3.0], &[2.0]);
        let mut opt1 = Optimizer::new(OptimizerKind::Adam(cfg));
        opt1.step(vec![&mut a, &mut b]).unwrap();
        let mut a2 = param(&[1.0, 2.0], &[0.5, -0.5]);
        let mut b2 = param(&[3.0], &[2.0]);
        let mut opt2 = Optimizer::new(OptimizerKind::Adam(cfg));
        opt2.step(vec![&mut b2, &mut a2]).unwrap();
        assert_eq!(a.value, a2.value);
        assert_eq!(b.value, b2.value);
    }

    #[test]
    fn sgd_example() {
        let mut p = param(&[1.0], &[2.0]);
        sgd_step(&mut p, 0.1);
        assert!((p.value.data()[0] - 0.8).abs() < 1e-15);
    }

    #[test]
    fn clip_scales_by_half() {
        // global norm sqrt(36 + 64) = 10
        let mut a = param(&[0.0], &[6.0]);
        let mut b = param(&[0.0], &[8.0]);
        let s = clip_grad_norm(&mut [&mut a, &mut b], 5.0).unwrap();
        assert!((s - 0.5).abs() < 1e-15);
        assert_eq!(a.grad.data(), &[3.0]);
        assert_eq!(b.grad.data(), &[4.0]);
    }

    #[test]
    fn clip_below_threshold_is_identity() {
        let mut a = param(&[0.0], &[0.3]);
        assert_eq!(clip_grad_norm(&mut [&mut a], 5.0).unwrap(), 1.0);
        assert_eq!(a.grad.data(), &[0.3]);
        assert!(clip_grad_norm(&mut [&mut a], 0.0).is_err());
    }
}
