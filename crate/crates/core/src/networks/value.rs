use rand::RngCore;

use super::noisy::NoisyLinear;
use super::NetworkError;
use crate::nn::{softmax_rows, Activation, Layer, Linear, Matrix, Mlp, Parameter};

/// Fixed, evenly spaced return atoms for categorical value distributions.
#[derive(Debug, Clone, PartialEq)]
pub struct CategoricalSupport {
    pub n_atoms: usize,
    pub v_min: f64,
    pub v_max: f64,
}

impl CategoricalSupport {
    pub fn new(n_atoms: usize, v_min: f64, v_max: f64) -> Result<Self, NetworkError> {
        if n_atoms < 2 {
            return Err(NetworkError::Invalid(format!(
                "categorical support needs at least 2 atoms, got {n_atoms}"
            )));
        }
        if !(v_min < v_max) {
            return Err(NetworkError::Invalid(format!(
                "categorical support needs v_min < v_max, got [{v_min}, {v_max}]"
            )));
        }
        Ok(Self {
            n_atoms,
            v_min,
            v_max,
        })
    }

    pub fn delta_z(&self) -> f64 {
        (self.v_max - self.v_min) / (self.n_atoms - 1) as f64
    }

    pub fn atoms(&self) -> Vec<f64> {
        let dz = self.delta_z();
        (0..self.n_atoms)
            .map(|i| {
                if i + 1 == self.n_atoms {
                    self.v_max
                } else {
                    self.v_min + i as f64 * dz
                }
            })
            .collect()
    }
}

/// What each action's output block represents.
#[derive(Debug, Clone, PartialEq)]
pub enum OutputKind {
    /// One Q-value per action.
    Scalar,
    /// Logits over the support atoms per action.
    Categorical(CategoricalSupport),
    /// `n` quantile values per action at midpoints `(2i+1)/2n`.
    Quantile { n: usize },
}

impl OutputKind {
    pub fn width(&self) -> usize {
        match self {
            Self::Scalar => 1,
            Self::Categorical(s) => s.n_atoms,
            Self::Quantile { n } => *n,
        }
    }
}

/// Quantile midpoints `τ_i = (2i+1)/2N`.
pub fn quantile_midpoints(n: usize) -> Vec<f64> {
    (0..n).map(|i| (2 * i + 1) as f64 / (2 * n) as f64).collect()
}

/// Dueling aggregation `Q = V + A − mean_a A`, applied per output slot.
///
/// `value` is `batch × width`, `advantage` is `batch × (actions·width)`,
/// action-major.
pub fn dueling_combine(value: &Matrix, advantage: &Matrix, actions: usize) -> Matrix {
    let width = value.cols();
    let mut out = advantage.clone();
    for b in 0..advantage.rows() {
        let adv = advantage.row(b);
        let v = value.row(b);
        let row = out.row_mut(b);
        for k in 0..width {
            let mean = (0..actions).map(|a| adv[a * width + k]).sum::<f64>() / actions as f64;
            for a in 0..actions {
                row[a * width + k] = v[k] + adv[a * width + k] - mean;
            }
        }
    }
    out
}

/// Action-value network: shared trunk then either one stream or dueling
/// value/advantage streams, with a scalar, categorical or quantile output
/// per action.
#[derive(Debug, Clone)]
pub struct ValueNet {
    trunk: Mlp,
    advantage: Mlp,
    value: Option<Mlp>,
    num_actions: usize,
    kind: OutputKind,
}

impl ValueNet {
    #[allow(clippy::too_many_arguments)]
    pub(super) fn build(
        in_dim: usize,
        num_actions: usize,
        hidden: &[usize],
        activation: Activation,
        kind: OutputKind,
        dueling: bool,
        noisy_sigma: Option<f64>,
        rng: &mut dyn RngCore,
    ) -> Result<Self, NetworkError> {
        if hidden.is_empty() {
            return Err(NetworkError::Invalid(
                "value networks need at least one hidden layer".into(),
            ));
        }
        let mut sizes = vec![in_dim];
        sizes.extend_from_slice(hidden);
        let trunk = Mlp::new(&sizes, activation, activation, rng)?;
        let h = *hidden.last().unwrap();
        let width = kind.width();
        let head = |out: usize, rng: &mut dyn RngCore| -> Result<Mlp, NetworkError> {
            let layer: Box<dyn Layer> = match noisy_sigma {
                Some(s) => Box::new(NoisyLinear::new(h, out, s, rng)),
                None => Box::new(Linear::new(h, out, rng)),
            };
            Ok(Mlp::from_layers(vec![layer], vec![Activation::Identity])?)
        };
        let advantage = head(num_actions * width, rng)?;
        let value = if dueling { Some(head(width, rng)?) } else { None };
        Ok(Self {
            trunk,
            advantage,
            value,
            num_actions,
            kind,
        })
    }

    pub fn num_actions(&self) -> usize {
        self.num_actions
    }

    pub fn kind(&self) -> &OutputKind {
        &self.kind
    }

    pub fn in_dim(&self) -> usize {
        self.trunk.in_dim()
    }

    pub fn is_dueling(&self) -> bool {
        self.value.is_some()
    }

    pub fn is_noisy(&self) -> bool {
        self.advantage.is_noisy() || self.value.as_ref().is_some_and(|v| v.is_noisy())
    }

    /// Raw outputs `batch × (actions·width)` without caching.
    pub fn infer(&self, x: &Matrix, noisy: bool) -> Result<Matrix, NetworkError> {
        let h = self.trunk.infer(x, noisy)?;
        let adv = self.advantage.infer(&h, noisy)?;
        Ok(match &self.value {
            Some(v) => dueling_combine(&v.infer(&h, noisy)?, &adv, self.num_actions),
            None => adv,
        })
    }

    /// Raw outputs with the cache populated for `backward`.
    pub fn forward(&mut self, x: &Matrix, noisy: bool) -> Result<Matrix, NetworkError> {
        let h = self.trunk.forward(x, noisy)?;
        let adv = self.advantage.forward(&h, noisy)?;
        Ok(match &mut self.value {
            Some(v) => dueling_combine(&v.forward(&h, noisy)?, &adv, self.num_actions),
            None => adv,
        })
    }

    pub fn backward(&mut self, grad: &Matrix) -> Result<Matrix, NetworkError> {
        let dh = match &mut self.value {
            None => self.advantage.backward(grad)?,
            Some(vnet) => {
                let width = self.kind.width();
                let a_n = self.num_actions;
                let mut dv = Matrix::zeros(grad.rows(), width);
                let mut dadv = grad.clone();
                for b in 0..grad.rows() {
                    let g = grad.row(b);
                    for k in 0..width {
                        let s: f64 = (0..a_n).map(|a| g[a * width + k]).sum();
                        dv.set(b, k, s);
                        let mean = s / a_n as f64;
                        for a in 0..a_n {
                            dadv.add_at(b, a * width + k, -mean);
                        }
                    }
                }
                let mut dh = self.advantage.backward(&dadv)?;
                dh.add_assign(&vnet.backward(&dv)?)?;
                dh
            }
        };
        Ok(self.trunk.backward(&dh)?)
    }

    /// Expected action values `batch × actions` from raw outputs.
    pub fn q_values(&self, raw: &Matrix) -> Matrix {
        let a_n = self.num_actions;
        match &self.kind {
            OutputKind::Scalar => raw.clone(),
            OutputKind::Quantile { n } => {
                let mut q = Matrix::zeros(raw.rows(), a_n);
                for b in 0..raw.rows() {
                    let row = raw.row(b);
                    for a in 0..a_n {
                        let s: f64 = row[a * n..(a + 1) * n].iter().sum();
                        q.set(b, a, s / *n as f64);
                    }
                }
                q
            }
            OutputKind::Categorical(support) => {
                let probs = categorical_probs(raw, support.n_atoms);
                expected_from_probs(&probs, raw.rows(), a_n, &support.atoms())
            }
        }
    }

    pub fn resample_noise(&mut self, rng: &mut dyn RngCore) {
        self.trunk.resample_noise(rng);
        self.advantage.resample_noise(rng);
        if let Some(v) = &mut self.value {
            v.resample_noise(rng);
        }
    }

    pub fn clear_cache(&mut self) {
        self.trunk.clear_cache();
        self.advantage.clear_cache();
        if let Some(v) = &mut self.value {
            v.clear_cache();
        }
    }

    pub fn freeze_noise(&mut self) {
        self.trunk.freeze_noise();
        self.advantage.freeze_noise();
        if let Some(v) = &mut self.value {
            v.freeze_noise();
        }
    }

    /// Same network with every noisy layer replaced by its `mu` map.
    pub fn without_noise(&self) -> ValueNet {
        fn strip(m: &Mlp) -> Mlp {
            let layers = m
                .layers()
                .iter()
                .map(|l| -> Box<dyn Layer> {
                    if l.is_noisy() {
                        let p = l.params();
                        Box::new(Linear::from_parts(p[0].value.clone(), p[2].value.clone()))
                    } else {
                        l.clone()
                    }
                })
                .collect();
            Mlp::from_layers(layers, m.activations().to_vec()).expect("same shapes")
        }
        ValueNet {
            trunk: strip(&self.trunk),
            advantage: strip(&self.advantage),
            value: self.value.as_ref().map(strip),
            num_actions: self.num_actions,
            kind: self.kind.clone(),
        }
    }

    pub fn params(&self) -> Vec<&Parameter> {
        let mut p = self.trunk.params();
        p.extend(self.advantage.params());
        if let Some(v) = &self.value {
            p.extend(v.params());
        }
        p
    }

    pub fn params_mut(&mut self) -> Vec<&mut Parameter> {
        let mut p = self.trunk.params_mut();
        p.extend(self.advantage.params_mut());
        if let Some(v) = &mut self.value {
            p.extend(v.params_mut());
        }
        p
    }
}

/// Softmax over each action's atom block. Returns `batch·actions·atoms`
/// probabilities in the same layout as the logits.
pub fn categorical_probs(logits: &Matrix, n_atoms: usize) -> Vec<f64> {
    softmax_rows(logits.data(), n_atoms)
}

/// `Σ_i p_i z_i` per (batch, action).
pub fn expected_from_probs(probs: &[f64], batch: usize, actions: usize, atoms: &[f64]) -> Matrix {
    let k = atoms.len();
    let mut q = Matrix::zeros(batch, actions);
    for b in 0..batch {
        for a in 0..actions {
            let off = (b * actions + a) * k;
            let v: f64 = probs[off..off + k].iter().zip(atoms).map(|(p, z)| p * z).sum();
            q.set(b, a, v);
        }
    }
    q
}
