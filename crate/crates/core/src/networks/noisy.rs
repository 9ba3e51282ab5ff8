use rand::{Rng, RngCore};
use rand_distr::StandardNormal;

use crate::nn::{Layer, Linear, Matrix, Parameter};

/// Factorised-Gaussian noisy linear layer.
///
/// In training mode the effective weight is
/// `w_ij = mu_ij + sigma_ij · f(eps_in_i) · f(eps_out_j)` with
/// `f(e) = sign(e)·√|e|`; the bias uses `f(eps_out_j)`. In evaluation mode
/// only the `mu` parameters are used.
#[derive(Debug, Clone)]
pub struct NoisyLinear {
    pub weight_mu: Parameter,
    pub weight_sigma: Parameter,
    pub bias_mu: Parameter,
    pub bias_sigma: Parameter,
    /// `f(eps_in)`, one entry per input.
    pub epsilon_in: Vec<f64>,
    /// `f(eps_out)`, one entry per output.
    pub epsilon_out: Vec<f64>,
    /// When set, `backward` leaves the sigma gradients untouched.
    pub sigma_frozen: bool,
}

fn scaled_noise(e: f64) -> f64 {
    e.signum() * e.abs().sqrt()
}

impl NoisyLinear {
    /// `mu` uniform in `±1/√fan_in`, every `sigma` entry `sigma_init/√fan_in`.
    pub fn new(in_dim: usize, out_dim: usize, sigma_init: f64, rng: &mut dyn RngCore) -> Self {
        let base = Linear::new(in_dim, out_dim, rng);
        Self::from_linear(&base, sigma_init)
    }

    /// Noisy layer whose `mu` parameters equal the given linear layer.
    pub fn from_linear(base: &Linear, sigma_init: f64) -> Self {
        let (in_dim, out_dim) = base.weight.value.shape();
        let s = sigma_init / (in_dim as f64).sqrt();
        Self {
            weight_mu: Parameter::new(base.weight.value.clone()),
            weight_sigma: Parameter::new(Matrix::filled(in_dim, out_dim, s)),
            bias_mu: Parameter::new(base.bias.value.clone()),
            bias_sigma: Parameter::new(Matrix::filled(1, out_dim, s)),
            epsilon_in: vec![0.0; in_dim],
            epsilon_out: vec![0.0; out_dim],
            sigma_frozen: false,
        }
    }

    /// The `mu` part as a plain linear layer.
    pub fn to_linear(&self) -> Linear {
        Linear::from_parts(self.weight_mu.value.clone(), self.bias_mu.value.clone())
    }

    fn effective(&self) -> (Matrix, Vec<f64>) {
        let (in_dim, out_dim) = self.weight_mu.value.shape();
        let mut w = self.weight_mu.value.clone();
        let sig = self.weight_sigma.value.data();
        let wd = w.data_mut();
        for i in 0..in_dim {
            let ei = self.epsilon_in[i];
            for j in 0..out_dim {
                wd[i * out_dim + j] += sig[i * out_dim + j] * ei * self.epsilon_out[j];
            }
        }
        let b = self
            .bias_mu
            .value
            .data()
            .iter()
            .zip(self.bias_sigma.value.data())
            .zip(&self.epsilon_out)
            .map(|((m, s), e)| m + s * e)
            .collect();
        (w, b)
    }
}

impl Layer for NoisyLinear {
    fn in_dim(&self) -> usize {
        self.weight_mu.value.rows()
    }

    fn out_dim(&self) -> usize {
        self.weight_mu.value.cols()
    }

    fn forward(&self, x: &Matrix, noisy: bool) -> Matrix {
        if noisy {
            let (w, b) = self.effective();
            crate::nn::layer_affine(x, &w, &b)
        } else {
            crate::nn::layer_affine(x, &self.weight_mu.value, self.bias_mu.value.data())
        }
    }

    fn backward(&mut self, x: &Matrix, upstream: &Matrix, noisy: bool) -> Matrix {
        let (in_dim, out_dim) = self.weight_mu.value.shape();
        let w = if noisy {
            self.effective().0
        } else {
            self.weight_mu.value.clone()
        };
        let mut dw = Matrix::zeros(in_dim, out_dim);
        let mut db = Matrix::zeros(1, out_dim);
        let dx = crate::nn::layer_affine_backward(x, upstream, &w, &mut dw, &mut db);
        self.weight_mu.grad.add_assign(&dw).expect("same shape");
        self.bias_mu.grad.add_assign(&db).expect("same shape");
        if noisy && !self.sigma_frozen {
            let dws = self.weight_sigma.grad.data_mut();
            for i in 0..in_dim {
                for j in 0..out_dim {
                    dws[i * out_dim + j] +=
                        dw.data()[i * out_dim + j] * self.epsilon_in[i] * self.epsilon_out[j];
                }
            }
            for (j, g) in self.bias_sigma.grad.data_mut().iter_mut().enumerate() {
                *g += db.data()[j] * self.epsilon_out[j];
            }
        }
        dx
    }

    fn params(&self) -> Vec<&Parameter> {
        vec![
            &self.weight_mu,
            &self.weight_sigma,
            &self.bias_mu,
            &self.bias_sigma,
        ]
    }

    fn params_mut(&mut self) -> Vec<&mut Parameter> {
        vec![
            &mut self.weight_mu,
            &mut self.weight_sigma,
            &mut self.bias_mu,
            &mut self.bias_sigma,
        ]
    }

    fn resample_noise(&mut self, rng: &mut dyn RngCore) {
        for e in self.epsilon_in.iter_mut() {
            *e = scaled_noise(rng.sample(StandardNormal));
        }
        for e in self.epsilon_out.iter_mut() {
            *e = scaled_noise(rng.sample(StandardNormal));
        }
    }

    fn freeze_noise(&mut self) {
        self.sigma_frozen = true;
    }

    fn is_noisy(&self) -> bool {
        true
    }

    fn box_clone(&self) -> Box<dyn Layer> {
        Box::new(self.clone())
    }
}
