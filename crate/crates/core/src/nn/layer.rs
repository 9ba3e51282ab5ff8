use rand::{Rng, RngCore};

use super::{Matrix, NnError, Parameter, Result};

/// A differentiable affine-like layer.
///
/// `forward` is pure; the caller keeps the input around and hands it back to
/// `backward`, which accumulates parameter gradients and returns the gradient
/// with respect to the input. The `noisy` flag selects the training-mode
/// forward for layers with parameter noise and is ignored by plain layers.
pub trait Layer: Send + Sync + std::fmt::Debug {
    fn in_dim(&self) -> usize;
    fn out_dim(&self) -> usize;
    fn forward(&self, x: &Matrix, noisy: bool) -> Matrix;
    fn backward(&mut self, x: &Matrix, upstream: &Matrix, noisy: bool) -> Matrix;
    fn params(&self) -> Vec<&Parameter>;
    fn params_mut(&mut self) -> Vec<&mut Parameter>;
    fn resample_noise(&mut self, _rng: &mut dyn RngCore) {}
    /// Stops noise-scale parameters from receiving gradient.
    fn freeze_noise(&mut self) {}
    fn is_noisy(&self) -> bool {
        false
    }
    fn box_clone(&self) -> Box<dyn Layer>;
}

impl Clone for Box<dyn Layer> {
    fn clone(&self) -> Self {
        self.box_clone()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Activation {
    Relu,
    Tanh,
    Identity,
}

impl Activation {
    pub fn parse(name: &str) -> Option<Self> {
        match name {
            "relu" => Some(Self::Relu),
            "tanh" => Some(Self::Tanh),
            "identity" | "linear" => Some(Self::Identity),
            _ => None,
        }
    }

    fn apply(self, m: &mut Matrix) {
        match self {
            Self::Relu => m.data_mut().iter_mut().for_each(|v| {
                if *v < 0.0 {
                    *v = 0.0
                }
            }),
            Self::Tanh => m.data_mut().iter_mut().for_each(|v| *v = v.tanh()),
            Self::Identity => {}
        }
    }

    /// Gradient through the activation, given its output.
    fn backprop(self, output: &Matrix, grad: &mut Matrix) {
        match self {
            Self::Relu => {
                for (g, o) in grad.data_mut().iter_mut().zip(output.data()) {
                    if *o <= 0.0 {
                        *g = 0.0;
                    }
                }
            }
            Self::Tanh => {
                for (g, o) in grad.data_mut().iter_mut().zip(output.data()) {
                    *g *= 1.0 - o * o;
                }
            }
            Self::Identity => {}
        }
    }
}

/// Fully connected layer `y = x · W + b` with `W: in × out`.
#[derive(Debug, Clone)]
pub struct Linear {
    pub weight: Parameter,
    pub bias: Parameter,
}

impl Linear {
    /// Weights and biases uniform in `±1/√fan_in`.
    pub fn new(in_dim: usize, out_dim: usize, rng: &mut dyn RngCore) -> Self {
        let bound = 1.0 / (in_dim as f64).sqrt();
        let mut w = Matrix::zeros(in_dim, out_dim);
        w.data_mut()
            .iter_mut()
            .for_each(|v| *v = rng.random_range(-bound..bound));
        let mut b = Matrix::zeros(1, out_dim);
        b.data_mut()
            .iter_mut()
            .for_each(|v| *v = rng.random_range(-bound..bound));
        Self::from_parts(w, b)
    }

    pub fn from_parts(weight: Matrix, bias: Matrix) -> Self {
        Self {
            weight: Parameter::new(weight),
            bias: Parameter::new(bias),
        }
    }
}

/// `out = x · w + b`, rows of `x` are samples.
pub(crate) fn affine(x: &Matrix, w: &Matrix, b: &[f64]) -> Matrix {
    let (rows, in_dim) = x.shape();
    let out_dim = w.cols();
    let mut out = Matrix::zeros(rows, out_dim);
    let wd = w.data();
    for r in 0..rows {
        let xrow = x.row(r);
        let orow = out.row_mut(r);
        orow.copy_from_slice(b);
        for (i, &xi) in xrow.iter().enumerate().take(in_dim) {
            if xi == 0.0 {
                continue;
            }
            let wrow = &wd[i * out_dim..(i + 1) * out_dim];
            for (o, w) in orow.iter_mut().zip(wrow) {
                *o += xi * w;
            }
        }
    }
    out
}

/// Accumulates `xᵀ · g` into `dw` and `Σ_rows g` into `db`; returns `g · wᵀ`.
pub(crate) fn affine_backward(
    x: &Matrix,
    g: &Matrix,
    w: &Matrix,
    dw: &mut Matrix,
    db: &mut Matrix,
) -> Matrix {
    let (rows, in_dim) = x.shape();
    let out_dim = g.cols();
    let mut dx = Matrix::zeros(rows, in_dim);
    let wd = w.data();
    for r in 0..rows {
        let grow = g.row(r);
        for (d, gv) in db.data_mut().iter_mut().zip(grow) {
            *d += gv;
        }
        let xrow = x.row(r);
        let dwd = dw.data_mut();
        for (i, &xi) in xrow.iter().enumerate() {
            if xi == 0.0 {
                continue;
            }
            let dwrow = &mut dwd[i * out_dim..(i + 1) * out_dim];
            for (d, gv) in dwrow.iter_mut().zip(grow) {
                *d += xi * gv;
            }
        }
        let dxrow = dx.row_mut(r);
        for (i, d) in dxrow.iter_mut().enumerate() {
            let wrow = &wd[i * out_dim..(i + 1) * out_dim];
            *d = wrow.iter().zip(grow).map(|(w, g)| w * g).sum();
        }
    }
    dx
}

impl Layer for Linear {
    fn in_dim(&self) -> usize {
        self.weight.value.rows()
    }

    fn out_dim(&self) -> usize {
        self.weight.value.cols()
    }

    fn forward(&self, x: &Matrix, _noisy: bool) -> Matrix {
        affine(x, &self.weight.value, self.bias.value.data())
    }

    fn backward(&mut self, x: &Matrix, upstream: &Matrix, _noisy: bool) -> Matrix {
        affine_backward(
            x,
            upstream,
            &self.weight.value,
            &mut self.weight.grad,
            &mut self.bias.grad,
        )
    }

    fn params(&self) -> Vec<&Parameter> {
        vec![&self.weight, &self.bias]
    }

    fn params_mut(&mut self) -> Vec<&mut Parameter> {
        vec![&mut self.weight, &mut self.bias]
    }

    fn box_clone(&self) -> Box<dyn Layer> {
        Box::new(self.clone())
    }
}

#[derive(Debug, Clone)]
struct MlpCache {
    /// Input to each layer.
    inputs: Vec<Matrix>,
    /// Post-activation output of each layer.
    outputs: Vec<Matrix>,
    noisy: bool,
}

/// A stack of layers, each followed by an activation.
#[derive(Debug)]
pub struct Mlp {
    layers: Vec<Box<dyn Layer>>,
    activations: Vec<Activation>,
    cache: Option<MlpCache>,
}

impl Clone for Mlp {
    fn clone(&self) -> Self {
        Self {
            layers: self.layers.clone(),
            activations: self.activations.clone(),
            cache: None,
        }
    }
}

impl Mlp {
    /// Linear layers of the given sizes; `hidden` activation everywhere except
    /// the last layer, which uses `output`.
    pub fn new(
        sizes: &[usize],
        hidden: Activation,
        output: Activation,
        rng: &mut dyn RngCore,
    ) -> Result<Self> {
        if sizes.len() < 2 || sizes.contains(&0) {
            return Err(NnError::Dimension(format!(
                "layer sizes {sizes:?} need at least two positive entries"
            )));
        }
        let n = sizes.len() - 1;
        let mut layers: Vec<Box<dyn Layer>> = Vec::with_capacity(n);
        let mut activations = Vec::with_capacity(n);
        for i in 0..n {
            layers.push(Box::new(Linear::new(sizes[i], sizes[i + 1], rng)));
            activations.push(if i + 1 == n { output } else { hidden });
        }
        Ok(Self {
            layers,
            activations,
            cache: None,
        })
    }

    pub fn from_layers(layers: Vec<Box<dyn Layer>>, activations: Vec<Activation>) -> Result<Self> {
        if layers.is_empty() || layers.len() != activations.len() {
            return Err(NnError::Dimension(
                "need one activation per layer and at least one layer".into(),
            ));
        }
        for (i, pair) in layers.windows(2).enumerate() {
            if pair[0].out_dim() != pair[1].in_dim() {
                return Err(NnError::Dimension(format!(
                    "layer {i} emits {} values but layer {} expects {}",
                    pair[0].out_dim(),
                    i + 1,
                    pair[1].in_dim()
                )));
            }
        }
        Ok(Self {
            layers,
            activations,
            cache: None,
        })
    }

    pub fn in_dim(&self) -> usize {
        self.layers[0].in_dim()
    }

    pub fn out_dim(&self) -> usize {
        self.layers[self.layers.len() - 1].out_dim()
    }

    pub fn layer_sizes(&self) -> Vec<usize> {
        let mut s = vec![self.in_dim()];
        s.extend(self.layers.iter().map(|l| l.out_dim()));
        s
    }

    pub fn layers(&self) -> &[Box<dyn Layer>] {
        &self.layers
    }

    pub fn activations(&self) -> &[Activation] {
        &self.activations
    }

    pub fn is_noisy(&self) -> bool {
        self.layers.iter().any(|l| l.is_noisy())
    }

    fn check_input(&self, x: &Matrix) -> Result<()> {
        if x.cols() != self.in_dim() {
            return Err(NnError::Dimension(format!(
                "input has {} columns, network expects {}",
                x.cols(),
                self.in_dim()
            )));
        }
        Ok(())
    }

    /// Forward pass without touching the cache.
    pub fn infer(&self, x: &Matrix, noisy: bool) -> Result<Matrix> {
        self.check_input(x)?;
        let mut h = x.clone();
        for (layer, act) in self.layers.iter().zip(&self.activations) {
            h = layer.forward(&h, noisy);
            act.apply(&mut h);
        }
        Ok(h)
    }

    /// Forward pass that records what `backward` needs.
    pub fn forward(&mut self, x: &Matrix, noisy: bool) -> Result<Matrix> {
        self.check_input(x)?;
        let mut inputs = Vec::with_capacity(self.layers.len());
        let mut outputs = Vec::with_capacity(self.layers.len());
        let mut h = x.clone();
        for (layer, act) in self.layers.iter().zip(&self.activations) {
            let mut out = layer.forward(&h, noisy);
            act.apply(&mut out);
            inputs.push(h);
            h = out.clone();
            outputs.push(out);
        }
        self.cache = Some(MlpCache {
            inputs,
            outputs,
            noisy,
        });
        Ok(h)
    }

    /// Accumulates parameter gradients for the cached batch and returns the
    /// gradient with respect to the network input. Consumes the cache.
    pub fn backward(&mut self, upstream: &Matrix) -> Result<Matrix> {
        let cache = self
            .cache
            .take()
            .ok_or_else(|| NnError::State("backward called without a cached forward".into()))?;
        let last = cache.outputs.last().expect("non-empty network");
        if upstream.shape() != last.shape() {
            return Err(NnError::Dimension(format!(
                "upstream gradient is {}x{}, output is {}x{}",
                upstream.rows(),
                upstream.cols(),
                last.rows(),
                last.cols()
            )));
        }
        let mut g = upstream.clone();
        for i in (0..self.layers.len()).rev() {
            self.activations[i].backprop(&cache.outputs[i], &mut g);
            g = self.layers[i].backward(&cache.inputs[i], &g, cache.noisy);
        }
        Ok(g)
    }

    pub fn has_cache(&self) -> bool {
        self.cache.is_some()
    }

    pub fn clear_cache(&mut self) {
        self.cache = None;
    }

    pub fn params(&self) -> Vec<&Parameter> {
        self.layers.iter().flat_map(|l| l.params()).collect()
    }

    pub fn params_mut(&mut self) -> Vec<&mut Parameter> {
        self.layers.iter_mut().flat_map(|l| l.params_mut()).collect()
    }

    pub fn zero_grad(&mut self) {
        self.params_mut().into_iter().for_each(|p| p.zero_grad());
    }

    pub fn freeze_noise(&mut self) {
        for l in self.layers.iter_mut() {
            l.freeze_noise();
        }
    }

    pub fn resample_noise(&mut self, rng: &mut dyn RngCore) {
        for l in &mut self.layers {
            l.resample_noise(rng);
        }
    }
}
