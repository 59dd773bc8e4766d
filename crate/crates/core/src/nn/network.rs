//! Dense feed-forward stacks with a cached forward pass and exact backprop.
//!
//! Weights are stored `(out, in)` and applied row-wise: `a = act(x Wᵀ + b)`.

use ndarray::{Array1, Array2, ArrayView2, Axis};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Activation {
    Identity,
    Relu,
    Tanh,
    Sigmoid,
    /// Row-wise softmax. Only meaningful on an output layer.
    Softmax,
}

impl Activation {
    pub fn name(self) -> &'static str {
        match self {
            Activation::Identity => "identity",
            Activation::Relu => "relu",
            Activation::Tanh => "tanh",
            Activation::Sigmoid => "sigmoid",
            Activation::Softmax => "softmax",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "identity" | "linear" => Some(Activation::Identity),
            "relu" => Some(Activation::Relu),
            "tanh" => Some(Activation::Tanh),
            "sigmoid" => Some(Activation::Sigmoid),
            "softmax" => Some(Activation::Softmax),
            _ => None,
        }
    }

    fn apply(self, z: &mut Array2<f64>) {
        match self {
            Activation::Identity => {}
            Activation::Relu => z.mapv_inplace(|v| v.max(0.0)),
            Activation::Tanh => z.mapv_inplace(f64::tanh),
            Activation::Sigmoid => z.mapv_inplace(|v| 1.0 / (1.0 + (-v).exp())),
            Activation::Softmax => {
                for mut row in z.rows_mut() {
                    let max = row.fold(f64::NEG_INFINITY, |m, &v| m.max(v));
                    row.mapv_inplace(|v| (v - max).exp());
                    let sum = row.sum();
                    row.mapv_inplace(|v| v / sum);
                }
            }
        }
    }

    /// Pulls `grad` (w.r.t. the activation output `a`) back to the
    /// pre-activation, using only the stored output.
    fn backprop(self, a: &Array2<f64>, grad: &Array2<f64>) -> Array2<f64> {
        match self {
            Activation::Identity => grad.clone(),
            Activation::Relu => {
                let mut dz = grad.clone();
                dz.zip_mut_with(a, |g, &a| {
                    if a <= 0.0 {
                        *g = 0.0
                    }
                });
                dz
            }
            Activation::Tanh => {
                let mut dz = grad.clone();
                dz.zip_mut_with(a, |g, &a| *g *= 1.0 - a * a);
                dz
            }
            Activation::Sigmoid => {
                let mut dz = grad.clone();
                dz.zip_mut_with(a, |g, &a| *g *= a * (1.0 - a));
                dz
            }
            Activation::Softmax => {
                let mut dz = grad.clone();
                for (mut g, s) in dz.rows_mut().into_iter().zip(a.rows()) {
                    let dot = g.dot(&s);
                    g.zip_mut_with(&s, |g, &s| *g = s * (*g - dot));
                }
                dz
            }
        }
    }

    /// First and second derivative of an elementwise activation, expressed
    /// in terms of its output. `None` for softmax, which is not elementwise.
    pub fn derivatives_from_output(self, a: f64) -> Option<(f64, f64)> {
        match self {
            Activation::Identity => Some((1.0, 0.0)),
            Activation::Relu => Some((if a > 0.0 { 1.0 } else { 0.0 }, 0.0)),
            Activation::Tanh => {
                let d = 1.0 - a * a;
                Some((d, -2.0 * a * d))
            }
            Activation::Sigmoid => {
                let d = a * (1.0 - a);
                Some((d, d * (1.0 - 2.0 * a)))
            }
            Activation::Softmax => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Layer {
    /// Shape `(out, in)`.
    pub weights: Array2<f64>,
    pub bias: Array1<f64>,
    pub activation: Activation,
}

impl Layer {
    pub fn input_dim(&self) -> usize {
        self.weights.ncols()
    }

    pub fn output_dim(&self) -> usize {
        self.weights.nrows()
    }

    /// Pre-activation `x Wᵀ + b`.
    pub fn affine(&self, x: ArrayView2<f64>) -> Array2<f64> {
        let mut z = x.dot(&self.weights.t());
        z += &self.bias;
        z
    }
}

/// Parameters of a dense network. Used for both the autoencoder and every
/// adversary.
#[derive(Debug, Clone, PartialEq)]
pub struct Network {
    layers: Vec<Layer>,
}

/// Activations recorded during a forward pass, needed by [`Network::backward`].
#[derive(Debug, Clone)]
pub struct ForwardCache {
    /// `activations[0]` is the input, `activations[i + 1]` the output of layer `i`.
    activations: Vec<Array2<f64>>,
}

impl ForwardCache {
    pub fn input(&self) -> &Array2<f64> {
        &self.activations[0]
    }

    pub fn output(&self) -> &Array2<f64> {
        self.activations
            .last()
            .expect("cache always holds the input")
    }

    /// Output of layer `i`.
    pub fn layer_output(&self, i: usize) -> &Array2<f64> {
        &self.activations[i + 1]
    }

    pub fn into_output(mut self) -> Array2<f64> {
        self.activations
            .pop()
            .expect("cache always holds the input")
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LayerGrad {
    pub weights: Array2<f64>,
    pub bias: Array1<f64>,
}

/// Per-layer parameter gradients, shaped like the owning [`Network`].
#[derive(Debug, Clone, PartialEq)]
pub struct Gradients {
    pub layers: Vec<LayerGrad>,
}

impl Gradients {
    pub fn zeros_like(net: &Network) -> Self {
        Gradients {
            layers: net
                .layers
                .iter()
                .map(|l| LayerGrad {
                    weights: Array2::zeros(l.weights.raw_dim()),
                    bias: Array1::zeros(l.bias.raw_dim()),
                })
                .collect(),
        }
    }

    pub fn is_finite(&self) -> bool {
        self.layers.iter().all(|g| {
            g.weights.iter().all(|v| v.is_finite()) && g.bias.iter().all(|v| v.is_finite())
        })
    }

    pub fn is_zero(&self) -> bool {
        self.layers
            .iter()
            .all(|g| g.weights.iter().all(|&v| v == 0.0) && g.bias.iter().all(|&v| v == 0.0))
    }

    /// `self += scale * other`.
    pub fn add_scaled(&mut self, other: &Gradients, scale: f64) -> Result<()> {
        check_congruent(self, other)?;
        for (a, b) in self.layers.iter_mut().zip(&other.layers) {
            a.weights.scaled_add(scale, &b.weights);
            a.bias.scaled_add(scale, &b.bias);
        }
        Ok(())
    }

    pub fn matches(&self, net: &Network) -> bool {
        self.layers.len() == net.layers.len()
            && self
                .layers
                .iter()
                .zip(&net.layers)
                .all(|(g, l)| g.weights.dim() == l.weights.dim() && g.bias.len() == l.bias.len())
    }
}

fn check_congruent(a: &Gradients, b: &Gradients) -> Result<()> {
    let ok = a.layers.len() == b.layers.len()
        && a.layers
            .iter()
            .zip(&b.layers)
            .all(|(x, y)| x.weights.dim() == y.weights.dim() && x.bias.len() == y.bias.len());
    if ok {
        Ok(())
    } else {
        Err(Error::Shape("gradient sets are not congruent".into()))
    }
}

/// Result of a backward pass.
#[derive(Debug, Clone)]
pub struct Backward {
    pub grads: Gradients,
    /// Gradient of the loss with respect to the network input.
    pub input_grad: Array2<f64>,
}

impl Network {
    pub fn new(layers: Vec<Layer>) -> Result<Self> {
        if layers.is_empty() {
            return Err(Error::Config("a network needs at least one layer".into()));
        }
        for (i, l) in layers.iter().enumerate() {
            if l.bias.len() != l.output_dim() {
                return Err(Error::Shape(format!(
                    "layer {i}: bias length {} but {} outputs",
                    l.bias.len(),
                    l.output_dim()
                )));
            }
        }
        for (i, pair) in layers.windows(2).enumerate() {
            if pair[0].output_dim() != pair[1].input_dim() {
                return Err(Error::Shape(format!(
                    "layer {i} outputs {} values but layer {} expects {}",
                    pair[0].output_dim(),
                    i + 1,
                    pair[1].input_dim()
                )));
            }
        }
        Ok(Network { layers })
    }

    /// Xavier-uniform weights, zero biases, deterministic in `seed`.
    ///
    /// `sizes` lists every width including the input, so it has one more
    /// entry than `activations`.
    pub fn init(sizes: &[usize], activations: &[Activation], seed: u64) -> Result<Self> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        Self::init_with_rng(sizes, activations, &mut rng)
    }

    pub fn init_with_rng<R: Rng + ?Sized>(
        sizes: &[usize],
        activations: &[Activation],
        rng: &mut R,
    ) -> Result<Self> {
        if activations.is_empty() {
            return Err(Error::Config("empty layer specification".into()));
        }
        if sizes.len() != activations.len() + 1 {
            return Err(Error::Config(format!(
                "{} layer sizes given for {} layers",
                sizes.len(),
                activations.len()
            )));
        }
        if sizes.contains(&0) {
            return Err(Error::Config("layer sizes must be positive".into()));
        }
        let layers = sizes
            .windows(2)
            .zip(activations)
            .map(|(io, &activation)| {
                let (fan_in, fan_out) = (io[0], io[1]);
                let bound = (6.0 / (fan_in + fan_out) as f64).sqrt();
                let weights = Array2::from_shape_simple_fn((fan_out, fan_in), || {
                    rng.random_range(-bound..=bound)
                });
                Layer {
                    weights,
                    bias: Array1::zeros(fan_out),
                    activation,
                }
            })
            .collect();
        Network::new(layers)
    }

    pub fn layers(&self) -> &[Layer] {
        &self.layers
    }

    pub fn layers_mut(&mut self) -> &mut [Layer] {
        &mut self.layers
    }

    pub fn input_dim(&self) -> usize {
        self.layers[0].input_dim()
    }

    pub fn output_dim(&self) -> usize {
        self.layers[self.layers.len() - 1].output_dim()
    }

    pub fn num_params(&self) -> usize {
        self.layers
            .iter()
            .map(|l| l.weights.len() + l.bias.len())
            .sum()
    }

    pub fn is_finite(&self) -> bool {
        self.layers.iter().all(|l| {
            l.weights.iter().all(|v| v.is_finite()) && l.bias.iter().all(|v| v.is_finite())
        })
    }

    /// Sum of squared weights (biases excluded).
    pub fn weight_norm_sq(&self) -> f64 {
        self.layers
            .iter()
            .map(|l| l.weights.iter().map(|w| w * w).sum::<f64>())
            .sum()
    }

    /// SHA-256 over the exact bit patterns of every parameter.
    pub fn fingerprint(&self) -> String {
        let mut h = Sha256::new();
        for l in &self.layers {
            h.update((l.weights.nrows() as u64).to_le_bytes());
            h.update((l.weights.ncols() as u64).to_le_bytes());
            h.update(l.activation.name().as_bytes());
            for v in l.weights.iter().chain(l.bias.iter()) {
                h.update(v.to_bits().to_le_bytes());
            }
        }
        crate::hex(&h.finalize())
    }

    fn check_input(&self, x: &ArrayView2<f64>) -> Result<()> {
        if x.ncols() != self.input_dim() {
            return Err(Error::Shape(format!(
                "input has {} columns, network expects {}",
                x.ncols(),
                self.input_dim()
            )));
        }
        if x.iter().any(|v| !v.is_finite()) {
            return Err(Error::Input("input contains non-finite values".into()));
        }
        Ok(())
    }

    pub fn forward(&self, x: ArrayView2<f64>) -> Result<Array2<f64>> {
        self.check_input(&x)?;
        let mut a = x.to_owned();
        for l in &self.layers {
            let mut z = l.affine(a.view());
            l.activation.apply(&mut z);
            a = z;
        }
        Ok(a)
    }

    pub fn forward_cached(&self, x: ArrayView2<f64>) -> Result<ForwardCache> {
        self.check_input(&x)?;
        let mut activations = Vec::with_capacity(self.layers.len() + 1);
        activations.push(x.to_owned());
        for l in &self.layers {
            let mut z = l.affine(activations.last().unwrap().view());
            l.activation.apply(&mut z);
            activations.push(z);
        }
        Ok(ForwardCache { activations })
    }

    /// Exact gradients of a scalar loss given `grad_out = ∂loss/∂output`.
    pub fn backward(&self, cache: &ForwardCache, grad_out: &Array2<f64>) -> Result<Backward> {
        if cache.activations.len() != self.layers.len() + 1 {
            return Err(Error::Shape(
                "forward cache belongs to a different network".into(),
            ));
        }
        if grad_out.dim() != cache.output().dim() {
            return Err(Error::Shape(format!(
                "loss gradient {:?} does not match output {:?}",
                grad_out.dim(),
                cache.output().dim()
            )));
        }
        let mut grads = Vec::with_capacity(self.layers.len());
        let mut grad = grad_out.clone();
        for (i, l) in self.layers.iter().enumerate().rev() {
            let dz = l.activation.backprop(&cache.activations[i + 1], &grad);
            let a_prev = &cache.activations[i];
            grads.push(LayerGrad {
                weights: dz.t().dot(a_prev),
                bias: dz.sum_axis(Axis(0)),
            });
            grad = dz.dot(&l.weights);
        }
        grads.reverse();
        Ok(Backward {
            grads: Gradients { layers: grads },
            input_grad: grad,
        })
    }
}
