use ndarray::{Array1, Array2, Zip};

use super::network::{Gradients, Network};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Algorithm {
    Sgd,
    Adam { beta1: f64, beta2: f64, eps: f64 },
}

impl Algorithm {
    pub fn adam() -> Self {
        Algorithm::Adam {
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        }
    }
}

#[derive(Debug, Clone)]
struct Moments {
    weights: Array2<f64>,
    bias: Array1<f64>,
}

/// Optimizer bound to one network's shape.
///
/// Weight decay is the coupled (L2) form: it is added to the gradient
/// before either update rule.
#[derive(Debug, Clone)]
pub struct OptimizerState {
    algorithm: Algorithm,
    learning_rate: f64,
    weight_decay: f64,
    step: u64,
    first: Vec<Moments>,
    second: Vec<Moments>,
}

fn zero_moments(net: &Network) -> Vec<Moments> {
    net.layers()
        .iter()
        .map(|l| Moments {
            weights: Array2::zeros(l.weights.raw_dim()),
            bias: Array1::zeros(l.bias.raw_dim()),
        })
        .collect()
}

impl OptimizerState {
    pub fn new(
        algorithm: Algorithm,
        learning_rate: f64,
        weight_decay: f64,
        net: &Network,
    ) -> Result<Self> {
        if !(learning_rate >= 0.0 && learning_rate.is_finite()) {
            return Err(Error::Config(format!(
                "learning rate {learning_rate} is invalid"
            )));
        }
        if !(weight_decay >= 0.0 && weight_decay.is_finite()) {
            return Err(Error::Config(format!(
                "weight decay {weight_decay} is invalid"
            )));
        }
        Ok(OptimizerState {
            algorithm,
            learning_rate,
            weight_decay,
            step: 0,
            first: zero_moments(net),
            second: zero_moments(net),
        })
    }

    pub fn adam(learning_rate: f64, net: &Network) -> Result<Self> {
        Self::new(Algorithm::adam(), learning_rate, 0.0, net)
    }

    pub fn learning_rate(&self) -> f64 {
        self.learning_rate
    }

    pub fn set_learning_rate(&mut self, lr: f64) {
        self.learning_rate = lr;
    }

    pub fn steps(&self) -> u64 {
        self.step
    }

    /// Apply one update. Non-finite gradients leave `net` and the state
    /// untouched and return a training error.
    pub fn step(&mut self, net: &mut Network, grads: &Gradients) -> Result<()> {
        if !grads.matches(net) || self.first.len() != net.layers().len() {
            return Err(Error::Shape("gradients do not match network".into()));
        }
        if !grads.is_finite() {
            return Err(Error::training("non-finite gradient"));
        }
        self.step += 1;
        let lr = self.learning_rate;
        let wd = self.weight_decay;
        match self.algorithm {
            Algorithm::Sgd => {
                for (layer, g) in net.layers_mut().iter_mut().zip(&grads.layers) {
                    Zip::from(&mut layer.weights)
                        .and(&g.weights)
                        .for_each(|w, &g| *w -= lr * (g + wd * *w));
                    Zip::from(&mut layer.bias)
                        .and(&g.bias)
                        .for_each(|b, &g| *b -= lr * (g + wd * *b));
                }
            }
            Algorithm::Adam { beta1, beta2, eps } => {
                let t = self.step as i32;
                let c1 = 1.0 - beta1.powi(t);
                let c2 = 1.0 - beta2.powi(t);
                let update = |w: &mut f64, m: &mut f64, v: &mut f64, g: f64| {
                    let g = g + wd * *w;
                    *m = beta1 * *m + (1.0 - beta1) * g;
                    *v = beta2 * *v + (1.0 - beta2) * g * g;
                    let m_hat = *m / c1;
                    let v_hat = *v / c2;
                    *w -= lr * m_hat / (v_hat.sqrt() + eps);
                };
                for (((layer, g), m), v) in net
                    .layers_mut()
                    .iter_mut()
                    .zip(&grads.layers)
                    .zip(&mut self.first)
                    .zip(&mut self.second)
                {
                    Zip::from(&mut layer.weights)
                        .and(&mut m.weights)
                        .and(&mut v.weights)
                        .and(&g.weights)
                        .for_each(|w, m, v, &g| update(w, m, v, g));
                    Zip::from(&mut layer.bias)
                        .and(&mut m.bias)
                        .and(&mut v.bias)
                        .and(&g.bias)
                        .for_each(|w, m, v, &g| update(w, m, v, g));
                }
            }
        }
        if net.is_finite() {
            Ok(())
        } else {
            Err(Error::training("parameters became non-finite"))
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nn::{Activation, Layer};
    use ndarray::array;

    fn scalar_net(w: f64) -> Network {
        Network::new(vec![Layer {
            weights: array![[w]],
            bias: array![0.0],
            activation: Activation::Identity,
        }])
        .unwrap()
    }

    fn grads(g: f64) -> Gradients {
        Gradients {
            layers: vec![super::super::network::LayerGrad {
                weights: array![[g]],
                bias: array![g],
            }],
        }
    }

    #[test]
    fn zero_learning_rate_changes_nothing() {
        let mut net =
            Network::init(&[3, 4, 2], &[Activation::Tanh, Activation::Identity], 3).unwrap();
        let before = net.clone();
        let mut g = Gradients::zeros_like(&net);
        for l in &mut g.layers {
            l.weights.fill(0.7);
            l.bias.fill(-0.3);
        }
        for algorithm in [Algorithm::Sgd, Algorithm::adam()] {
            let mut opt = OptimizerState::new(algorithm, 0.0, 0.0, &net).unwrap();
            opt.step(&mut net, &g).unwrap();
            assert_eq!(net, before);
            assert_eq!(opt.steps(), 1);
        }
    }

    #[test]
    fn sgd_step() {
        let mut net = scalar_net(1.0);
        let mut opt = OptimizerState::new(Algorithm::Sgd, 0.1, 0.0, &net).unwrap();
        opt.step(&mut net, &grads(0.5)).unwrap();
        assert!((net.layers()[0].weights[[0, 0]] - 0.95).abs() < 1e-15);
    }

    #[test]
    fn sgd_weight_decay_is_added_to_gradient() {
        let mut net = scalar_net(2.0);
        let mut opt = OptimizerState::new(Algorithm::Sgd, 0.1, 0.5, &net).unwrap();
        opt.step(&mut net, &grads(0.0)).unwrap();
        // 2 - 0.1 * (0 + 0.5 * 2)
        assert!((net.layers()[0].weights[[0, 0]] - 1.9).abs() < 1e-15);
    }

    #[test]
    fn adam_first_step_moves_by_learning_rate() {
        // t = 1: m_hat = g, v_hat = g², so the step is lr * g / (|g| + eps).
        let lr = 1e-3;
        let mut net = scalar_net(0.25);
        let mut opt = OptimizerState::adam(lr, &net).unwrap();
        opt.step(&mut net, &grads(1.0)).unwrap();
        let expected = 0.25 - lr / (1.0 + 1e-8);
        assert!((net.layers()[0].weights[[0, 0]] - expected).abs() < 1e-15);
        assert!((net.layers()[0].bias[0] + lr / (1.0 + 1e-8)).abs() < 1e-15);
    }

    #[test]
    fn non_finite_gradient_is_rejected_without_update() {
        let mut net = scalar_net(1.0);
        let mut opt = OptimizerState::adam(0.1, &net).unwrap();
        let err = opt.step(&mut net, &grads(f64::NAN)).unwrap_err();
        assert!(matches!(err, Error::Training { .. }));
        assert_eq!(net, scalar_net(1.0));
        assert_eq!(opt.steps(), 0);
    }

    #[test]
    fn step_counter_increases() {
        let mut net = scalar_net(1.0);
        let mut opt = OptimizerState::adam(0.1, &net).unwrap();
        for t in 1..=5 {
            opt.step(&mut net, &grads(0.1)).unwrap();
            assert_eq!(opt.steps(), t);
        }
    }
}
