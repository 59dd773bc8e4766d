#![allow(dead_code)]

use ndarray::Array2;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use fan::nn::{Activation, Network};

pub const GRAD_H: f64 = 1e-5;
pub const GRAD_TOL: f64 = 1e-4;

const HIDDEN: [Activation; 4] = [
    Activation::Identity,
    Activation::Relu,
    Activation::Tanh,
    Activation::Sigmoid,
];

/// Random network with at most three layers of at most 16 units, plus a
/// random input batch and a random output weighting.
pub fn random_problem(seed: u64) -> (Network, Array2<f64>, Array2<f64>) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let depth = rng.random_range(1..=3);
    let sizes: Vec<usize> = (0..=depth).map(|_| rng.random_range(1..=16)).collect();
    let mut acts: Vec<Activation> = (0..depth)
        .map(|_| HIDDEN[rng.random_range(0..HIDDEN.len())])
        .collect();
    if sizes[depth] > 1 && rng.random_bool(0.3) {
        acts[depth - 1] = Activation::Softmax;
    }
    let net = Network::init(&sizes, &acts, rng.random()).unwrap();
    let rows = rng.random_range(1..=5);
    let x = Array2::from_shape_fn((rows, sizes[0]), |_| rng.random_range(-2.0..2.0));
    let w = Array2::from_shape_fn((rows, sizes[depth]), |_| rng.random_range(-1.0..1.0));
    (net, x, w)
}

fn objective(net: &Network, x: &Array2<f64>, w: &Array2<f64>) -> f64 {
    (&net.forward(x.view()).unwrap() * w).sum()
}

fn relative_error(analytic: f64, numeric: f64) -> f64 {
    (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(1e-6)
}

/// Largest relative error between backprop and central differences over
/// every weight, bias and input entry of `random_problem(seed)`.
pub fn max_gradient_error(seed: u64) -> f64 {
    let (mut net, mut x, w) = random_problem(seed);
    let cache = net.forward_cached(x.view()).unwrap();
    let back = net.backward(&cache, &w).unwrap();
    let mut worst: f64 = 0.0;
    for l in 0..net.layers().len() {
        let (rows, cols) = net.layers()[l].weights.dim();
        for i in 0..rows {
            for j in 0..cols {
                let orig = net.layers()[l].weights[[i, j]];
                net.layers_mut()[l].weights[[i, j]] = orig + GRAD_H;
                let up = objective(&net, &x, &w);
                net.layers_mut()[l].weights[[i, j]] = orig - GRAD_H;
                let dn = objective(&net, &x, &w);
                net.layers_mut()[l].weights[[i, j]] = orig;
                let fd = (up - dn) / (2.0 * GRAD_H);
                worst = worst.max(relative_error(back.grads.layers[l].weights[[i, j]], fd));
            }
            let orig = net.layers()[l].bias[i];
            net.layers_mut()[l].bias[i] = orig + GRAD_H;
            let up = objective(&net, &x, &w);
            net.layers_mut()[l].bias[i] = orig - GRAD_H;
            let dn = objective(&net, &x, &w);
            net.layers_mut()[l].bias[i] = orig;
            let fd = (up - dn) / (2.0 * GRAD_H);
            worst = worst.max(relative_error(back.grads.layers[l].bias[i], fd));
        }
    }
    let (rows, cols) = x.dim();
    for i in 0..rows {
        for j in 0..cols {
            let orig = x[[i, j]];
            x[[i, j]] = orig + GRAD_H;
            let up = objective(&net, &x, &w);
            x[[i, j]] = orig - GRAD_H;
            let dn = objective(&net, &x, &w);
            x[[i, j]] = orig;
            let fd = (up - dn) / (2.0 * GRAD_H);
            worst = worst.max(relative_error(back.input_grad[[i, j]], fd));
        }
    }
    worst
}
