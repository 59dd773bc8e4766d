//! Compare backprop against central differences on a small network.
//!
//! `cargo run --example gradient_check`

use fan::nn::{cross_entropy, cross_entropy_grad, one_hot, Activation, Network};
use ndarray::array;

fn main() -> fan::error::Result<()> {
    let net = Network::init(
        &[3, 5, 4, 2],
        &[Activation::Tanh, Activation::Relu, Activation::Softmax],
        42,
    )?;
    let x = array![[0.5, -1.0, 2.0], [1.5, 0.3, -0.7], [-0.2, 0.8, 0.1]];
    let labels = [0, 1, 1];
    let target = one_hot(&labels, 2);
    let loss =
        |n: &Network| cross_entropy(n.forward(x.view()).unwrap().view(), target.view()).unwrap();

    let cache = net.forward_cached(x.view())?;
    let g = cross_entropy_grad(cache.output().view(), &labels);
    let back = net.backward(&cache, &g)?;

    let h = 1e-5;
    let mut worst: f64 = 0.0;
    let mut probe = net.clone();
    for l in 0..net.layers().len() {
        let (rows, cols) = net.layers()[l].weights.dim();
        for i in 0..rows {
            for j in 0..cols {
                let w = net.layers()[l].weights[[i, j]];
                probe.layers_mut()[l].weights[[i, j]] = w + h;
                let up = loss(&probe);
                probe.layers_mut()[l].weights[[i, j]] = w - h;
                let dn = loss(&probe);
                probe.layers_mut()[l].weights[[i, j]] = w;
                let numeric = (up - dn) / (2.0 * h);
                let analytic = back.grads.layers[l].weights[[i, j]];
                let rel = (numeric - analytic).abs() / numeric.abs().max(analytic.abs()).max(1e-6);
                worst = worst.max(rel);
            }
        }
    }
    println!("loss {:.6}", loss(&net));
    println!("parameters {}", net.num_params());
    println!("max relative error over weights {worst:.2e}");
    Ok(())
}
