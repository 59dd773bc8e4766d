//! Loss terms of the two players.

use ndarray::{Array2, ArrayView2, Axis};

use crate::data::Protected;
use crate::error::{Error, Result};
use crate::nn::{self, ForwardCache, Gradients, Network};

/// Adversary loss: cross-entropy for class targets, MSE for continuous ones.
pub fn racist_loss(r_hat: ArrayView2<f64>, target: &Protected) -> Result<f64> {
    match target {
        Protected::Classes { labels, names } => {
            let r_bar = nn::one_hot(labels, names.len());
            nn::cross_entropy(r_hat, r_bar.view())
        }
        Protected::Continuous { values } => nn::mse(r_hat, column(values).view()),
    }
}

/// Unchecked fast path of [`racist_loss`] for network outputs.
pub(crate) fn adversary_loss(r_hat: ArrayView2<f64>, target: &Protected) -> f64 {
    match target {
        Protected::Classes { labels, .. } => nn::cross_entropy_labels(r_hat, labels),
        Protected::Continuous { values } => {
            let n = values.len().max(1) as f64;
            r_hat
                .column(0)
                .iter()
                .zip(values)
                .map(|(p, t)| (p - t) * (p - t))
                .sum::<f64>()
                / n
        }
    }
}

pub(crate) fn adversary_loss_grad(r_hat: ArrayView2<f64>, target: &Protected) -> Array2<f64> {
    match target {
        Protected::Classes { labels, .. } => nn::cross_entropy_grad(r_hat, labels),
        Protected::Continuous { values } => {
            let n = values.len().max(1) as f64;
            let mut g = Array2::zeros(r_hat.raw_dim());
            for (i, t) in values.iter().enumerate() {
                g[[i, 0]] = 2.0 * (r_hat[[i, 0]] - t) / n;
            }
            g
        }
    }
}

/// Loss of an adversary that knows only the target's marginal distribution:
/// the class-prior entropy, or the target variance. Equals `ln C` for
/// balanced classes.
pub fn chance_level(target: &Protected) -> f64 {
    match target {
        Protected::Classes { labels, names } => {
            let n = labels.len() as f64;
            let mut counts = vec![0usize; names.len()];
            for &l in labels {
                counts[l] += 1;
            }
            counts
                .iter()
                .filter(|&&c| c > 0)
                .map(|&c| {
                    let p = c as f64 / n;
                    -p * p.ln()
                })
                .sum()
        }
        Protected::Continuous { values } => {
            let n = values.len() as f64;
            let mean = values.iter().sum::<f64>() / n;
            values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n
        }
    }
}

fn column(values: &[f64]) -> Array2<f64> {
    Array2::from_shape_vec((values.len(), 1), values.to_vec()).unwrap()
}

/// Weight decay and contractive penalty, with gradients.
#[derive(Debug, Clone)]
pub struct Regularization {
    pub value: f64,
    pub grads: Gradients,
}

/// `weight_decay · ‖W‖² + contractive_weight · mean_rows ‖∂h/∂x‖²_F`, with
/// `h` the first hidden layer.
pub fn regularizers(
    autoencoder: &Network,
    x: ArrayView2<f64>,
    weight_decay: f64,
    contractive_weight: f64,
) -> Result<f64> {
    let encoder = Network::new(vec![autoencoder.layers()[0].clone()])?;
    let hidden = encoder.forward(x)?;
    Ok(regularization(
        autoencoder,
        &hidden,
        x,
        weight_decay,
        contractive_weight,
        false,
    )?
    .value)
}

/// Regularization value and gradients from a cached autoencoder pass.
pub(crate) fn regularization_from_cache(
    autoencoder: &Network,
    cache: &ForwardCache,
    weight_decay: f64,
    contractive_weight: f64,
) -> Result<Regularization> {
    regularization(
        autoencoder,
        cache.layer_output(0),
        cache.input().view(),
        weight_decay,
        contractive_weight,
        true,
    )
}

fn regularization(
    autoencoder: &Network,
    hidden: &Array2<f64>,
    x: ArrayView2<f64>,
    weight_decay: f64,
    contractive_weight: f64,
    with_grads: bool,
) -> Result<Regularization> {
    let mut grads = Gradients::zeros_like(autoencoder);
    let mut value = 0.0;
    if weight_decay > 0.0 {
        value += weight_decay * autoencoder.weight_norm_sq();
        if with_grads {
            for (g, l) in grads.layers.iter_mut().zip(autoencoder.layers()) {
                g.weights.scaled_add(2.0 * weight_decay, &l.weights);
            }
        }
    }
    if contractive_weight > 0.0 {
        let layer = &autoencoder.layers()[0];
        let act = layer.activation;
        if act.derivatives_from_output(0.0).is_none() {
            return Err(Error::Config(
                "contractive penalty needs an elementwise first-layer activation".into(),
            ));
        }
        let n = x.nrows().max(1) as f64;
        // squared row norms of W: S_j
        let s: Vec<f64> = layer
            .weights
            .rows()
            .into_iter()
            .map(|r| r.dot(&r))
            .collect();
        let mut d1_sq_sum = vec![0.0; s.len()];
        // coefficient on x for the weight gradient, per row and unit
        let mut coef = Array2::<f64>::zeros(hidden.raw_dim());
        let mut penalty = 0.0;
        for (i, row) in hidden.rows().into_iter().enumerate() {
            for (j, &a) in row.iter().enumerate() {
                let (d1, d2) = act.derivatives_from_output(a).unwrap();
                penalty += d1 * d1 * s[j];
                d1_sq_sum[j] += d1 * d1;
                coef[[i, j]] = 2.0 * d1 * d2 * s[j];
            }
        }
        value += contractive_weight * penalty / n;
        if with_grads {
            let scale = contractive_weight / n;
            let g = &mut grads.layers[0];
            // through the Jacobian's explicit W
            for (j, mut row) in g.weights.rows_mut().into_iter().enumerate() {
                row.scaled_add(scale * 2.0 * d1_sq_sum[j], &layer.weights.row(j));
            }
            // through the activation slope's dependence on z
            g.weights.scaled_add(scale, &coef.t().dot(&x));
            g.bias.scaled_add(scale, &coef.sum_axis(Axis(0)));
        }
    }
    Ok(Regularization { value, grads })
}

/// The three terms of the autoencoder objective.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LossComponents {
    pub mse: f64,
    /// Pool penalty before scaling by `c`.
    pub dhat: f64,
    pub reg: f64,
}

impl LossComponents {
    pub fn total(&self, c: f64) -> f64 {
        self.mse + c * self.dhat + self.reg
    }
}

/// `L_A = mse(y, x) + c · D̂ + R` for a given reconstruction and pool
/// predictions. Adversary weights do not enter; the pool outputs are
/// constants here.
#[allow(clippy::too_many_arguments)]
pub fn autoencoder_loss(
    x: ArrayView2<f64>,
    y: ArrayView2<f64>,
    pool_predictions: &[Array2<f64>],
    target: &Protected,
    c: f64,
    autoencoder: &Network,
    weight_decay: f64,
    contractive_weight: f64,
) -> Result<(f64, LossComponents)> {
    if pool_predictions.is_empty() {
        return Err(Error::Config("adversary pool is empty".into()));
    }
    let mse = nn::mse(y, x)?;
    let floor = chance_level(target);
    let dhat = pool_predictions
        .iter()
        .map(|p| (floor - adversary_loss(p.view(), target)).max(0.0))
        .sum::<f64>()
        / pool_predictions.len() as f64;
    let reg = regularizers(autoencoder, x, weight_decay, contractive_weight)?;
    let parts = LossComponents { mse, dhat, reg };
    let total = parts.total(c);
    if !total.is_finite() {
        return Err(Error::training(format!(
            "non-finite autoencoder loss {parts:?}"
        )));
    }
    Ok((total, parts))
}
