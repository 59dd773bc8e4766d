//! A small dense network engine: forward/backward passes, losses and
//! optimizers. Enough to drive the autoencoder and the adversaries.

mod loss;
mod network;
mod optim;

pub(crate) use loss::cross_entropy_labels;
pub use loss::{
    cross_entropy, cross_entropy_grad, mse, mse_grad, one_hot, one_hot_classes, PROB_FLOOR,
};
pub use network::{Activation, Backward, ForwardCache, Gradients, Layer, LayerGrad, Network};
pub use optim::{Algorithm, OptimizerState};
