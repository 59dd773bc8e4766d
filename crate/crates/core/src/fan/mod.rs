//! Adversarial debiasing: an autoencoder trained against a pool of
//! adversaries that try to recover the protected attribute from its output.

mod config;
mod objective;
mod pool;
mod train;

pub use config::{LrBoost, TrainingConfig};
pub use objective::{
    autoencoder_loss, chance_level, racist_loss, regularizers, LossComponents, Regularization,
};
pub use pool::{dhat_estimate, Adversary, AdversaryPool, PoolPenalty, PoolSpec};
pub use train::{
    stopping_criterion, train, Decision, EpochRecord, RatchetState, StopReason, TrainOutcome,
    Trainer, TrainingTrace,
};
