//! Fair adversarial networks for tabular data.
//!
//! An autoencoder reconstructs a dataset while a pool of adversaries tries
//! to predict a protected attribute from the reconstruction. The
//! autoencoder is trained to keep its reconstruction error low and to push
//! the adversaries to chance, yielding a dataset from which the protected
//! attribute can no longer be recovered.
//!
//! Modules:
//!
//! - [`nn`]: dense networks, losses and optimizers
//! - [`data`]: CSV ingestion, encoding and decoding
//! - [`fan`]: the adversarial training loop
//! - [`audit`]: fully-trained adversary audits and bias reports
//! - [`metrics`]: convergence traces and charts
//! - [`cli`]: the `debias` / `audit` / `report` commands
//! - [`synthetic`]: planted-proxy datasets for experiments and tests

pub mod audit;
pub mod cli;
pub mod data;
pub mod error;
pub mod fan;
pub mod kv;
pub mod metrics;
pub mod nn;
pub mod synthetic;

pub use error::{Error, Result};

pub(crate) fn hex(bytes: &[u8]) -> String {
    bytes.iter().map(|b| format!("{b:02x}")).collect()
}

/// Independent seed for a named stream and index, derived from a base seed.
pub fn derive_seed(base: u64, stream: &str, index: u64) -> u64 {
    use sha2::{Digest, Sha256};
    let mut h = Sha256::new();
    h.update(base.to_le_bytes());
    h.update(stream.as_bytes());
    h.update(index.to_le_bytes());
    let bytes = h.finalize();
    u64::from_le_bytes(bytes[..8].try_into().unwrap())
}
