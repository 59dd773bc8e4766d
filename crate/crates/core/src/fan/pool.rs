//! Staggered-restart adversary pool.
//!
//! Each member is cold-restarted every `restart_period` epochs, with the
//! restart times spread evenly across members. A member counts as mature
//! once it has trained for `restart_period / size` epochs on the current
//! encoding; the penalty is averaged over mature members so that a freshly
//! restarted adversary does not dilute it. When no member is mature (the
//! first epochs, or a pool of one) every member contributes.

use ndarray::{Array2, ArrayView2};

use super::objective::{adversary_loss, adversary_loss_grad, chance_level};
use crate::data::Protected;
use crate::error::{Error, Result};
use crate::nn::{Activation, Network, OptimizerState};

#[derive(Debug, Clone)]
pub struct Adversary {
    pub net: Network,
    opt: OptimizerState,
    /// Epochs since the last (re)start.
    pub age: usize,
    pub generation: u64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PoolSpec {
    pub size: usize,
    pub restart_period: usize,
    pub hidden: usize,
    pub activation: Activation,
    pub learning_rate: f64,
    pub seed: u64,
}

#[derive(Debug, Clone)]
pub struct AdversaryPool {
    spec: PoolSpec,
    input: usize,
    output: usize,
    output_activation: Activation,
    members: Vec<Adversary>,
    floor: f64,
}

/// Penalty and its gradient with respect to the reconstruction.
#[derive(Debug, Clone)]
pub struct PoolPenalty {
    /// Mean over contributing members of `max(0, chance − loss)`.
    pub dhat: f64,
    pub grad_y: Array2<f64>,
    /// Loss of every member on the reconstruction.
    pub losses: Vec<f64>,
    /// Loss of the longest-trained member.
    pub oldest_loss: f64,
}

impl AdversaryPool {
    pub fn new(input: usize, target: &Protected, spec: PoolSpec) -> Result<Self> {
        if spec.size == 0 {
            return Err(Error::Config("adversary pool must not be empty".into()));
        }
        if spec.restart_period == 0 {
            return Err(Error::Config("restart period must be positive".into()));
        }
        let (output, output_activation) = match target {
            Protected::Classes { names, .. } => (names.len(), Activation::Softmax),
            Protected::Continuous { .. } => (1, Activation::Identity),
        };
        let mut pool = AdversaryPool {
            floor: chance_level(target),
            spec,
            input,
            output,
            output_activation,
            members: Vec::new(),
        };
        pool.members = (0..pool.spec.size)
            .map(|j| pool.fresh(j, 0))
            .collect::<Result<_>>()?;
        Ok(pool)
    }

    fn fresh(&self, index: usize, generation: u64) -> Result<Adversary> {
        let seed = crate::derive_seed(self.spec.seed, "pool", (index as u64) << 32 | generation);
        let net = Network::init(
            &[self.input, self.spec.hidden, self.output],
            &[self.spec.activation, self.output_activation],
            seed,
        )?;
        let opt = OptimizerState::adam(self.spec.learning_rate, &net)?;
        Ok(Adversary {
            net,
            opt,
            age: 0,
            generation,
        })
    }

    pub fn members(&self) -> &[Adversary] {
        &self.members
    }

    pub fn len(&self) -> usize {
        self.members.len()
    }

    pub fn is_empty(&self) -> bool {
        self.members.is_empty()
    }

    /// Loss of an adversary that only knows the target marginals.
    pub fn chance_level(&self) -> f64 {
        self.floor
    }

    fn maturity(&self) -> usize {
        self.spec.restart_period / self.spec.size
    }

    fn offset(&self, j: usize) -> usize {
        j * self.spec.restart_period / self.spec.size
    }

    /// Advance to `epoch` (1-based): restart members whose turn has come.
    pub fn begin_epoch(&mut self, epoch: usize) -> Result<Vec<usize>> {
        let mut restarted = Vec::new();
        for j in 0..self.members.len() {
            if epoch > 1 && (epoch + self.offset(j)).is_multiple_of(self.spec.restart_period) {
                let generation = self.members[j].generation + 1;
                self.members[j] = self.fresh(j, generation)?;
                restarted.push(j);
            }
        }
        Ok(restarted)
    }

    /// Predictions of every member on `y`.
    pub fn predict(&self, y: ArrayView2<f64>) -> Result<Vec<Array2<f64>>> {
        self.members.iter().map(|m| m.net.forward(y)).collect()
    }

    /// D̂ and its gradient through `y`; adversary weights are held fixed.
    pub fn penalty(&self, y: ArrayView2<f64>, target: &Protected) -> Result<PoolPenalty> {
        let mature = self.maturity();
        let any_mature = self.members.iter().any(|m| m.age >= mature && mature > 0);
        let mut grad_y = Array2::zeros(y.raw_dim());
        let mut losses = Vec::with_capacity(self.members.len());
        let mut total = 0.0;
        let mut contributing = 0usize;
        let oldest = (0..self.members.len())
            .max_by_key(|&j| (self.members[j].age, std::cmp::Reverse(j)))
            .unwrap();
        let mut oldest_loss = 0.0;
        for (j, m) in self.members.iter().enumerate() {
            let cache = m.net.forward_cached(y)?;
            let loss = adversary_loss(cache.output().view(), target);
            losses.push(loss);
            if j == oldest {
                oldest_loss = loss;
            }
            if any_mature && m.age < mature {
                continue;
            }
            contributing += 1;
            let gap = self.floor - loss;
            if gap > 0.0 {
                total += gap;
                // ∂(floor − loss)/∂y = −∂loss/∂y
                let g = adversary_loss_grad(cache.output().view(), target);
                let back = m.net.backward(&cache, &g)?;
                grad_y.scaled_add(-1.0, &back.input_grad);
            }
        }
        let scale = 1.0 / contributing as f64;
        grad_y.mapv_inplace(|v| v * scale);
        Ok(PoolPenalty {
            dhat: total * scale,
            grad_y,
            losses,
            oldest_loss,
        })
    }

    /// `steps` full-batch updates of every member on a fixed `y`, then age
    /// every member by one epoch.
    pub fn train(&mut self, y: ArrayView2<f64>, target: &Protected, steps: usize) -> Result<()> {
        for m in &mut self.members {
            for _ in 0..steps {
                let cache = m.net.forward_cached(y)?;
                let g = adversary_loss_grad(cache.output().view(), target);
                let back = m.net.backward(&cache, &g)?;
                m.opt.step(&mut m.net, &back.grads)?;
            }
            m.age += 1;
        }
        Ok(())
    }

    pub fn set_learning_rate(&mut self, lr: f64) {
        self.spec.learning_rate = lr;
        for m in &mut self.members {
            m.opt.set_learning_rate(lr);
        }
    }

    /// Reinitialize any member whose parameters are no longer finite.
    pub fn repair(&mut self) -> Result<()> {
        for j in 0..self.members.len() {
            if !self.members[j].net.is_finite() {
                let generation = self.members[j].generation + 1;
                self.members[j] = self.fresh(j, generation)?;
            }
        }
        Ok(())
    }

    pub fn fingerprints(&self) -> Vec<String> {
        self.members.iter().map(|m| m.net.fingerprint()).collect()
    }
}

/// Mean penalty of a pool on `y`.
pub fn dhat_estimate(y: ArrayView2<f64>, target: &Protected, pool: &AdversaryPool) -> Result<f64> {
    if pool.is_empty() {
        return Err(Error::Config("adversary pool is empty".into()));
    }
    Ok(pool.penalty(y, target)?.dhat)
}
