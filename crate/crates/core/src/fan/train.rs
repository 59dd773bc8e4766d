//! The adversarial training loop.

use ndarray::{Array2, ArrayView2};

use super::config::{LrBoost, TrainingConfig};
use super::objective::{regularization_from_cache, LossComponents};
use super::pool::{AdversaryPool, PoolSpec};
use crate::audit::{full_train_audit, majority_baseline, AuditMode};
use crate::data::{Dataset, DebiasedOutput, Protected};
use crate::error::{Error, Result};
use crate::nn::{self, Activation, Network, OptimizerState};

/// One row of the training trace. Values describe the autoencoder as it was
/// at the start of the epoch, before its update.
#[derive(Debug, Clone, PartialEq)]
pub struct EpochRecord {
    /// 1-based.
    pub epoch: usize,
    pub mse: f64,
    /// Loss of the longest-trained pool member.
    pub d_current: f64,
    pub d_hat: f64,
    pub l_a: f64,
    /// Best `l_a` held by the ratchet, once it has started recording.
    pub ratchet_best: Option<f64>,
    /// Full audit score, at audit epochs only.
    pub d_bar: Option<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum StopReason {
    MaxEpochs,
    Patience,
    Diverged,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct TrainingTrace {
    pub records: Vec<EpochRecord>,
    /// Majority-class accuracy (or 0 for R²) on the validation rows.
    pub baseline: Option<f64>,
    pub recoveries: usize,
    pub stop_reason: Option<StopReason>,
}

impl TrainingTrace {
    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn last(&self) -> Option<&EpochRecord> {
        self.records.last()
    }

    /// Audit points as `(epoch, d_bar)`.
    pub fn audits(&self) -> impl Iterator<Item = (usize, f64)> + '_ {
        self.records
            .iter()
            .filter_map(|r| r.d_bar.map(|d| (r.epoch, d)))
    }
}

/// Lowest-loss autoencoder seen so far.
#[derive(Debug, Clone, PartialEq)]
pub struct RatchetState {
    pub best: f64,
    pub snapshot: Network,
    pub epoch: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Decision {
    Continue,
    Stop,
}

const MIN_RELATIVE_IMPROVEMENT: f64 = 1e-5;

fn improved(prev: f64, next: f64) -> bool {
    prev - next > MIN_RELATIVE_IMPROVEMENT * prev.abs()
}

/// Stop at `max_epochs`, or once the ratchet has gone `patience` epochs
/// without a relative improvement above 1e-5.
pub fn stopping_criterion(trace: &TrainingTrace, config: &TrainingConfig) -> Decision {
    let Some(last) = trace.last() else {
        return Decision::Continue;
    };
    if last.epoch >= config.max_epochs {
        return Decision::Stop;
    }
    let recs = &trace.records;
    for i in (0..recs.len()).rev() {
        if last.epoch - recs[i].epoch >= config.patience {
            return if recs[i].ratchet_best.is_some() {
                Decision::Stop
            } else {
                Decision::Continue
            };
        }
        let Some(cur) = recs[i].ratchet_best else {
            return Decision::Continue;
        };
        let progress = match i.checked_sub(1).map(|j| recs[j].ratchet_best) {
            None | Some(None) => true,
            Some(Some(prev)) => improved(prev, cur),
        };
        if progress {
            return Decision::Continue;
        }
    }
    Decision::Continue
}

/// Everything a finished run produces.
#[derive(Debug, Clone)]
pub struct TrainOutcome {
    /// Reconstruction from the ratchet snapshot.
    pub output: DebiasedOutput,
    pub trace: TrainingTrace,
    pub ratchet: RatchetState,
    /// Autoencoder after the last epoch, which may differ from the snapshot.
    pub final_autoencoder: Network,
}

/// Stepwise trainer. [`train`] runs it to completion; drive it directly to
/// inspect state after a failure.
pub struct Trainer<'a> {
    dataset: &'a Dataset,
    config: TrainingConfig,
    autoencoder: Network,
    initial: Network,
    optimizer: OptimizerState,
    pool: AdversaryPool,
    trace: TrainingTrace,
    ratchet: Option<RatchetState>,
    epoch: usize,
    autoencoder_lr: f64,
    adversary_lr: f64,
    warmup: usize,
    done: bool,
}

impl<'a> Trainer<'a> {
    pub fn new(dataset: &'a Dataset, config: &TrainingConfig) -> Result<Self> {
        config.validate()?;
        let d = dataset.width();
        if d == 0 {
            return Err(Error::Data("dataset has no feature columns".into()));
        }
        if dataset.protected.len() != dataset.n_rows() {
            return Err(Error::Shape(format!(
                "{} protected values for {} rows",
                dataset.protected.len(),
                dataset.n_rows()
            )));
        }
        let mut sizes = vec![d];
        sizes.extend(config.hidden_sizes(d));
        sizes.push(d);
        let mut activations = vec![config.autoencoder_activation; sizes.len() - 2];
        activations.push(Activation::Identity);
        let autoencoder = Network::init(
            &sizes,
            &activations,
            crate::derive_seed(config.seed, "autoencoder", 0),
        )?;
        let optimizer = OptimizerState::adam(config.autoencoder_lr, &autoencoder)?;
        let pool = AdversaryPool::new(
            d,
            &dataset.protected,
            PoolSpec {
                size: config.pool_size,
                restart_period: config.restart_period,
                hidden: config.adversary_hidden.unwrap_or(d),
                activation: config.adversary_activation,
                learning_rate: config.adversary_lr,
                seed: crate::derive_seed(config.seed, "pool", 0),
            },
        )?;
        let baseline = match &dataset.protected {
            Protected::Classes { labels, .. } if !dataset.split.validation.is_empty() => {
                Some(majority_baseline(labels, &dataset.split)?)
            }
            Protected::Classes { .. } => None,
            Protected::Continuous { .. } => Some(0.0),
        };
        Ok(Trainer {
            dataset,
            config: config.clone(),
            initial: autoencoder.clone(),
            autoencoder,
            optimizer,
            pool,
            trace: TrainingTrace {
                baseline,
                ..Default::default()
            },
            ratchet: None,
            epoch: 0,
            autoencoder_lr: config.autoencoder_lr,
            adversary_lr: config.adversary_lr,
            warmup: config.ratchet_warmup().min(config.max_epochs).max(1),
            done: false,
        })
    }

    pub fn trace(&self) -> &TrainingTrace {
        &self.trace
    }

    pub fn ratchet(&self) -> Option<&RatchetState> {
        self.ratchet.as_ref()
    }

    pub fn autoencoder(&self) -> &Network {
        &self.autoencoder
    }

    pub fn pool(&self) -> &AdversaryPool {
        &self.pool
    }

    pub fn epoch(&self) -> usize {
        self.epoch
    }

    pub fn is_done(&self) -> bool {
        self.done
    }

    /// Run one epoch, recovering from divergence when allowed.
    pub fn step(&mut self) -> Result<Decision> {
        if self.done {
            return Ok(Decision::Stop);
        }
        self.epoch += 1;
        match self.epoch_inner() {
            Ok(()) => {}
            Err(Error::Training { message, .. }) => self.recover(message)?,
            Err(e) => return Err(e),
        }
        let decision = if self.epoch >= self.config.max_epochs {
            self.trace.stop_reason = Some(StopReason::MaxEpochs);
            Decision::Stop
        } else {
            let d = stopping_criterion(&self.trace, &self.config);
            if d == Decision::Stop {
                self.trace.stop_reason = Some(StopReason::Patience);
            }
            d
        };
        self.done = decision == Decision::Stop;
        Ok(decision)
    }

    pub fn run(&mut self) -> Result<()> {
        while self.step()? == Decision::Continue {}
        Ok(())
    }

    /// Decode the ratchet snapshot into the debiased output.
    pub fn finish(self) -> Result<TrainOutcome> {
        let ratchet = self
            .ratchet
            .ok_or_else(|| Error::training("no epoch completed; ratchet is empty"))?;
        let y = ratchet.snapshot.forward(self.dataset.x.view())?;
        let table = self.dataset.decode(y.view(), true)?;
        Ok(TrainOutcome {
            output: DebiasedOutput {
                y,
                table,
                config_hash: self.config.hash(),
                seed: self.config.seed,
            },
            trace: self.trace,
            ratchet,
            final_autoencoder: self.autoencoder,
        })
    }

    fn recover(&mut self, message: String) -> Result<()> {
        if self.trace.recoveries >= self.config.max_recoveries {
            self.done = true;
            self.trace.stop_reason = Some(StopReason::Diverged);
            return Err(Error::Training {
                message: format!(
                    "epoch {}: {message}; gave up after {} recoveries",
                    self.epoch, self.trace.recoveries
                ),
                snapshot: self.ratchet.as_ref().map(|r| Box::new(r.snapshot.clone())),
            });
        }
        self.trace.recoveries += 1;
        self.autoencoder_lr *= 0.5;
        self.adversary_lr *= 0.5;
        log::warn!(
            "epoch {}: {message}; restoring ratchet snapshot, learning rates now {} / {}",
            self.epoch,
            self.autoencoder_lr,
            self.adversary_lr
        );
        self.autoencoder = match &self.ratchet {
            Some(r) => r.snapshot.clone(),
            None => self.initial.clone(),
        };
        self.optimizer = OptimizerState::adam(self.autoencoder_lr, &self.autoencoder)?;
        self.pool.set_learning_rate(self.adversary_lr);
        self.pool.repair()
    }

    fn epoch_inner(&mut self) -> Result<()> {
        let x = self.dataset.x.view();
        let target = &self.dataset.protected;
        let cfg = &self.config;
        self.pool.begin_epoch(self.epoch)?;

        let cache = self.autoencoder.forward_cached(x)?;
        let y = cache.output();
        if !y.iter().all(|v| v.is_finite()) {
            return Err(Error::training("non-finite reconstruction"));
        }
        let penalty = self.pool.penalty(y.view(), target)?;
        let reg = regularization_from_cache(
            &self.autoencoder,
            &cache,
            cfg.weight_decay,
            cfg.contractive_weight,
        )?;
        let parts = LossComponents {
            mse: nn::mse(y.view(), x)?,
            dhat: penalty.dhat,
            reg: reg.value,
        };
        let l_a = parts.total(cfg.c);
        if !(l_a.is_finite() && penalty.oldest_loss.is_finite()) {
            return Err(Error::training(format!("non-finite loss {parts:?}")));
        }

        if self.epoch >= self.warmup && self.ratchet.as_ref().is_none_or(|r| l_a < r.best) {
            self.ratchet = Some(RatchetState {
                best: l_a,
                snapshot: self.autoencoder.clone(),
                epoch: self.epoch,
            });
        }
        let d_bar = if cfg.audit_period > 0 && self.epoch.is_multiple_of(cfg.audit_period) {
            Some(self.audit(y.view())?)
        } else {
            None
        };
        self.trace.records.push(EpochRecord {
            epoch: self.epoch,
            mse: parts.mse,
            d_current: penalty.oldest_loss,
            d_hat: parts.dhat,
            l_a,
            ratchet_best: self.ratchet.as_ref().map(|r| r.best),
            d_bar,
        });

        // Autoencoder update; the pool penalty enters through y only.
        let mut grad_y = nn::mse_grad(y.view(), x)?;
        if cfg.c != 0.0 {
            grad_y.scaled_add(cfg.c, &penalty.grad_y);
        }
        let mut grads = self.autoencoder.backward(&cache, &grad_y)?.grads;
        grads.add_scaled(&reg.grads, 1.0)?;
        let boost = LrBoost::factor_at(cfg.lr_boost.as_ref(), self.epoch);
        self.optimizer
            .set_learning_rate(self.autoencoder_lr * boost);
        self.optimizer.step(&mut self.autoencoder, &grads)?;

        // Pool updates on the new reconstruction.
        let y: Array2<f64> = self.autoencoder.forward(x)?;
        if !y.iter().all(|v| v.is_finite()) {
            return Err(Error::training("non-finite reconstruction after update"));
        }
        self.pool.train(y.view(), target, cfg.k)
    }

    fn audit(&self, y: ArrayView2<f64>) -> Result<f64> {
        let report = full_train_audit(
            y,
            &self.dataset.protected,
            &self.dataset.split,
            &self.config.audit,
            AuditMode::PostDebias,
        )?;
        log::info!(
            "epoch {}: d_bar {:.4} (baseline {:.4})",
            self.epoch,
            report.d_bar,
            report.baseline
        );
        Ok(report.d_bar)
    }
}

/// Train to completion and return the ratchet snapshot's reconstruction.
pub fn train(dataset: &Dataset, config: &TrainingConfig) -> Result<TrainOutcome> {
    let mut trainer = Trainer::new(dataset, config)?;
    trainer.run()?;
    trainer.finish()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::LoadOptions;
    use crate::synthetic::{planted_dataset, PlantedConfig};

    fn record(epoch: usize, best: Option<f64>) -> EpochRecord {
        EpochRecord {
            epoch,
            mse: 0.0,
            d_current: 0.0,
            d_hat: 0.0,
            l_a: best.unwrap_or(1.0),
            ratchet_best: best,
            d_bar: None,
        }
    }

    fn trace(bests: &[Option<f64>]) -> TrainingTrace {
        TrainingTrace {
            records: bests
                .iter()
                .enumerate()
                .map(|(i, b)| record(i + 1, *b))
                .collect(),
            ..Default::default()
        }
    }

    fn small() -> TrainingConfig {
        TrainingConfig {
            max_epochs: 60,
            restart_period: 30,
            audit_period: 0,
            ..Default::default()
        }
    }

    fn dataset(n: usize) -> Dataset {
        planted_dataset(
            &PlantedConfig {
                n,
                ..Default::default()
            },
            &LoadOptions::default(),
        )
        .unwrap()
    }

    #[test]
    fn stops_at_max_epochs() {
        let cfg = TrainingConfig {
            max_epochs: 3,
            ..Default::default()
        };
        assert_eq!(
            stopping_criterion(&trace(&[Some(3.0), Some(2.0), Some(1.0)]), &cfg),
            Decision::Stop
        );
    }

    #[test]
    fn improving_trace_continues() {
        let cfg = TrainingConfig {
            patience: 2,
            ..Default::default()
        };
        let t: Vec<_> = (0..20).map(|i| Some(10.0 - i as f64 * 0.1)).collect();
        assert_eq!(stopping_criterion(&trace(&t), &cfg), Decision::Continue);
    }

    #[test]
    fn flat_trace_of_patience_plus_one_stops() {
        let cfg = TrainingConfig {
            patience: 4,
            ..Default::default()
        };
        assert_eq!(
            stopping_criterion(&trace(&[Some(1.0); 5]), &cfg),
            Decision::Stop
        );
        assert_eq!(
            stopping_criterion(&trace(&[Some(1.0); 4]), &cfg),
            Decision::Continue
        );
        // improvements below the relative threshold do not count
        let tiny: Vec<_> = (0..5).map(|i| Some(1.0 - i as f64 * 1e-7)).collect();
        assert_eq!(stopping_criterion(&trace(&tiny), &cfg), Decision::Stop);
    }

    #[test]
    fn warmup_epochs_do_not_count_against_patience() {
        let cfg = TrainingConfig {
            patience: 3,
            ..Default::default()
        };
        let t = [None, None, None, None, Some(1.0), Some(1.0)];
        assert_eq!(stopping_criterion(&trace(&t), &cfg), Decision::Continue);
        assert_eq!(
            stopping_criterion(&TrainingTrace::default(), &cfg),
            Decision::Continue
        );
    }

    #[test]
    fn trace_is_complete_and_ratchet_monotone() {
        let data = dataset(120);
        let out = train(&data, &small()).unwrap();
        assert_eq!(out.trace.len(), 60);
        let mut prev = f64::INFINITY;
        for (i, r) in out.trace.records.iter().enumerate() {
            assert_eq!(r.epoch, i + 1);
            assert!(
                r.mse.is_finite()
                    && r.d_current.is_finite()
                    && r.d_hat.is_finite()
                    && r.l_a.is_finite()
            );
            assert_eq!(r.ratchet_best.is_some(), r.epoch >= 30);
            if let Some(b) = r.ratchet_best {
                assert!(b <= prev);
                assert!(b <= r.l_a);
                prev = b;
            }
        }
        assert_eq!(out.ratchet.best, prev);
        let y = out.ratchet.snapshot.forward(data.x.view()).unwrap();
        assert_eq!(y, out.output.y);
        assert_eq!(out.trace.stop_reason, Some(StopReason::MaxEpochs));
    }

    #[test]
    fn fixed_seed_is_bit_identical() {
        let data = dataset(80);
        let a = train(&data, &small()).unwrap();
        let b = train(&data, &small()).unwrap();
        assert_eq!(a.trace, b.trace);
        assert_eq!(a.output.y, b.output.y);
        let c = train(&data, &TrainingConfig { seed: 1, ..small() }).unwrap();
        assert_ne!(a.trace, c.trace);
    }

    #[test]
    fn zero_c_has_no_adversary_influence() {
        // With c = 0 the autoencoder never sees the pool, so a different pool
        // leaves every autoencoder quantity unchanged.
        let data = dataset(80);
        let a = train(&data, &TrainingConfig { c: 0.0, ..small() }).unwrap();
        let b = train(
            &data,
            &TrainingConfig {
                c: 0.0,
                pool_size: 2,
                adversary_lr: 5e-2,
                ..small()
            },
        )
        .unwrap();
        assert_eq!(a.final_autoencoder, b.final_autoencoder);
        for (ra, rb) in a.trace.records.iter().zip(&b.trace.records) {
            assert_eq!((ra.mse, ra.l_a), (rb.mse, rb.l_a));
        }
        assert!(a
            .trace
            .records
            .iter()
            .zip(&b.trace.records)
            .any(|(ra, rb)| ra.d_hat != rb.d_hat));
    }

    #[test]
    fn updates_are_isolated() {
        let data = dataset(60);
        let mut t = Trainer::new(&data, &small()).unwrap();
        t.step().unwrap();
        // The autoencoder step must leave the pool alone, and pool steps the
        // autoencoder: replay one epoch by hand and compare fingerprints.
        let ae_before = t.autoencoder().fingerprint();
        let pool_before = t.pool().fingerprints();
        let x = data.x.view();
        let cache = t.autoencoder.forward_cached(x).unwrap();
        let g = nn::mse_grad(cache.output().view(), x).unwrap();
        let grads = t.autoencoder.backward(&cache, &g).unwrap().grads;
        t.optimizer.step(&mut t.autoencoder, &grads).unwrap();
        assert_eq!(t.pool().fingerprints(), pool_before);
        assert_ne!(t.autoencoder().fingerprint(), ae_before);
        let ae_after = t.autoencoder().fingerprint();
        let y = t.autoencoder.forward(x).unwrap();
        t.pool.train(y.view(), &data.protected, 3).unwrap();
        assert_eq!(t.autoencoder().fingerprint(), ae_after);
        assert_ne!(t.pool().fingerprints(), pool_before);
    }

    #[test]
    fn boosted_learning_rate_keeps_the_ratchet_snapshot() {
        let data = dataset(80);
        let cfg = TrainingConfig {
            lr_boost: Some(LrBoost {
                start_epoch: 45,
                epochs: 10,
                factor: 1000.0,
            }),
            ..small()
        };
        let out = train(&data, &cfg).unwrap();
        let best = out
            .trace
            .records
            .iter()
            .filter(|r| r.ratchet_best.is_some())
            .map(|r| r.l_a)
            .fold(f64::INFINITY, f64::min);
        assert_eq!(out.ratchet.best, best);
        let snap_y = out.ratchet.snapshot.forward(data.x.view()).unwrap();
        assert_eq!(snap_y, out.output.y);
        assert_ne!(
            out.final_autoencoder.forward(data.x.view()).unwrap(),
            out.output.y
        );
    }

    #[test]
    fn overflow_triggers_recovery_then_error() {
        let data = dataset(60);
        let cfg = TrainingConfig {
            lr_boost: Some(LrBoost {
                start_epoch: 40,
                epochs: 1000,
                factor: 1e300,
            }),
            max_recoveries: 2,
            ..small()
        };
        let mut t = Trainer::new(&data, &cfg).unwrap();
        let err = t.run().unwrap_err();
        match err {
            Error::Training { snapshot, .. } => {
                assert_eq!(*snapshot.unwrap(), t.ratchet().unwrap().snapshot);
            }
            e => panic!("{e}"),
        }
        assert_eq!(t.trace().recoveries, 2);
        assert_eq!(t.trace().stop_reason, Some(StopReason::Diverged));
        assert!(t.trace().records.iter().all(|r| r.l_a.is_finite()));
    }

    #[test]
    fn recovery_halves_learning_rates() {
        let data = dataset(60);
        let cfg = TrainingConfig {
            lr_boost: Some(LrBoost {
                start_epoch: 40,
                epochs: 1,
                factor: 1e300,
            }),
            ..small()
        };
        let mut t = Trainer::new(&data, &cfg).unwrap();
        t.run().unwrap();
        assert!(t.trace().recoveries >= 1);
        assert_eq!(
            t.autoencoder_lr,
            cfg.autoencoder_lr * 0.5f64.powi(t.trace().recoveries as i32)
        );
        assert_eq!(t.trace().len(), 60 - t.trace().recoveries);
    }
}
