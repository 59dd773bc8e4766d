use sha2::{Digest, Sha256};

use crate::audit::AuditConfig;
use crate::error::{Error, Result};
use crate::kv::KvDoc;
use crate::nn::Activation;

/// Temporary learning-rate multiplier on the autoencoder, used to provoke
/// divergence in robustness tests.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LrBoost {
    /// First boosted epoch (1-based).
    pub start_epoch: usize,
    pub epochs: usize,
    pub factor: f64,
}

impl LrBoost {
    fn active(&self, epoch: usize) -> bool {
        epoch >= self.start_epoch && epoch < self.start_epoch + self.epochs
    }

    pub(crate) fn factor_at(boost: Option<&LrBoost>, epoch: usize) -> f64 {
        match boost {
            Some(b) if b.active(epoch) => b.factor,
            _ => 1.0,
        }
    }
}

/// Hyperparameters of the adversarial training loop.
#[derive(Debug, Clone, PartialEq)]
pub struct TrainingConfig {
    /// Weight of the adversary penalty in the autoencoder loss.
    pub c: f64,
    /// Adversary updates per autoencoder update.
    pub k: usize,
    pub autoencoder_lr: f64,
    pub adversary_lr: f64,
    pub weight_decay: f64,
    pub contractive_weight: f64,
    /// Hidden widths of the autoencoder. Empty means `[ceil(d / 2)]`.
    pub autoencoder_hidden: Vec<usize>,
    pub autoencoder_activation: Activation,
    /// Hidden width of each pool adversary. `None` means the data width.
    pub adversary_hidden: Option<usize>,
    pub adversary_activation: Activation,
    pub pool_size: usize,
    /// Epochs between cold restarts of each pool member.
    pub restart_period: usize,
    pub max_epochs: usize,
    pub patience: usize,
    /// Epochs before the ratchet starts recording. `None` means one restart period.
    pub ratchet_warmup: Option<usize>,
    /// Full audit every this many epochs; 0 disables trace audits.
    pub audit_period: usize,
    pub audit: AuditConfig,
    pub max_recoveries: usize,
    pub seed: u64,
    pub lr_boost: Option<LrBoost>,
}

impl Default for TrainingConfig {
    fn default() -> Self {
        TrainingConfig {
            c: 1.0,
            k: 5,
            autoencoder_lr: 1e-3,
            adversary_lr: 1e-3,
            weight_decay: 1e-4,
            contractive_weight: 1e-4,
            autoencoder_hidden: Vec::new(),
            autoencoder_activation: Activation::Tanh,
            adversary_hidden: None,
            adversary_activation: Activation::Relu,
            pool_size: 3,
            restart_period: 300,
            max_epochs: 5000,
            patience: 500,
            ratchet_warmup: None,
            audit_period: 500,
            audit: AuditConfig::default(),
            max_recoveries: 3,
            seed: 0,
            lr_boost: None,
        }
    }
}

fn non_negative(name: &str, v: f64) -> Result<()> {
    if v >= 0.0 && v.is_finite() {
        Ok(())
    } else {
        Err(Error::Config(format!(
            "{name} must be a finite non-negative number, got {v}"
        )))
    }
}

impl TrainingConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.c >= 0.0 && self.c.is_finite()) {
            return Err(Error::Config(format!(
                "c must be non-negative, got {}",
                self.c
            )));
        }
        non_negative("weight_decay", self.weight_decay)?;
        non_negative("contractive_weight", self.contractive_weight)?;
        for (name, lr) in [
            ("autoencoder_lr", self.autoencoder_lr),
            ("adversary_lr", self.adversary_lr),
        ] {
            if !(lr > 0.0 && lr.is_finite()) {
                return Err(Error::Config(format!("{name} must be positive, got {lr}")));
            }
        }
        if self.k == 0 {
            return Err(Error::Config("k must be at least 1".into()));
        }
        if self.pool_size == 0 {
            return Err(Error::Config("adversary pool must not be empty".into()));
        }
        if self.restart_period == 0 || self.max_epochs == 0 || self.patience == 0 {
            return Err(Error::Config(
                "restart_period, max_epochs and patience must be positive".into(),
            ));
        }
        if self.autoencoder_hidden.contains(&0) || self.adversary_hidden == Some(0) {
            return Err(Error::Config("hidden widths must be positive".into()));
        }
        if self.autoencoder_activation == Activation::Softmax
            || self.adversary_activation == Activation::Softmax
        {
            return Err(Error::Config(
                "softmax is only used on adversary outputs".into(),
            ));
        }
        if let Some(b) = &self.lr_boost {
            if !(b.factor > 0.0 && b.factor.is_finite()) {
                return Err(Error::Config("lr boost factor must be positive".into()));
            }
        }
        if self.audit_period > 0 {
            self.audit.validate()?;
        }
        Ok(())
    }

    pub fn ratchet_warmup(&self) -> usize {
        self.ratchet_warmup.unwrap_or(self.restart_period)
    }

    pub fn hidden_sizes(&self, width: usize) -> Vec<usize> {
        if self.autoencoder_hidden.is_empty() {
            vec![width.div_ceil(2).max(1)]
        } else {
            self.autoencoder_hidden.clone()
        }
    }

    pub fn to_kv(&self) -> KvDoc {
        let mut d = KvDoc::new();
        d.set("c", self.c);
        d.set("k", self.k);
        d.set("autoencoder_lr", self.autoencoder_lr);
        d.set("adversary_lr", self.adversary_lr);
        d.set("weight_decay", self.weight_decay);
        d.set("contractive_weight", self.contractive_weight);
        let hidden: Vec<String> = self
            .autoencoder_hidden
            .iter()
            .map(|h| h.to_string())
            .collect();
        d.set("autoencoder_hidden", hidden.join(","));
        d.set("autoencoder_activation", self.autoencoder_activation.name());
        d.set(
            "adversary_hidden",
            self.adversary_hidden
                .map_or(String::new(), |h| h.to_string()),
        );
        d.set("adversary_activation", self.adversary_activation.name());
        d.set("pool_size", self.pool_size);
        d.set("restart_period", self.restart_period);
        d.set("max_epochs", self.max_epochs);
        d.set("patience", self.patience);
        if let Some(w) = self.ratchet_warmup {
            d.set("ratchet_warmup", w);
        }
        d.set("audit_period", self.audit_period);
        d.set("audit_runs", self.audit.runs);
        d.set("audit_epochs", self.audit.max_epochs);
        d.set("audit_patience", self.audit.patience.map_or(0, |p| p));
        d.set("audit_lr", self.audit.learning_rate);
        d.set("audit_activation", self.audit.hidden_activation.name());
        d.set("audit_seed", self.audit.seed);
        d.set("max_recoveries", self.max_recoveries);
        d.set("seed", self.seed);
        if let Some(b) = &self.lr_boost {
            d.set(
                "lr_boost",
                format!("{}:{}:{}", b.start_epoch, b.epochs, b.factor),
            );
        }
        d
    }

    /// Overlay keys present in `d` onto `self`. Unknown keys are ignored.
    pub fn apply_kv(&mut self, d: &KvDoc) -> Result<()> {
        macro_rules! take {
            ($field:expr, $key:literal) => {
                if let Some(v) = d.parsed($key)? {
                    $field = v;
                }
            };
        }
        take!(self.c, "c");
        take!(self.k, "k");
        take!(self.autoencoder_lr, "autoencoder_lr");
        take!(self.adversary_lr, "adversary_lr");
        take!(self.weight_decay, "weight_decay");
        take!(self.contractive_weight, "contractive_weight");
        take!(self.pool_size, "pool_size");
        take!(self.restart_period, "restart_period");
        take!(self.max_epochs, "max_epochs");
        take!(self.patience, "patience");
        take!(self.audit_period, "audit_period");
        take!(self.audit.runs, "audit_runs");
        take!(self.audit.max_epochs, "audit_epochs");
        take!(self.audit.learning_rate, "audit_lr");
        take!(self.audit.seed, "audit_seed");
        take!(self.max_recoveries, "max_recoveries");
        take!(self.seed, "seed");
        if let Some(p) = d.parsed::<usize>("audit_patience")? {
            self.audit.patience = (p > 0).then_some(p);
        }
        if let Some(w) = d.parsed::<usize>("ratchet_warmup")? {
            self.ratchet_warmup = Some(w);
        }
        if let Some(h) = d.get("autoencoder_hidden") {
            self.autoencoder_hidden = parse_list(h)?;
        }
        if let Some(h) = d.get("adversary_hidden") {
            self.adversary_hidden = if h.is_empty() {
                None
            } else {
                Some(
                    h.parse()
                        .map_err(|_| Error::Config(format!("bad adversary_hidden '{h}'")))?,
                )
            };
        }
        for (key, slot) in [
            ("autoencoder_activation", &mut self.autoencoder_activation),
            ("adversary_activation", &mut self.adversary_activation),
            ("audit_activation", &mut self.audit.hidden_activation),
        ] {
            if let Some(v) = d.get(key) {
                *slot = Activation::parse(v)
                    .ok_or_else(|| Error::Config(format!("unknown activation '{v}' for {key}")))?;
            }
        }
        if let Some(v) = d.get("lr_boost") {
            let parts: Vec<&str> = v.split(':').collect();
            let bad = || Error::Config(format!("lr_boost must be start:epochs:factor, got '{v}'"));
            if parts.len() != 3 {
                return Err(bad());
            }
            self.lr_boost = Some(LrBoost {
                start_epoch: parts[0].trim().parse().map_err(|_| bad())?,
                epochs: parts[1].trim().parse().map_err(|_| bad())?,
                factor: parts[2].trim().parse().map_err(|_| bad())?,
            });
        }
        Ok(())
    }

    /// Short stable hash of every setting.
    pub fn hash(&self) -> String {
        let text = self.to_kv().to_text(None);
        crate::hex(&Sha256::digest(text.as_bytes())[..8])
    }
}

fn parse_list(s: &str) -> Result<Vec<usize>> {
    s.split(',')
        .map(str::trim)
        .filter(|p| !p.is_empty())
        .map(|p| {
            p.parse()
                .map_err(|_| Error::Config(format!("bad width '{p}' in '{s}'")))
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_are_valid() {
        TrainingConfig::default().validate().unwrap();
        assert_eq!(TrainingConfig::default().hidden_sizes(7), vec![4]);
    }

    #[test]
    fn invalid_settings() {
        let bad = [
            TrainingConfig {
                c: -1.0,
                ..Default::default()
            },
            TrainingConfig {
                k: 0,
                ..Default::default()
            },
            TrainingConfig {
                pool_size: 0,
                ..Default::default()
            },
            TrainingConfig {
                adversary_lr: 0.0,
                ..Default::default()
            },
            TrainingConfig {
                weight_decay: -1e-3,
                ..Default::default()
            },
        ];
        for cfg in bad {
            assert!(matches!(cfg.validate(), Err(Error::Config(_))), "{cfg:?}");
        }
    }

    #[test]
    fn kv_roundtrip() {
        let cfg = TrainingConfig {
            c: 2.5,
            k: 3,
            autoencoder_hidden: vec![8, 4],
            adversary_hidden: Some(12),
            lr_boost: Some(LrBoost {
                start_epoch: 10,
                epochs: 5,
                factor: 1000.0,
            }),
            ratchet_warmup: Some(42),
            ..Default::default()
        };
        let mut back = TrainingConfig::default();
        back.apply_kv(&cfg.to_kv()).unwrap();
        assert_eq!(back, cfg);
        assert_eq!(back.hash(), cfg.hash());
        assert_ne!(TrainingConfig::default().hash(), cfg.hash());
    }
}
