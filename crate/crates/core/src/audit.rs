//! Bias audits: how well a freshly trained adversary recovers the protected
//! attribute from a feature matrix, compared with always guessing the most
//! frequent class.
//!
//! An audit trains a one-hidden-layer network (hidden width equal to the
//! feature width) from several seeds and keeps the best validation score
//! seen at any epoch of any run. Accuracy is used for class targets and R²
//! for continuous ones.

use std::path::Path;

use ndarray::{Array2, ArrayView2, Axis};

use crate::data::{target_fingerprint, Protected, Split};
use crate::error::{Error, Result};
use crate::kv::KvDoc;
use crate::nn::{self, Activation, Network, OptimizerState};

pub const DEFAULT_TAU: f64 = 0.05;

#[derive(Debug, Clone, PartialEq)]
pub struct AuditConfig {
    pub runs: usize,
    pub max_epochs: usize,
    /// Stop a run after this many epochs without a better validation score.
    /// `None` always trains for `max_epochs`.
    pub patience: Option<usize>,
    pub learning_rate: f64,
    pub hidden_activation: Activation,
    pub seed: u64,
}

impl Default for AuditConfig {
    fn default() -> Self {
        AuditConfig {
            runs: 3,
            max_epochs: 10_000,
            patience: Some(2_000),
            learning_rate: 1e-3,
            hidden_activation: Activation::Relu,
            seed: 0,
        }
    }
}

impl AuditConfig {
    pub fn validate(&self) -> Result<()> {
        if self.runs == 0 || self.max_epochs == 0 {
            return Err(Error::Config(
                "audit needs at least one run and one epoch".into(),
            ));
        }
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return Err(Error::Config("audit learning rate must be positive".into()));
        }
        if self.patience == Some(0) {
            return Err(Error::Config("audit patience must be positive".into()));
        }
        Ok(())
    }

    fn run_seed(&self, run: usize) -> u64 {
        crate::derive_seed(self.seed, "audit", run as u64)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum AuditMode {
    PreDebias,
    PostDebias,
}

impl AuditMode {
    pub fn as_str(self) -> &'static str {
        match self {
            AuditMode::PreDebias => "pre_debias",
            AuditMode::PostDebias => "post_debias",
        }
    }

    fn parse(s: &str) -> Option<Self> {
        match s {
            "pre_debias" => Some(AuditMode::PreDebias),
            "post_debias" => Some(AuditMode::PostDebias),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Metric {
    Accuracy,
    RSquared,
}

impl Metric {
    pub fn as_str(self) -> &'static str {
        match self {
            Metric::Accuracy => "accuracy",
            Metric::RSquared => "r2",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunResult {
    pub seed: u64,
    /// 1-based epoch with the best validation score.
    pub best_epoch: usize,
    pub best_score: f64,
    pub epochs_trained: usize,
    pub early_exit: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct AuditReport {
    pub mode: AuditMode,
    pub metric: Metric,
    /// Best validation score over all runs.
    pub d_bar: f64,
    /// Majority-class validation accuracy, or 0 for R².
    pub baseline: f64,
    /// 95% normal-approximation binomial interval around the baseline.
    pub baseline_interval: (f64, f64),
    pub runs: Vec<RunResult>,
    pub fingerprint: String,
    pub n_train: usize,
    pub n_validation: usize,
}

fn rows(x: ArrayView2<f64>, idx: &[usize]) -> Array2<f64> {
    x.select(Axis(0), idx)
}

/// Frequency of the training-set modal class within the validation rows.
/// Ties in the mode go to the lowest class index.
pub fn majority_baseline(labels: &[usize], split: &Split) -> Result<f64> {
    if split.validation.is_empty() {
        return Err(Error::Audit("validation set is empty".into()));
    }
    let classes = labels.iter().copied().max().map_or(0, |m| m + 1);
    let mut counts = vec![0usize; classes];
    for &i in &split.train {
        counts[labels[i]] += 1;
    }
    let mode = counts
        .iter()
        .enumerate()
        .fold(
            (0, 0),
            |best, (c, &n)| if n > best.1 { (c, n) } else { best },
        )
        .0;
    let hits = split
        .validation
        .iter()
        .filter(|&&i| labels[i] == mode)
        .count();
    Ok(hits as f64 / split.validation.len() as f64)
}

fn accuracy(probs: ArrayView2<f64>, labels: &[usize]) -> f64 {
    let hits = probs
        .rows()
        .into_iter()
        .zip(labels)
        .filter(|(row, &l)| {
            let mut best = 0;
            for (j, &p) in row.iter().enumerate() {
                if p > row[best] {
                    best = j;
                }
            }
            best == l
        })
        .count();
    hits as f64 / labels.len() as f64
}

fn r_squared(pred: ArrayView2<f64>, target: &[f64]) -> f64 {
    let mean = target.iter().sum::<f64>() / target.len() as f64;
    let sst: f64 = target.iter().map(|t| (t - mean).powi(2)).sum();
    let sse: f64 = pred
        .column(0)
        .iter()
        .zip(target)
        .map(|(p, t)| (p - t).powi(2))
        .sum();
    if sst == 0.0 {
        0.0
    } else {
        1.0 - sse / sst
    }
}

/// Architecture shared by audit adversaries: `d → d → C`.
pub fn audit_network(
    width: usize,
    target: &Protected,
    activation: Activation,
    seed: u64,
) -> Result<Network> {
    let (out, out_act) = match target {
        Protected::Classes { names, .. } => (names.len(), Activation::Softmax),
        Protected::Continuous { .. } => (1, Activation::Identity),
    };
    Network::init(&[width, width, out], &[activation, out_act], seed)
}

fn target_matrix(target: &Protected) -> Option<Array2<f64>> {
    match target {
        Protected::Classes { .. } => None,
        Protected::Continuous { values } => {
            Some(Array2::from_shape_vec((values.len(), 1), values.clone()).unwrap())
        }
    }
}

fn train_run(
    x_train: &Array2<f64>,
    t_train: &Protected,
    x_val: &Array2<f64>,
    t_val: &Protected,
    config: &AuditConfig,
    seed: u64,
) -> Result<RunResult> {
    let mut net = audit_network(x_train.ncols(), t_train, config.hidden_activation, seed)?;
    let mut opt = OptimizerState::adam(config.learning_rate, &net)?;
    let reg_target = target_matrix(t_train);
    let reg_val: Vec<f64> = match t_val {
        Protected::Continuous { values } => values.clone(),
        _ => Vec::new(),
    };
    let mut best = RunResult {
        seed,
        best_epoch: 0,
        best_score: f64::NEG_INFINITY,
        epochs_trained: 0,
        early_exit: false,
    };
    for epoch in 1..=config.max_epochs {
        let cache = net.forward_cached(x_train.view())?;
        let grad = match (t_train, &reg_target) {
            (Protected::Classes { labels, .. }, _) => {
                nn::cross_entropy_grad(cache.output().view(), labels)
            }
            (_, Some(t)) => nn::mse_grad(cache.output().view(), t.view())?,
            _ => unreachable!(),
        };
        let back = net.backward(&cache, &grad)?;
        opt.step(&mut net, &back.grads)?;

        let pred = net.forward(x_val.view())?;
        let score = match t_val {
            Protected::Classes { labels, .. } => accuracy(pred.view(), labels),
            Protected::Continuous { .. } => r_squared(pred.view(), &reg_val),
        };
        best.epochs_trained = epoch;
        if score > best.best_score {
            best.best_score = score;
            best.best_epoch = epoch;
        } else if let Some(p) = config.patience {
            if epoch - best.best_epoch >= p {
                best.early_exit = epoch < config.max_epochs;
                break;
            }
        }
    }
    Ok(best)
}

/// Train the audit adversary from `config.runs` seeds on the training rows
/// of `features` and report the best validation score.
pub fn full_train_audit(
    features: ArrayView2<f64>,
    target: &Protected,
    split: &Split,
    config: &AuditConfig,
    mode: AuditMode,
) -> Result<AuditReport> {
    config.validate()?;
    if features.nrows() != target.len() {
        return Err(Error::Shape(format!(
            "{} feature rows for {} targets",
            features.nrows(),
            target.len()
        )));
    }
    split.validate(features.nrows())?;
    if split.validation.is_empty() || split.train.is_empty() {
        return Err(Error::Audit(
            "audit needs non-empty train and validation sets".into(),
        ));
    }
    let t_val = target.select(&split.validation);
    if let Protected::Classes { labels, .. } = &t_val {
        if labels.iter().all(|&l| l == labels[0]) {
            return Err(Error::Audit(
                "validation set contains a single protected class".into(),
            ));
        }
    }
    let x_train = rows(features, &split.train);
    let x_val = rows(features, &split.validation);
    let t_train = target.select(&split.train);

    let runs = (0..config.runs)
        .map(|r| {
            train_run(
                &x_train,
                &t_train,
                &x_val,
                &t_val,
                config,
                config.run_seed(r),
            )
        })
        .collect::<Result<Vec<_>>>()?;
    let d_bar = runs
        .iter()
        .map(|r| r.best_score)
        .fold(f64::NEG_INFINITY, f64::max);

    let (metric, baseline) = match target {
        Protected::Classes { labels, .. } => (Metric::Accuracy, majority_baseline(labels, split)?),
        Protected::Continuous { .. } => (Metric::RSquared, 0.0),
    };
    let n_val = split.validation.len() as f64;
    let half = match metric {
        Metric::Accuracy => 1.96 * (baseline * (1.0 - baseline) / n_val).sqrt(),
        Metric::RSquared => 0.0,
    };
    Ok(AuditReport {
        mode,
        metric,
        d_bar,
        baseline,
        baseline_interval: ((baseline - half).max(0.0), (baseline + half).min(1.0)),
        runs,
        fingerprint: target_fingerprint(target, split),
        n_train: split.train.len(),
        n_validation: split.validation.len(),
    })
}

impl AuditReport {
    pub fn gap(&self) -> f64 {
        self.d_bar - self.baseline
    }

    pub fn to_kv(&self) -> KvDoc {
        let mut d = KvDoc::new();
        d.set("mode", self.mode.as_str());
        d.set("metric", self.metric.as_str());
        d.set("d_bar", self.d_bar);
        d.set("baseline", self.baseline);
        d.set("baseline_ci_low", self.baseline_interval.0);
        d.set("baseline_ci_high", self.baseline_interval.1);
        d.set("fingerprint", &self.fingerprint);
        d.set("n_train", self.n_train);
        d.set("n_validation", self.n_validation);
        d.set("runs", self.runs.len());
        for (i, r) in self.runs.iter().enumerate() {
            d.set(&format!("run.{i}.seed"), r.seed);
            d.set(&format!("run.{i}.best_epoch"), r.best_epoch);
            d.set(&format!("run.{i}.best_score"), r.best_score);
            d.set(&format!("run.{i}.epochs_trained"), r.epochs_trained);
            d.set(&format!("run.{i}.early_exit"), r.early_exit);
        }
        d
    }

    pub fn to_text(&self) -> String {
        self.to_kv().to_text(Some("bias audit report"))
    }

    pub fn from_kv(d: &KvDoc) -> Result<Self> {
        let bad = |key: &str, v: &str| Error::Parse {
            path: "<report>".into(),
            line: 0,
            message: format!("bad value '{v}' for '{key}'"),
        };
        let mode_s: String = d.require("mode")?;
        let mode = AuditMode::parse(&mode_s).ok_or_else(|| bad("mode", &mode_s))?;
        let metric_s: String = d.require("metric")?;
        let metric = match metric_s.as_str() {
            "accuracy" => Metric::Accuracy,
            "r2" => Metric::RSquared,
            _ => return Err(bad("metric", &metric_s)),
        };
        let n_runs: usize = d.require("runs")?;
        let runs = (0..n_runs)
            .map(|i| {
                Ok(RunResult {
                    seed: d.require(&format!("run.{i}.seed"))?,
                    best_epoch: d.require(&format!("run.{i}.best_epoch"))?,
                    best_score: d.require(&format!("run.{i}.best_score"))?,
                    epochs_trained: d.require(&format!("run.{i}.epochs_trained"))?,
                    early_exit: d.require(&format!("run.{i}.early_exit"))?,
                })
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(AuditReport {
            mode,
            metric,
            d_bar: d.require("d_bar")?,
            baseline: d.require("baseline")?,
            baseline_interval: (
                d.require("baseline_ci_low")?,
                d.require("baseline_ci_high")?,
            ),
            runs,
            fingerprint: d.require("fingerprint")?,
            n_train: d.require("n_train")?,
            n_validation: d.require("n_validation")?,
        })
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_text()).map_err(|e| Error::io(path, e))
    }

    pub fn read(path: &Path) -> Result<Self> {
        let doc = KvDoc::read(path)?;
        Self::from_kv(&doc).map_err(|e| match e {
            Error::Parse { line, message, .. } => Error::Parse {
                path: path.to_path_buf(),
                line,
                message,
            },
            other => other,
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Verdict {
    Debiased,
    NotDebiased,
}

#[derive(Debug, Clone, PartialEq)]
pub struct BiasSummary {
    pub pre_d_bar: f64,
    pub post_d_bar: f64,
    pub baseline: f64,
    pub pre_gap: f64,
    pub post_gap: f64,
    pub tau: f64,
    pub verdict: Verdict,
    /// The post-debias adversary scored below the baseline.
    pub below_chance: bool,
    pub baseline_interval: (f64, f64),
}

/// Compare audits of the same rows before and after debiasing.
pub fn bias_report(pre: &AuditReport, post: &AuditReport, tau: f64) -> Result<BiasSummary> {
    if pre.fingerprint != post.fingerprint {
        return Err(Error::Audit(format!(
            "reports describe different data or splits ({} vs {})",
            pre.fingerprint, post.fingerprint
        )));
    }
    let baseline = post.baseline;
    let post_gap = post.d_bar - baseline;
    Ok(BiasSummary {
        pre_d_bar: pre.d_bar,
        post_d_bar: post.d_bar,
        baseline,
        pre_gap: pre.d_bar - baseline,
        post_gap,
        tau,
        verdict: if post_gap <= tau {
            Verdict::Debiased
        } else {
            Verdict::NotDebiased
        },
        below_chance: post_gap < 0.0,
        baseline_interval: post.baseline_interval,
    })
}

impl std::fmt::Display for BiasSummary {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        writeln!(f, "pre-debias d_bar:   {:.4}", self.pre_d_bar)?;
        writeln!(f, "post-debias d_bar:  {:.4}", self.post_d_bar)?;
        writeln!(
            f,
            "baseline:           {:.4}  (95% interval {:.4}..{:.4})",
            self.baseline, self.baseline_interval.0, self.baseline_interval.1
        )?;
        writeln!(f, "gap pre:            {:+.4}", self.pre_gap)?;
        writeln!(f, "gap post:           {:+.4}", self.post_gap)?;
        let verdict = match self.verdict {
            Verdict::Debiased => "debiased",
            Verdict::NotDebiased => "not_debiased",
        };
        writeln!(f, "verdict: {verdict} (tau = {})", self.tau)?;
        if self.below_chance {
            writeln!(f, "warning: post-debias adversary is below the baseline")?;
        }
        Ok(())
    }
}
