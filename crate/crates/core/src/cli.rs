//! Command-line front end: `debias`, `audit` and `report`.
//!
//! A run is described by a flat `key = value` file; flags override file
//! keys. Exit codes: 0 success, 1 configuration error, 2 data error,
//! 3 training error.

use std::ffi::OsString;
use std::io::Write;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};

use crate::audit::{bias_report, full_train_audit, AuditMode, AuditReport, DEFAULT_TAU};
use crate::data::{load_csv, Dataset, KindOverride, LoadOptions, ProtectedMode};
use crate::error::{Error, Result};
use crate::fan::{Trainer, TrainingConfig};
use crate::kv::KvDoc;
use crate::metrics::{export_trace, render_convergence_chart};

pub const EXIT_OK: i32 = 0;
pub const EXIT_CONFIG: i32 = 1;
pub const EXIT_DATA: i32 = 2;
pub const EXIT_TRAINING: i32 = 3;

pub const DEBIASED_FILE: &str = "debiased.csv";
pub const TRACE_FILE: &str = "trace.csv";
pub const CHART_FILE: &str = "convergence.svg";
pub const AUDIT_PRE_FILE: &str = "audit_pre.txt";
pub const AUDIT_POST_FILE: &str = "audit_post.txt";
pub const MANIFEST_FILE: &str = "manifest.txt";
pub const PARTIAL_SUFFIX: &str = ".partial";

/// Run-level keys; every [`TrainingConfig`] key is accepted as well.
const RUN_KEYS: [&str; 9] = [
    "input",
    "protected",
    "output",
    "delimiter",
    "column_types",
    "validation_fraction",
    "split_seed",
    "bins",
    "regression_adversary",
];

/// Keys a manifest adds on top of the run config. Ignored when a manifest
/// is fed back in as a config.
const INFO_KEYS: [&str; 9] = [
    "command",
    "version",
    "config_hash",
    "status",
    "rows",
    "dropped_rows",
    "epochs",
    "ratchet_epoch",
    "verdict",
];

/// Everything needed to reproduce a run.
#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub input: PathBuf,
    pub protected: String,
    pub output: PathBuf,
    pub delimiter: u8,
    pub column_types: Vec<(String, KindOverride)>,
    pub mode: ProtectedMode,
    pub validation_fraction: f64,
    pub split_seed: u64,
    pub training: TrainingConfig,
}

fn parse_bool(key: &str, v: &str) -> Result<bool> {
    match v.to_ascii_lowercase().as_str() {
        "true" | "yes" | "1" => Ok(true),
        "false" | "no" | "0" => Ok(false),
        _ => Err(Error::Config(format!(
            "{key} must be true or false, got '{v}'"
        ))),
    }
}

fn parse_delimiter(v: &str) -> Result<u8> {
    match v {
        "tab" | "\\t" => Ok(b'\t'),
        s if s.len() == 1 && s.is_ascii() => Ok(s.as_bytes()[0]),
        _ => Err(Error::Config(format!(
            "delimiter must be a single ASCII character or 'tab', got '{v}'"
        ))),
    }
}

fn delimiter_text(d: u8) -> String {
    if d == b'\t' {
        "tab".into()
    } else {
        (d as char).to_string()
    }
}

fn parse_column_types(v: &str) -> Result<Vec<(String, KindOverride)>> {
    v.split(',')
        .map(str::trim)
        .filter(|s| !s.is_empty())
        .map(|item| {
            let (name, kind) = item.rsplit_once(':').ok_or_else(|| {
                Error::Config(format!("column_types entry '{item}' is not name:kind"))
            })?;
            let kind = match kind.trim() {
                "numeric" => KindOverride::Numeric,
                "categorical" => KindOverride::Categorical,
                k => {
                    return Err(Error::Config(format!(
                        "unknown column kind '{k}' (numeric or categorical)"
                    )))
                }
            };
            Ok((name.trim().to_string(), kind))
        })
        .collect()
}

impl RunConfig {
    pub fn from_kv(d: &KvDoc) -> Result<Self> {
        let training_keys = TrainingConfig::default().to_kv();
        for key in d.keys() {
            let known = RUN_KEYS.contains(&key)
                || INFO_KEYS.contains(&key)
                || key == "lr_boost"
                || key == "ratchet_warmup"
                || training_keys.get(key).is_some();
            if !known {
                return Err(Error::Config(format!("unknown config key '{key}'")));
            }
        }
        let required = |key: &str| -> Result<String> {
            match d.get(key) {
                Some(v) if !v.is_empty() => Ok(v.to_string()),
                _ => Err(Error::Config(format!("missing required key '{key}'"))),
            }
        };
        let mut training = TrainingConfig::default();
        training.apply_kv(d)?;
        let regression = match d.get("regression_adversary") {
            Some(v) => parse_bool("regression_adversary", v)?,
            None => false,
        };
        let bins = d.parsed::<usize>("bins")?.unwrap_or(4);
        if bins < 2 {
            return Err(Error::Config(format!(
                "bins must be at least 2, got {bins}"
            )));
        }
        let cfg = RunConfig {
            input: required("input")?.into(),
            protected: required("protected")?,
            output: required("output")?.into(),
            delimiter: d.get("delimiter").map_or(Ok(b','), parse_delimiter)?,
            column_types: d
                .get("column_types")
                .map_or(Ok(Vec::new()), parse_column_types)?,
            mode: if regression {
                ProtectedMode::Regression
            } else {
                ProtectedMode::Classify { bins }
            },
            validation_fraction: d.parsed("validation_fraction")?.unwrap_or(0.3),
            split_seed: d.parsed("split_seed")?.unwrap_or(0),
            training,
        };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.validation_fraction > 0.0 && self.validation_fraction < 1.0) {
            return Err(Error::Config(format!(
                "validation_fraction must be in (0, 1), got {}",
                self.validation_fraction
            )));
        }
        self.training.validate()
    }

    pub fn to_kv(&self) -> KvDoc {
        let mut d = KvDoc::new();
        d.set("input", self.input.display());
        d.set("protected", &self.protected);
        d.set("output", self.output.display());
        d.set("delimiter", delimiter_text(self.delimiter));
        let types: Vec<String> = self
            .column_types
            .iter()
            .map(|(n, k)| {
                let k = match k {
                    KindOverride::Numeric => "numeric",
                    KindOverride::Categorical => "categorical",
                };
                format!("{n}:{k}")
            })
            .collect();
        d.set("column_types", types.join(","));
        d.set("validation_fraction", self.validation_fraction);
        d.set("split_seed", self.split_seed);
        match self.mode {
            ProtectedMode::Classify { bins } => {
                d.set("bins", bins);
                d.set("regression_adversary", false);
            }
            ProtectedMode::Regression => d.set("regression_adversary", true),
        }
        let t = self.training.to_kv();
        for k in t.keys() {
            d.set(k, t.get(k).unwrap());
        }
        d
    }

    pub fn load_options(&self) -> LoadOptions {
        LoadOptions {
            delimiter: self.delimiter,
            overrides: self.column_types.clone(),
            mode: self.mode,
            validation_fraction: self.validation_fraction,
            split_seed: self.split_seed,
        }
    }

    pub fn load(&self) -> Result<Dataset> {
        load_csv(&self.input, &self.protected, &self.load_options())
    }
}

#[derive(Debug, Parser)]
#[command(name = "fan", version, about = "Adversarial debiasing of tabular data")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Train the autoencoder and write the debiased dataset with audits.
    Debias(RunArgs),
    /// Audit how well the protected column can be predicted from a dataset.
    Audit(AuditArgs),
    /// Compare a pre-debias and a post-debias audit.
    Report(ReportArgs),
}

#[derive(Debug, Clone, Default, Args)]
pub struct RunArgs {
    /// Run config file (`key = value` lines).
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Input CSV with a header row.
    #[arg(long)]
    pub input: Option<PathBuf>,
    /// Protected column name.
    #[arg(long)]
    pub protected: Option<String>,
    /// Output directory.
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Training seed.
    #[arg(long)]
    pub seed: Option<u64>,
    /// Validate config and schema, write the manifest only.
    #[arg(long)]
    pub dry_run: bool,
    /// Treat a numeric protected column as a regression target.
    #[arg(long)]
    pub regression_adversary: bool,
    /// Quantile classes for a numeric protected column.
    #[arg(long)]
    pub bins: Option<usize>,
}

#[derive(Debug, Clone, Default, Args)]
pub struct AuditArgs {
    #[command(flatten)]
    pub run: RunArgs,
    /// Label the report as a post-debias audit.
    #[arg(long)]
    pub post_debias: bool,
}

#[derive(Debug, Clone, Args)]
pub struct ReportArgs {
    pub pre: PathBuf,
    pub post: PathBuf,
    /// Largest post-debias gap over the baseline still called debiased.
    #[arg(long, default_value_t = DEFAULT_TAU)]
    pub tau: f64,
}

impl RunArgs {
    /// Config file overlaid with flags.
    pub fn resolve(&self) -> Result<RunConfig> {
        let mut d = match &self.config {
            Some(p) => KvDoc::read(p).map_err(|e| match e {
                Error::Io { path, source } => {
                    Error::Config(format!("cannot read config {}: {source}", path.display()))
                }
                other => other,
            })?,
            None => KvDoc::new(),
        };
        if let Some(v) = &self.input {
            d.set("input", v.display());
        }
        if let Some(v) = &self.protected {
            d.set("protected", v);
        }
        if let Some(v) = &self.out {
            d.set("output", v.display());
        }
        if let Some(v) = self.seed {
            d.set("seed", v);
        }
        if self.regression_adversary {
            d.set("regression_adversary", true);
        }
        if let Some(v) = self.bins {
            d.set("bins", v);
        }
        RunConfig::from_kv(&d)
    }
}

/// Exit code for an error from `debias` or `audit`.
pub fn exit_code(e: &Error) -> i32 {
    match e {
        Error::Config(_) | Error::Parse { .. } => EXIT_CONFIG,
        Error::Training { .. } => EXIT_TRAINING,
        Error::Data(_)
        | Error::Io { .. }
        | Error::Csv(_)
        | Error::Shape(_)
        | Error::Input(_)
        | Error::Audit(_) => EXIT_DATA,
    }
}

/// Parse `args` (program name first) and run the command.
pub fn run<I, T>(args: I, out: &mut dyn Write, err: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_CONFIG } else { EXIT_OK };
            let text = e.render().to_string();
            let _ = if e.use_stderr() {
                write!(err, "{text}")
            } else {
                write!(out, "{text}")
            };
            return code;
        }
    };
    let result = match &cli.command {
        Command::Debias(a) => cmd_debias(a, out),
        Command::Audit(a) => cmd_audit(a, out),
        Command::Report(a) => {
            return match cmd_report(a, out) {
                Ok(()) => EXIT_OK,
                Err(e) => {
                    let _ = writeln!(err, "error: {e}");
                    EXIT_CONFIG
                }
            }
        }
    };
    match result {
        Ok(()) => EXIT_OK,
        Err(e) => {
            let _ = writeln!(err, "error: {e}");
            exit_code(&e)
        }
    }
}

fn create_dir(path: &Path) -> Result<()> {
    std::fs::create_dir_all(path).map_err(|e| Error::io(path, e))
}

fn manifest(cfg: &RunConfig, command: &str, status: &str, ds: Option<&Dataset>) -> KvDoc {
    let mut d = KvDoc::new();
    d.set("command", command);
    d.set("version", env!("CARGO_PKG_VERSION"));
    d.set("status", status);
    d.set("config_hash", cfg.training.hash());
    if let Some(ds) = ds {
        d.set("rows", ds.n_rows());
        d.set("dropped_rows", ds.dropped_rows);
    }
    let c = cfg.to_kv();
    for k in c.keys() {
        d.set(k, c.get(k).unwrap());
    }
    d
}

fn write_manifest(doc: &KvDoc, path: &Path) -> Result<()> {
    std::fs::write(path, doc.to_text(Some("fan run manifest"))).map_err(|e| Error::io(path, e))
}

fn partial(dir: &Path, name: &str) -> PathBuf {
    dir.join(format!("{name}{PARTIAL_SUFFIX}"))
}

/// Full pipeline: pre-audit, training, export, post-audit, manifest.
pub fn cmd_debias(args: &RunArgs, out: &mut dyn Write) -> Result<()> {
    let cfg = args.resolve()?;
    let ds = cfg.load()?;
    create_dir(&cfg.output)?;
    let dir = cfg.output.clone();
    if args.dry_run {
        write_manifest(
            &manifest(&cfg, "debias", "dry_run", Some(&ds)),
            &dir.join(MANIFEST_FILE),
        )?;
        let _ = writeln!(
            out,
            "dry run: {} rows, {} encoded features; manifest written to {}",
            ds.n_rows(),
            ds.width(),
            dir.join(MANIFEST_FILE).display()
        );
        return Ok(());
    }

    let audit_cfg = &cfg.training.audit;
    let pre = full_train_audit(
        ds.x.view(),
        &ds.protected,
        &ds.split,
        audit_cfg,
        AuditMode::PreDebias,
    )?;
    pre.write(&dir.join(AUDIT_PRE_FILE))?;

    let mut trainer = Trainer::new(&ds, &cfg.training)?;
    if let Err(e) = trainer.run() {
        let trace = trainer.trace();
        if !trace.is_empty() {
            export_trace(trace, &partial(&dir, TRACE_FILE))?;
            render_convergence_chart(trace, &partial(&dir, CHART_FILE))?;
        }
        if let Some(r) = trainer.ratchet() {
            let y = r.snapshot.forward(ds.x.view())?;
            ds.decode(y.view(), true)?
                .write_csv(&partial(&dir, DEBIASED_FILE), cfg.delimiter)?;
        }
        let mut m = manifest(&cfg, "debias", "training_error", Some(&ds));
        m.set("epochs", trace.len());
        write_manifest(&m, &partial(&dir, MANIFEST_FILE))?;
        return Err(e);
    }
    let outcome = trainer.finish()?;
    outcome
        .output
        .table
        .write_csv(&dir.join(DEBIASED_FILE), cfg.delimiter)?;
    export_trace(&outcome.trace, &dir.join(TRACE_FILE))?;
    render_convergence_chart(&outcome.trace, &dir.join(CHART_FILE))?;

    let post = full_train_audit(
        outcome.output.y.view(),
        &ds.protected,
        &ds.split,
        audit_cfg,
        AuditMode::PostDebias,
    )?;
    post.write(&dir.join(AUDIT_POST_FILE))?;
    let summary = bias_report(&pre, &post, DEFAULT_TAU)?;

    let mut m = manifest(&cfg, "debias", "complete", Some(&ds));
    m.set("epochs", outcome.trace.len());
    m.set("ratchet_epoch", outcome.ratchet.epoch);
    m.set(
        "verdict",
        match summary.verdict {
            crate::audit::Verdict::Debiased => "debiased",
            crate::audit::Verdict::NotDebiased => "not_debiased",
        },
    );
    write_manifest(&m, &dir.join(MANIFEST_FILE))?;
    let _ = write!(out, "{summary}");
    let _ = writeln!(out, "outputs written to {}", dir.display());
    Ok(())
}

/// Audit the input as-is and write a single report.
pub fn cmd_audit(args: &AuditArgs, out: &mut dyn Write) -> Result<()> {
    let cfg = args.run.resolve()?;
    let ds = cfg.load()?;
    create_dir(&cfg.output)?;
    let (mode, name) = if args.post_debias {
        (AuditMode::PostDebias, AUDIT_POST_FILE)
    } else {
        (AuditMode::PreDebias, AUDIT_PRE_FILE)
    };
    if args.run.dry_run {
        write_manifest(
            &manifest(&cfg, "audit", "dry_run", Some(&ds)),
            &cfg.output.join(MANIFEST_FILE),
        )?;
        return Ok(());
    }
    let report = full_train_audit(
        ds.x.view(),
        &ds.protected,
        &ds.split,
        &cfg.training.audit,
        mode,
    )?;
    let path = cfg.output.join(name);
    report.write(&path)?;
    let _ = writeln!(
        out,
        "d_bar {:.4}, baseline {:.4} ({} validation rows); report written to {}",
        report.d_bar,
        report.baseline,
        report.n_validation,
        path.display()
    );
    Ok(())
}

/// Print the comparison of two audit reports.
pub fn cmd_report(args: &ReportArgs, out: &mut dyn Write) -> Result<()> {
    let pre = AuditReport::read(&args.pre)?;
    let post = AuditReport::read(&args.post)?;
    let summary = bias_report(&pre, &post, args.tau)?;
    let _ = write!(out, "{summary}");
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn doc(text: &str) -> KvDoc {
        KvDoc::parse(text, None).unwrap()
    }

    #[test]
    fn required_keys() {
        let err = RunConfig::from_kv(&doc("input = a.csv\nprotected = sex\n")).unwrap_err();
        assert!(err.to_string().contains("output"), "{err}");
        let cfg = RunConfig::from_kv(&doc("input = a.csv\nprotected = sex\noutput = o\n")).unwrap();
        assert_eq!(cfg.training, TrainingConfig::default());
        assert_eq!(cfg.mode, ProtectedMode::Classify { bins: 4 });
    }

    #[test]
    fn unknown_keys_are_rejected() {
        let err = RunConfig::from_kv(&doc(
            "input = a\nprotected = s\noutput = o\nlearnig_rate = 1\n",
        ))
        .unwrap_err();
        assert!(matches!(err, Error::Config(_)));
        assert_eq!(exit_code(&err), EXIT_CONFIG);
    }

    #[test]
    fn kv_roundtrip_and_flags_override() {
        let text = "input = a.csv\nprotected = sex\noutput = o\nc = 2\nseed = 4\ndelimiter = tab\n\
                    column_types = age:numeric, ca:categorical\nbins = 3\n";
        let cfg = RunConfig::from_kv(&doc(text)).unwrap();
        assert_eq!(cfg.training.c, 2.0);
        assert_eq!(cfg.delimiter, b'\t');
        assert_eq!(cfg.column_types.len(), 2);
        let back = RunConfig::from_kv(&cfg.to_kv()).unwrap();
        assert_eq!(back, cfg);

        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("run.cfg");
        std::fs::write(&path, text).unwrap();
        let args = RunArgs {
            config: Some(path),
            seed: Some(9),
            regression_adversary: true,
            ..Default::default()
        };
        let cfg = args.resolve().unwrap();
        assert_eq!(cfg.training.seed, 9);
        assert_eq!(cfg.mode, ProtectedMode::Regression);
    }

    #[test]
    fn manifest_reads_back_as_config() {
        let cfg = RunConfig::from_kv(&doc("input = a.csv\nprotected = sex\noutput = o\nk = 2\n"))
            .unwrap();
        let m = manifest(&cfg, "debias", "complete", None);
        let back = RunConfig::from_kv(&KvDoc::parse(&m.to_text(Some("x")), None).unwrap()).unwrap();
        assert_eq!(back, cfg);
    }

    #[test]
    fn exit_codes() {
        assert_eq!(exit_code(&Error::Config("x".into())), 1);
        assert_eq!(exit_code(&Error::Data("x".into())), 2);
        assert_eq!(exit_code(&Error::io("p", std::io::Error::other("x"))), 2);
        assert_eq!(exit_code(&Error::training("x")), 3);
    }

    #[test]
    fn bad_flags_exit_1() {
        let (mut o, mut e) = (Vec::new(), Vec::new());
        assert_eq!(
            run(["fan", "debias", "--bogus"], &mut o, &mut e),
            EXIT_CONFIG
        );
        assert_eq!(run(["fan", "--help"], &mut o, &mut e), EXIT_OK);
    }
}
