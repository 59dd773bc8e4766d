//! Linear decorrelation removes the linear proxies but not the XOR proxy;
//! FAN removes both.
//!
//! `cargo run --release --example linear_vs_fan`

use fan::audit::{full_train_audit, AuditConfig, AuditMode};
use fan::data::{LoadOptions, Protected};
use fan::fan::{train, TrainingConfig};
use fan::synthetic::{planted_dataset, PlantedConfig};
use ndarray::{Array2, Axis};

fn residualize(x: &Array2<f64>, labels: &[usize], classes: usize) -> Array2<f64> {
    let mut out = x.clone();
    for c in 0..classes {
        let rows: Vec<usize> = (0..labels.len()).filter(|&i| labels[i] == c).collect();
        let mean = x.select(Axis(0), &rows).mean_axis(Axis(0)).unwrap();
        for &i in &rows {
            let mut row = out.row_mut(i);
            row -= &mean;
        }
    }
    out
}

fn main() -> fan::error::Result<()> {
    let ds = planted_dataset(&PlantedConfig::default(), &LoadOptions::default())?;
    let Protected::Classes { labels, names } = &ds.protected else {
        unreachable!("planted protected column is binary")
    };
    let audit = AuditConfig {
        max_epochs: 1000,
        patience: None,
        ..Default::default()
    };
    let score = |x: &Array2<f64>| {
        full_train_audit(
            x.view(),
            &ds.protected,
            &ds.split,
            &audit,
            AuditMode::PostDebias,
        )
    };

    let original = score(&ds.x)?;
    let linear = score(&residualize(&ds.x, labels, names.len()))?;
    let config = TrainingConfig {
        c: 3.0,
        adversary_hidden: Some(12),
        adversary_lr: 3e-3,
        audit_period: 0,
        ..Default::default()
    };
    let debiased = score(&train(&ds, &config)?.output.y)?;

    println!("baseline            {:.3}", original.baseline);
    println!("original            {:.3}", original.d_bar);
    println!("residualized        {:.3}", linear.d_bar);
    println!("FAN reconstruction  {:.3}", debiased.d_bar);
    Ok(())
}
