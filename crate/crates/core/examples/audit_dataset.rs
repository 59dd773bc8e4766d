//! Measure how well a fully trained adversary recovers the protected column.
//!
//! `cargo run --release --example audit_dataset`

use fan::audit::{full_train_audit, AuditConfig, AuditMode};
use fan::data::LoadOptions;
use fan::synthetic::{planted_dataset, PlantedConfig};
use ndarray::Axis;

fn main() -> fan::error::Result<()> {
    let ds = planted_dataset(&PlantedConfig::default(), &LoadOptions::default())?;
    let config = AuditConfig {
        max_epochs: 1000,
        patience: None,
        ..Default::default()
    };
    let names = ds.schema.feature_names();
    let groups: [(&str, Vec<usize>); 4] = [
        ("all columns", (0..ds.width()).collect()),
        ("copy only", vec![0]),
        ("linear proxies", vec![1, 2]),
        ("noise columns", vec![3, 4, 5]),
    ];
    for (label, cols) in groups {
        let x = ds.x.select(Axis(1), &cols);
        let report = full_train_audit(
            x.view(),
            &ds.protected,
            &ds.split,
            &config,
            AuditMode::PreDebias,
        )?;
        let used: Vec<&str> = cols.iter().map(|&c| names[c].as_str()).collect();
        println!(
            "{label:<15} {used:?}: d_bar {:.3}, baseline {:.3}, gap {:+.3}",
            report.d_bar,
            report.baseline,
            report.gap()
        );
    }
    Ok(())
}
