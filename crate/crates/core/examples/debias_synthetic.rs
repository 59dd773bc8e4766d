//! Debias the planted-proxy table and compare audits before and after.
//!
//! `cargo run --release --example debias_synthetic`

use fan::audit::{bias_report, full_train_audit, AuditConfig, AuditMode, DEFAULT_TAU};
use fan::data::LoadOptions;
use fan::fan::{train, TrainingConfig};
use fan::synthetic::{noise_column_indices, planted_dataset, PlantedConfig};
use ndarray::Axis;

fn main() -> fan::error::Result<()> {
    let ds = planted_dataset(&PlantedConfig::default(), &LoadOptions::default())?;
    let audit = AuditConfig {
        max_epochs: 1000,
        patience: None,
        ..Default::default()
    };
    let config = TrainingConfig {
        c: 3.0,
        adversary_hidden: Some(12),
        adversary_lr: 3e-3,
        audit_period: 0,
        audit: audit.clone(),
        ..Default::default()
    };

    let pre = full_train_audit(
        ds.x.view(),
        &ds.protected,
        &ds.split,
        &audit,
        AuditMode::PreDebias,
    )?;
    let out = train(&ds, &config)?;
    let post = full_train_audit(
        out.output.y.view(),
        &ds.protected,
        &ds.split,
        &audit,
        AuditMode::PostDebias,
    )?;

    println!(
        "{} epochs ({:?}), ratchet snapshot from epoch {} with L_A {:.4}",
        out.trace.len(),
        out.trace.stop_reason,
        out.ratchet.epoch,
        out.ratchet.best
    );
    let noise = noise_column_indices(&ds);
    let diff = &out.output.y.select(Axis(1), &noise) - &ds.x.select(Axis(1), &noise);
    println!(
        "noise column MSE {:.3}",
        diff.mapv(|v| v * v).mean().unwrap_or(0.0)
    );
    print!("{}", bias_report(&pre, &post, DEFAULT_TAU)?);

    println!("first debiased rows:");
    println!("  {}", out.output.table.header.join(","));
    for row in out.output.table.rows.iter().take(3) {
        println!("  {}", row.join(","));
    }
    Ok(())
}
