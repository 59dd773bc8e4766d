//! Train with periodic audits and export the trace as CSV and SVG.
//!
//! `cargo run --release --example convergence_chart -- [out_dir]`

use std::path::PathBuf;

use fan::data::LoadOptions;
use fan::fan::{train, TrainingConfig};
use fan::metrics::{export_trace, read_trace, render_convergence_chart};
use fan::synthetic::{planted_dataset, PlantedConfig};

fn main() -> fan::error::Result<()> {
    let dir = std::env::args()
        .nth(1)
        .map(PathBuf::from)
        .unwrap_or_else(std::env::temp_dir);
    let ds = planted_dataset(&PlantedConfig::default(), &LoadOptions::default())?;
    let mut config = TrainingConfig {
        c: 3.0,
        adversary_hidden: Some(12),
        adversary_lr: 3e-3,
        max_epochs: 1500,
        audit_period: 250,
        ..Default::default()
    };
    config.audit.runs = 1;
    config.audit.max_epochs = 500;

    let out = train(&ds, &config)?;
    let csv = dir.join("trace.csv");
    let svg = dir.join("convergence.svg");
    export_trace(&out.trace, &csv)?;
    render_convergence_chart(&out.trace, &svg)?;

    let back = read_trace(&csv)?;
    println!(
        "wrote {} ({} rows) and {}",
        csv.display(),
        back.len(),
        svg.display()
    );
    for (epoch, d_bar) in back.audits() {
        let r = back.records.iter().find(|r| r.epoch == epoch).unwrap();
        println!(
            "epoch {epoch:5}: mse {:.3}, D {:.3}, D-hat {:.3}, D-bar {d_bar:.3}",
            r.mse, r.d_current, r.d_hat
        );
    }
    Ok(())
}
