//! Drive training one epoch at a time, then inject a learning-rate spike and
//! watch the ratchet keep the best snapshot.
//!
//! `cargo run --release --example step_training`

use fan::data::LoadOptions;
use fan::fan::{Decision, LrBoost, Trainer, TrainingConfig};
use fan::synthetic::{planted_dataset, PlantedConfig};

fn main() -> fan::error::Result<()> {
    let ds = planted_dataset(&PlantedConfig::default(), &LoadOptions::default())?;
    let config = TrainingConfig {
        max_epochs: 600,
        audit_period: 0,
        lr_boost: Some(LrBoost {
            start_epoch: 500,
            epochs: 10,
            factor: 1000.0,
        }),
        ..Default::default()
    };
    let mut trainer = Trainer::new(&ds, &config)?;
    while trainer.step()? == Decision::Continue {
        let r = trainer.trace().last().unwrap();
        if r.epoch % 100 == 0 || (500..=510).contains(&r.epoch) {
            println!(
                "epoch {:4}: mse {:.3}  D-hat {:.3}  L_A {:.3}  best {}",
                r.epoch,
                r.mse,
                r.d_hat,
                r.l_a,
                r.ratchet_best
                    .map_or("-".to_string(), |b| format!("{b:.3}"))
            );
        }
    }
    let out = trainer.finish()?;
    let final_y = out.final_autoencoder.forward(ds.x.view())?;
    println!("returned snapshot from epoch {}", out.ratchet.epoch);
    println!(
        "mse of returned output {:.3}, of final state {:.3}",
        fan::nn::mse(out.output.y.view(), ds.x.view())?,
        fan::nn::mse(final_y.view(), ds.x.view())?
    );
    Ok(())
}
