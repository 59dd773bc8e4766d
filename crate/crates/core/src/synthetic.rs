//! Synthetic tables with a planted protected attribute.
//!
//! The planted-proxy table has six feature columns and a balanced binary
//! `protected` column:
//!
//! | column | relation to the protected bit `r` |
//! |--------|------------------------------------|
//! | `copy` | `r` verbatim |
//! | `lin1`, `lin2` | `±shift + N(0, σ²)`, sign given by `r` |
//! | `n1`, `n2`, `n3` | each marginally `N(0, 1)` and independent of `r` |
//!
//! `n1` and `n2` jointly carry an XOR-style proxy: on rows with
//! `|n1| < xor_band` the sign of `n1 · n2` agrees with `2r − 1` with
//! probability `xor_agreement`; elsewhere `n2` is an independent draw.
//! Neither column alone says anything about `r`, and no linear function of
//! the table recovers the XOR part.
//!
//! The default band `|n1| < 1` covers about 68% of rows.

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::data::{Dataset, LoadOptions};
use crate::error::Result;

pub const PLANTED_HEADER: [&str; 7] = ["copy", "lin1", "lin2", "n1", "n2", "n3", "protected"];

/// Columns of the planted table that are marginally independent of `r`.
pub const NOISE_COLUMNS: [&str; 3] = ["n1", "n2", "n3"];

#[derive(Debug, Clone)]
pub struct PlantedConfig {
    pub n: usize,
    pub seed: u64,
    pub linear_shift: f64,
    pub linear_noise: f64,
    pub xor_agreement: f64,
    /// The XOR relation holds only on rows with `|n1| < xor_band`; `n2` is
    /// an independent draw elsewhere.
    pub xor_band: f64,
}

impl Default for PlantedConfig {
    fn default() -> Self {
        PlantedConfig {
            n: 1000,
            seed: 17,
            linear_shift: 1.0,
            linear_noise: 1.0,
            xor_agreement: 1.0,
            xor_band: 1.0,
        }
    }
}

/// Header and string rows of a planted-proxy table.
pub fn planted_table(cfg: &PlantedConfig) -> (Vec<String>, Vec<Vec<String>>) {
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut r: Vec<u8> = (0..cfg.n).map(|i| u8::from(i < cfg.n / 2)).collect();
    r.shuffle(&mut rng);
    let mut normal = || -> f64 { StandardNormal.sample(&mut rng) };
    let mut draws = Vec::with_capacity(cfg.n);
    for _ in 0..cfg.n {
        draws.push([normal(), normal(), normal(), normal(), normal()]);
    }
    let mut rows = Vec::with_capacity(cfg.n);
    for (&bit, d) in r.iter().zip(&draws) {
        let sign = if bit == 1 { 1.0 } else { -1.0 };
        let lin1 = sign * cfg.linear_shift + cfg.linear_noise * d[0];
        let lin2 = sign * cfg.linear_shift + cfg.linear_noise * d[1];
        let n1 = d[2];
        let agree = rng.random_bool(cfg.xor_agreement);
        let quadrant = if agree { sign } else { -sign };
        let n2 = if n1.abs() < cfg.xor_band {
            d[3].abs() * quadrant * n1.signum()
        } else {
            d[3]
        };
        let n3 = d[4];
        rows.push(vec![
            bit.to_string(),
            lin1.to_string(),
            lin2.to_string(),
            n1.to_string(),
            n2.to_string(),
            n3.to_string(),
            bit.to_string(),
        ]);
    }
    let header = PLANTED_HEADER.iter().map(|s| s.to_string()).collect();
    (header, rows)
}

/// Encoded planted-proxy dataset with protected column `protected`.
pub fn planted_dataset(cfg: &PlantedConfig, options: &LoadOptions) -> Result<Dataset> {
    let (header, rows) = planted_table(cfg);
    Dataset::from_table(header, rows, "protected", options)
}

/// Encoded column indices of the noise columns in a planted dataset.
pub fn noise_column_indices(ds: &Dataset) -> Vec<usize> {
    let names = ds.schema.feature_names();
    NOISE_COLUMNS
        .iter()
        .map(|c| names.iter().position(|n| n == c).expect("planted column"))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn planted_table_is_balanced_and_seeded() {
        let cfg = PlantedConfig::default();
        let (h, rows) = planted_table(&cfg);
        assert_eq!(h.len(), 7);
        assert_eq!(rows.len(), 1000);
        let ones = rows.iter().filter(|r| r[6] == "1").count();
        assert_eq!(ones, 500);
        assert!(rows.iter().all(|r| r[0] == r[6]));
        assert_eq!(planted_table(&cfg).1, rows);
    }

    #[test]
    fn xor_agreement_holds_inside_the_band_only() {
        let cfg = PlantedConfig {
            n: 4000,
            xor_agreement: 0.9,
            ..Default::default()
        };
        let (_, rows) = planted_table(&cfg);
        let (mut inside, mut inside_agree, mut outside, mut outside_agree) = (0, 0, 0, 0);
        for r in &rows {
            let n1: f64 = r[3].parse().unwrap();
            let n2: f64 = r[4].parse().unwrap();
            let s = if r[6] == "1" { 1.0 } else { -1.0 };
            let agree = usize::from((n1 * n2).signum() == s);
            if n1.abs() < cfg.xor_band {
                inside += 1;
                inside_agree += agree;
            } else {
                outside += 1;
                outside_agree += agree;
            }
        }
        let p_in = inside_agree as f64 / inside as f64;
        let p_out = outside_agree as f64 / outside as f64;
        assert!((p_in - 0.9).abs() < 0.03, "{p_in}");
        assert!((p_out - 0.5).abs() < 0.05, "{p_out}");
        // P(|Z| < 1) ≈ 0.6827
        assert!((inside as f64 / 4000.0 - 0.6827).abs() < 0.03);
    }

    #[test]
    fn noise_columns_are_marginally_independent_of_the_label() {
        let (_, rows) = planted_table(&PlantedConfig {
            n: 4000,
            ..Default::default()
        });
        for col in 3..6 {
            for label in ["0", "1"] {
                let v: Vec<f64> = rows
                    .iter()
                    .filter(|r| r[6] == label)
                    .map(|r| r[col].parse().unwrap())
                    .collect();
                let mean = v.iter().sum::<f64>() / v.len() as f64;
                let pos = v.iter().filter(|&&x| x > 0.0).count() as f64 / v.len() as f64;
                assert!(mean.abs() < 0.1, "column {col} label {label} mean {mean}");
                assert!((pos - 0.5).abs() < 0.05, "column {col} label {label} {pos}");
            }
        }
    }

    #[test]
    fn planted_dataset_encodes_six_features() {
        let ds = planted_dataset(&PlantedConfig::default(), &LoadOptions::default()).unwrap();
        assert_eq!(ds.width(), 6);
        assert_eq!(noise_column_indices(&ds), vec![3, 4, 5]);
    }
}
