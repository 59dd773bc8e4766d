use log::warn;
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};

/// Disjoint, covering train/validation row sets (each sorted ascending).
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Split {
    pub train: Vec<usize>,
    pub validation: Vec<usize>,
}

impl Split {
    pub fn len(&self) -> usize {
        self.train.len() + self.validation.len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Every row in both sets. Only useful for small unit fixtures.
    pub fn all_train(n: usize) -> Self {
        Split {
            train: (0..n).collect(),
            validation: Vec::new(),
        }
    }

    pub fn validate(&self, n: usize) -> Result<()> {
        let mut seen = vec![false; n];
        for &i in self.train.iter().chain(&self.validation) {
            if i >= n || seen[i] {
                return Err(Error::Data(format!(
                    "split index {i} out of range or repeated"
                )));
            }
            seen[i] = true;
        }
        if seen.iter().any(|s| !s) {
            return Err(Error::Data("split does not cover every row".into()));
        }
        Ok(())
    }
}

fn validation_size(n: usize, fraction: f64) -> usize {
    ((n as f64 * fraction).round() as usize).clamp(1, n - 1)
}

/// Seeded train/validation split, stratified on `labels` when given and
/// every class can be represented in the training part.
pub fn split_rows(n: usize, labels: Option<&[usize]>, fraction: f64, seed: u64) -> Result<Split> {
    if !(fraction > 0.0 && fraction < 1.0) {
        return Err(Error::Config(format!(
            "validation fraction must lie in (0, 1), got {fraction}"
        )));
    }
    if n < 2 {
        return Err(Error::Data(format!(
            "need at least 2 rows to split, got {n}"
        )));
    }
    if let Some(l) = labels {
        if l.len() != n {
            return Err(Error::Shape(format!("{} labels for {n} rows", l.len())));
        }
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n_val = validation_size(n, fraction);

    let stratified = labels.and_then(|labels| stratified(labels, n_val, &mut rng));
    let mut validation = match stratified {
        Some(v) => v,
        None => {
            if labels.is_some() {
                warn!("a protected class cannot appear in both splits; falling back to an unstratified split");
            }
            let mut idx: Vec<usize> = (0..n).collect();
            idx.shuffle(&mut rng);
            idx.truncate(n_val);
            idx
        }
    };
    validation.sort_unstable();
    let mut in_val = vec![false; n];
    for &i in &validation {
        in_val[i] = true;
    }
    let train = (0..n).filter(|&i| !in_val[i]).collect();
    Ok(Split { train, validation })
}

/// Largest-remainder allocation of `n_val` validation rows across classes.
/// `None` when some class would be missing from the training part.
fn stratified(labels: &[usize], n_val: usize, rng: &mut ChaCha8Rng) -> Option<Vec<usize>> {
    let classes = labels.iter().copied().max()? + 1;
    let mut members: Vec<Vec<usize>> = vec![Vec::new(); classes];
    for (i, &c) in labels.iter().enumerate() {
        members[c].push(i);
    }
    let n = labels.len() as f64;
    let quotas: Vec<f64> = members
        .iter()
        .map(|m| m.len() as f64 * n_val as f64 / n)
        .collect();
    let mut take: Vec<usize> = quotas.iter().map(|q| q.floor() as usize).collect();
    let mut remaining = n_val - take.iter().sum::<usize>();
    let mut order: Vec<usize> = (0..classes).collect();
    order.sort_by(|&a, &b| {
        let ra = quotas[a] - quotas[a].floor();
        let rb = quotas[b] - quotas[b].floor();
        rb.total_cmp(&ra).then(a.cmp(&b))
    });
    for &c in order.iter().cycle().take(classes * 2) {
        if remaining == 0 {
            break;
        }
        if take[c] + 1 < members[c].len() {
            take[c] += 1;
            remaining -= 1;
        }
    }
    if remaining > 0 {
        return None;
    }
    let mut validation = Vec::with_capacity(n_val);
    for (c, mut m) in members.into_iter().enumerate() {
        if m.is_empty() {
            continue;
        }
        if take[c] >= m.len() {
            return None;
        }
        m.shuffle(rng);
        validation.extend_from_slice(&m[..take[c]]);
    }
    Some(validation)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn twenty_percent_of_ten() {
        let s = split_rows(10, None, 0.2, 1).unwrap();
        assert_eq!(s.validation.len(), 2);
        assert_eq!(s.train.len(), 8);
        s.validate(10).unwrap();
    }

    #[test]
    fn same_seed_same_split() {
        let labels: Vec<usize> = (0..50).map(|i| i % 3).collect();
        let a = split_rows(50, Some(&labels), 0.3, 9).unwrap();
        let b = split_rows(50, Some(&labels), 0.3, 9).unwrap();
        let c = split_rows(50, Some(&labels), 0.3, 10).unwrap();
        assert_eq!(a, b);
        assert_ne!(a, c);
    }

    #[test]
    fn bad_fraction() {
        assert!(matches!(
            split_rows(10, None, 0.0, 1),
            Err(Error::Config(_))
        ));
        assert!(matches!(
            split_rows(10, None, 1.0, 1),
            Err(Error::Config(_))
        ));
    }

    #[test]
    fn singleton_class_falls_back_to_unstratified() {
        let labels = [0, 0, 0, 0, 1];
        let s = split_rows(5, Some(&labels), 0.4, 3).unwrap();
        s.validate(5).unwrap();
        assert_eq!(s.validation.len(), 2);
    }

    proptest! {
        // Counting check: each class's validation share stays within one row
        // of its exact proportional quota.
        #[test]
        fn stratification_preserves_balance(half in 5usize..200, frac in 0.1f64..0.5, seed: u64) {
            let n = 2 * half;
            let labels: Vec<usize> = (0..n).map(|i| i % 2).collect();
            let s = split_rows(n, Some(&labels), frac, seed).unwrap();
            s.validate(n).unwrap();
            let v1 = s.validation.iter().filter(|&&i| labels[i] == 1).count() as i64;
            let v0 = s.validation.len() as i64 - v1;
            prop_assert!((v1 - v0).abs() <= 1);
            let t1 = s.train.iter().filter(|&&i| labels[i] == 1).count() as i64;
            let t0 = s.train.len() as i64 - t1;
            prop_assert!((t1 - t0).abs() <= 1);
        }
    }
}
