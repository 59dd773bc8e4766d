//! Scalar losses and their gradients with respect to the prediction.

use ndarray::{Array2, ArrayView2};

use crate::error::{Error, Result};

/// Floor applied to probabilities before taking the log.
pub const PROB_FLOOR: f64 = 1e-12;

const ROW_SUM_TOL: f64 = 1e-6;

fn same_shape(a: &ArrayView2<f64>, b: &ArrayView2<f64>) -> Result<()> {
    if a.dim() != b.dim() {
        return Err(Error::Shape(format!("{:?} vs {:?}", a.dim(), b.dim())));
    }
    Ok(())
}

/// Mean over all entries of `(y - x)²`.
pub fn mse(y: ArrayView2<f64>, x: ArrayView2<f64>) -> Result<f64> {
    same_shape(&y, &x)?;
    if y.is_empty() {
        return Ok(0.0);
    }
    let sum: f64 = y.iter().zip(x.iter()).map(|(a, b)| (a - b) * (a - b)).sum();
    Ok(sum / y.len() as f64)
}

/// `∂ mse(y, x) / ∂y = 2 (y - x) / N` with N the entry count.
pub fn mse_grad(y: ArrayView2<f64>, x: ArrayView2<f64>) -> Result<Array2<f64>> {
    same_shape(&y, &x)?;
    let scale = 2.0 / y.len().max(1) as f64;
    Ok((&y - &x) * scale)
}

/// Row class index of a one-hot matrix.
pub fn one_hot_classes(r_bar: ArrayView2<f64>) -> Result<Vec<usize>> {
    r_bar
        .rows()
        .into_iter()
        .enumerate()
        .map(|(i, row)| {
            let mut class = None;
            for (j, &v) in row.iter().enumerate() {
                if v == 1.0 && class.is_none() {
                    class = Some(j);
                } else if v != 0.0 {
                    return Err(Error::Input(format!("row {i} of target is not one-hot")));
                }
            }
            class.ok_or_else(|| Error::Input(format!("row {i} of target is all zero")))
        })
        .collect()
}

/// Build a one-hot matrix from class labels.
pub fn one_hot(labels: &[usize], classes: usize) -> Array2<f64> {
    let mut m = Array2::zeros((labels.len(), classes));
    for (i, &c) in labels.iter().enumerate() {
        m[[i, c]] = 1.0;
    }
    m
}

fn check_probabilities(r_hat: &ArrayView2<f64>) -> Result<()> {
    for (i, row) in r_hat.rows().into_iter().enumerate() {
        let sum = row.sum();
        if !sum.is_finite() || (sum - 1.0).abs() > ROW_SUM_TOL || row.iter().any(|&p| p < 0.0) {
            return Err(Error::Input(format!(
                "prediction row {i} is not a probability vector (sums to {sum})"
            )));
        }
    }
    Ok(())
}

/// `−(1/n) Σ log r_hat[i, class(i)]`, probabilities floored at [`PROB_FLOOR`].
pub fn cross_entropy(r_hat: ArrayView2<f64>, r_bar: ArrayView2<f64>) -> Result<f64> {
    same_shape(&r_hat, &r_bar)?;
    check_probabilities(&r_hat)?;
    let classes = one_hot_classes(r_bar)?;
    Ok(cross_entropy_labels(r_hat, &classes))
}

/// Cross-entropy against integer labels. Inputs are assumed valid.
pub(crate) fn cross_entropy_labels(r_hat: ArrayView2<f64>, labels: &[usize]) -> f64 {
    if labels.is_empty() {
        return 0.0;
    }
    let sum: f64 = labels
        .iter()
        .enumerate()
        .map(|(i, &c)| -r_hat[[i, c]].max(PROB_FLOOR).ln())
        .sum();
    sum / labels.len() as f64
}

/// Gradient of [`cross_entropy`] with respect to `r_hat`. Zero where the
/// floor is active.
pub fn cross_entropy_grad(r_hat: ArrayView2<f64>, labels: &[usize]) -> Array2<f64> {
    let n = labels.len().max(1) as f64;
    let mut g = Array2::zeros(r_hat.raw_dim());
    for (i, &c) in labels.iter().enumerate() {
        let p = r_hat[[i, c]];
        if p > PROB_FLOOR {
            g[[i, c]] = -1.0 / (n * p);
        }
    }
    g
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;

    #[test]
    fn mse_examples() {
        let a = array![[1.0, 2.0], [3.0, 4.0]];
        assert_eq!(mse(a.view(), a.view()).unwrap(), 0.0);
        assert_eq!(
            mse(array![[0.0]].view(), array![[2.0]].view()).unwrap(),
            4.0
        );
        assert_eq!(mse(a.view(), Array2::zeros((2, 2)).view()).unwrap(), 7.5);
    }

    #[test]
    fn mse_shape_mismatch() {
        assert!(matches!(
            mse(array![[1.0]].view(), array![[1.0, 2.0]].view()),
            Err(Error::Shape(_))
        ));
    }

    #[test]
    fn cross_entropy_examples() {
        let onehot = array![[0.0, 1.0], [1.0, 0.0]];
        assert!(cross_entropy(onehot.view(), onehot.view()).unwrap().abs() < 1e-12);

        let uniform = array![[0.5, 0.5], [0.5, 0.5]];
        let ce = cross_entropy(uniform.view(), onehot.view()).unwrap();
        assert!((ce - std::f64::consts::LN_2).abs() < 1e-12);

        let ce = cross_entropy(array![[0.9, 0.1]].view(), array![[0.0, 1.0]].view()).unwrap();
        assert!((ce - std::f64::consts::LN_10).abs() < 1e-12);
    }

    #[test]
    fn cross_entropy_floors_zero_probabilities() {
        let ce = cross_entropy(array![[1.0, 0.0]].view(), array![[0.0, 1.0]].view()).unwrap();
        assert!((ce - (-PROB_FLOOR.ln())).abs() < 1e-9);
    }

    #[test]
    fn cross_entropy_rejects_unnormalised_rows() {
        let err = cross_entropy(array![[0.7, 0.7]].view(), array![[1.0, 0.0]].view());
        assert!(matches!(err, Err(Error::Input(_))));
        let err = cross_entropy(array![[0.5, 0.5]].view(), array![[1.0, 1.0]].view());
        assert!(matches!(err, Err(Error::Input(_))));
    }

    #[test]
    fn cross_entropy_grad_matches_difference_quotient() {
        let p = array![[0.3, 0.7], [0.6, 0.4]];
        let labels = [1, 0];
        let g = cross_entropy_grad(p.view(), &labels);
        let h = 1e-6;
        for i in 0..2 {
            for j in 0..2 {
                let mut up = p.clone();
                up[[i, j]] += h;
                let mut dn = p.clone();
                dn[[i, j]] -= h;
                let fd = (cross_entropy_labels(up.view(), &labels)
                    - cross_entropy_labels(dn.view(), &labels))
                    / (2.0 * h);
                assert!((fd - g[[i, j]]).abs() < 1e-6);
            }
        }
    }
}
