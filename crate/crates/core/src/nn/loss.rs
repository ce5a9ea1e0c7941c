use crate::error::{Error, Result};

use super::DenseMatrix;

/// Row-wise softmax, shifted by the row maximum for stability.
pub fn softmax_rows(logits: &DenseMatrix) -> DenseMatrix {
    let mut out = logits.clone();
    for i in 0..out.rows() {
        let row = out.row_mut(i);
        let m = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let mut z = 0.0;
        for v in row.iter_mut() {
            *v = (*v - m).exp();
            z += *v;
        }
        row.iter_mut().for_each(|v| *v /= z);
    }
    out
}

pub fn log_softmax_rows(logits: &DenseMatrix) -> DenseMatrix {
    let mut out = logits.clone();
    for i in 0..out.rows() {
        let row = out.row_mut(i);
        let m = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let lse = m + row.iter().map(|v| (v - m).exp()).sum::<f64>().ln();
        row.iter_mut().for_each(|v| *v -= lse);
    }
    out
}

/// Mean cross-entropy over `mask` and its gradient with respect to the logits.
pub fn cross_entropy(
    logits: &DenseMatrix,
    labels: &[usize],
    mask: &[usize],
) -> Result<(f64, DenseMatrix)> {
    if mask.is_empty() {
        return Err(Error::Validation("cross-entropy over an empty mask".into()));
    }
    let logp = log_softmax_rows(logits);
    let mut grad = DenseMatrix::zeros(logits.rows(), logits.cols());
    let scale = 1.0 / mask.len() as f64;
    let mut loss = 0.0;
    for &i in mask {
        let y = labels[i];
        loss -= logp.get(i, y);
        for j in 0..logits.cols() {
            let p = logp.get(i, j).exp();
            let t = if j == y { 1.0 } else { 0.0 };
            grad.set(i, j, grad.get(i, j) + scale * (p - t));
        }
    }
    Ok((loss * scale, grad))
}

/// Fraction of `mask` whose arg-max logit equals the label. Ties go to the
/// lowest class index.
pub fn accuracy_from_logits(logits: &DenseMatrix, labels: &[usize], mask: &[usize]) -> Result<f64> {
    if mask.is_empty() {
        return Err(Error::Validation("accuracy over an empty mask".into()));
    }
    let hits = mask
        .iter()
        .filter(|&&i| {
            let row = logits.row(i);
            let mut best = 0;
            for (j, &v) in row.iter().enumerate().skip(1) {
                if v > row[best] {
                    best = j;
                }
            }
            best == labels[i]
        })
        .count();
    Ok(hits as f64 / mask.len() as f64)
}

pub fn accuracy(
    model: &super::Model,
    dataset: &crate::graph::Dataset,
    mask: &[usize],
) -> Result<f64> {
    let logits = model.predict_logits(&dataset.graph, &dataset.features.values)?;
    accuracy_from_logits(&logits, &dataset.labels, mask)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn softmax_rows_sum_to_one() {
        let l = DenseMatrix::from_rows(&[vec![1.0, 2.0, 3.0], vec![-1000.0, 0.0, 1000.0]]).unwrap();
        let p = softmax_rows(&l);
        for i in 0..2 {
            assert!((p.row(i).iter().sum::<f64>() - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn cross_entropy_is_non_negative_and_gradient_rows_sum_to_zero() {
        let l = DenseMatrix::from_rows(&[vec![0.3, -0.2], vec![2.0, 1.0], vec![0.0, 0.0]]).unwrap();
        let (loss, g) = cross_entropy(&l, &[0, 1, 0], &[0, 1]).unwrap();
        assert!(loss >= 0.0);
        for i in 0..2 {
            assert!(g.row(i).iter().sum::<f64>().abs() < 1e-15);
        }
        assert_eq!(g.row(2), &[0.0, 0.0]);
    }

    #[test]
    fn accuracy_ties_and_empty_mask() {
        let perfect = DenseMatrix::from_rows(&[vec![5.0, 0.0], vec![0.0, 5.0]]).unwrap();
        assert_eq!(accuracy_from_logits(&perfect, &[0, 1], &[0, 1]).unwrap(), 1.0);
        let uniform = DenseMatrix::zeros(4, 3);
        // Every tie resolves to class 0, so accuracy is the class-0 rate.
        assert_eq!(accuracy_from_logits(&uniform, &[0, 1, 2, 0], &[0, 1, 2, 3]).unwrap(), 0.5);
        assert!(accuracy_from_logits(&uniform, &[0; 4], &[]).is_err());
    }
}
