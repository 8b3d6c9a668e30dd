//! Softmax cross-entropy over per-frame binary logits.

use ndarray::Array2;

/// Row-wise softmax, numerically stabilized by the row max.
pub fn softmax_rows(logits: &Array2<f64>) -> Array2<f64> {
    let mut p = logits.clone();
    for mut row in p.rows_mut() {
        let max = row.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let mut sum = 0.0;
        for v in row.iter_mut() {
            *v = (*v - max).exp();
            sum += *v;
        }
        for v in row.iter_mut() {
            *v /= sum;
        }
    }
    p
}

/// Loss value plus the gradient with respect to the logits.
pub struct CrossEntropyGrad {
    pub loss: f64,
    pub dlogits: Array2<f64>,
}

/// Mean over frames of `-w[y] * log softmax(logits)[y]`, with per-class
/// weights. Stabilized by log-sum-exp; never produces infinities for finite
/// logits.
pub fn cross_entropy_loss(
    logits: &Array2<f64>,
    labels: &[bool],
    class_weights: (f64, f64),
) -> CrossEntropyGrad {
    let t = logits.nrows();
    assert_eq!(labels.len(), t, "one label per frame");
    assert_eq!(logits.ncols(), 2, "binary logits");
    let p = softmax_rows(logits);
    let mut loss = 0.0;
    let mut dlogits = Array2::zeros((t, 2));
    for ti in 0..t {
        let y = usize::from(labels[ti]);
        let w = if labels[ti] { class_weights.1 } else { class_weights.0 };
        let row = logits.row(ti);
        let max = row[0].max(row[1]);
        let lse = max + ((row[0] - max).exp() + (row[1] - max).exp()).ln();
        loss += -w * (row[y] - lse);
        for c in 0..2 {
            let indicator = if c == y { 1.0 } else { 0.0 };
            dlogits[[ti, c]] = w * (p[[ti, c]] - indicator) / t as f64;
        }
    }
    CrossEntropyGrad {
        loss: loss / t as f64,
        dlogits,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn uniform_logits_give_ln2() {
        let logits = Array2::zeros((4, 2));
        let labels = [true, false, true, false];
        let out = cross_entropy_loss(&logits, &labels, (1.0, 1.0));
        assert!((out.loss - 2f64.ln()).abs() < 1e-12);
    }

    #[test]
    fn confident_correct_prediction_drives_loss_to_zero() {
        let mut logits = Array2::zeros((3, 2));
        for t in 0..3 {
            logits[[t, 1]] = 50.0;
        }
        let labels = [true, true, true];
        let out = cross_entropy_loss(&logits, &labels, (1.0, 1.0));
        assert!(out.loss < 1e-20, "loss {} should vanish", out.loss);
    }

    #[test]
    fn class_weights_scale_per_frame_terms() {
        let logits = Array2::zeros((2, 2));
        let labels = [true, false];
        let unweighted = cross_entropy_loss(&logits, &labels, (1.0, 1.0));
        let weighted = cross_entropy_loss(&logits, &labels, (2.0, 4.0));
        // ln2 * (4 + 2) / 2 vs ln2.
        assert!((weighted.loss - 3.0 * unweighted.loss).abs() < 1e-12);
    }

    #[test]
    fn softmax_rows_sum_to_one() {
        let logits =
            Array2::from_shape_fn((5, 2), |(t, c)| (t as f64 - 2.0) * 3.0 + c as f64 * 0.7);
        let p = softmax_rows(&logits);
        for row in p.rows() {
            assert!((row.sum() - 1.0).abs() < 1e-12);
        }
    }
}
