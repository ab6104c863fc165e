//! Training losses with their input gradients.

use crate::scalar::Scalar;
use ndarray::{Array2, Array4, ArrayView2};

/// Row-wise softmax with the max-subtraction trick.
pub fn softmax<T: Scalar>(logits: ArrayView2<'_, T>) -> Array2<T> {
    let mut out = logits.to_owned();
    for mut row in out.outer_iter_mut() {
        let max = row.iter().cloned().fold(T::neg_infinity(), T::max);
        row.mapv_inplace(|v| (v - max).exp());
        let sum = row.sum();
        row.mapv_inplace(|v| v / sum);
    }
    out
}

/// Mean cross-entropy between logits `(N, K)` and integer labels, together
/// with the gradient with respect to the logits.
pub fn softmax_cross_entropy<T: Scalar>(
    logits: ArrayView2<'_, T>,
    labels: &[usize],
) -> (T, Array2<T>) {
    let n = logits.nrows();
    assert_eq!(n, labels.len(), "one label per row");
    let probs = softmax(logits);
    let tiny = T::from_f(1e-12);
    let mut loss = T::zero();
    for (row, &label) in probs.outer_iter().zip(labels.iter()) {
        loss = loss - (row[label] + tiny).ln();
    }
    let inv_n = T::one() / T::from_usize_(n);
    loss = loss * inv_n;
    let mut grad = probs;
    for (mut row, &label) in grad.outer_iter_mut().zip(labels.iter()) {
        row[label] = row[label] - T::one();
        row.mapv_inplace(|v| v * inv_n);
    }
    (loss, grad)
}

/// Mean squared error over all elements, with the gradient with respect to
/// the prediction.
pub fn mse_loss<T: Scalar>(pred: &Array4<T>, target: &Array4<T>) -> (T, Array4<T>) {
    assert_eq!(pred.dim(), target.dim(), "prediction/target shapes");
    let count = T::from_usize_(pred.len());
    let diff = pred - target;
    let loss = diff.mapv(|v| v * v).sum() / count;
    let scale = T::from_f(2.0) / count;
    let grad = diff.mapv(|v| v * scale);
    (loss, grad)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use ndarray::{arr2, Array4};

    #[test]
    fn softmax_rows_sum_to_one() {
        let logits = arr2(&[[1.0f64, 2.0, 3.0], [-5.0, 0.0, 5.0]]);
        let p = softmax(logits.view());
        for row in p.outer_iter() {
            assert_abs_diff_eq!(row.sum(), 1.0, epsilon = 1e-12);
        }
        assert!(p[(0, 2)] > p[(0, 1)] && p[(0, 1)] > p[(0, 0)]);
    }

    #[test]
    fn uniform_logits_give_log_k_loss() {
        let logits = Array2::<f64>::zeros((4, 10));
        let (loss, _) = softmax_cross_entropy(logits.view(), &[0, 3, 7, 9]);
        assert_abs_diff_eq!(loss, (10.0f64).ln(), epsilon = 1e-9);
    }

    #[test]
    fn cross_entropy_gradient_matches_finite_differences() {
        let mut logits = arr2(&[[0.3f64, -1.2, 0.8], [2.0, 0.1, -0.5]]);
        let labels = [2usize, 0];
        let (_, grad) = softmax_cross_entropy(logits.view(), &labels);
        let eps = 1e-6;
        for i in 0..2 {
            for j in 0..3 {
                let orig = logits[(i, j)];
                logits[(i, j)] = orig + eps;
                let (up, _) = softmax_cross_entropy(logits.view(), &labels);
                logits[(i, j)] = orig - eps;
                let (dn, _) = softmax_cross_entropy(logits.view(), &labels);
                logits[(i, j)] = orig;
                assert_abs_diff_eq!(grad[(i, j)], (up - dn) / (2.0 * eps), epsilon = 1e-8);
            }
        }
    }

    #[test]
    fn perfect_prediction_has_near_zero_loss() {
        let logits = arr2(&[[20.0f64, 0.0, 0.0]]);
        let (loss, _) = softmax_cross_entropy(logits.view(), &[0]);
        assert!(loss < 1e-6, "loss {loss}");
    }

    #[test]
    fn mse_loss_value_and_gradient() {
        let pred = Array4::<f64>::from_elem((1, 1, 2, 2), 1.0);
        let target = Array4::<f64>::from_elem((1, 1, 2, 2), 0.5);
        let (loss, grad) = mse_loss(&pred, &target);
        assert_abs_diff_eq!(loss, 0.25, epsilon = 1e-12);
        // d/dp mean((p - t)^2) = 2 (p - t) / n
        assert_abs_diff_eq!(grad[(0, 0, 0, 0)], 2.0 * 0.5 / 4.0, epsilon = 1e-12);
    }
}
