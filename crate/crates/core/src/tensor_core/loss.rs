use super::{Real, Tensor, TensorError};

/// Row-wise softmax of `[N, C]` logits.
pub fn softmax<T: Real>(logits: &Tensor<T>) -> Result<Tensor<T>, TensorError> {
    let (_, c) = logits.dims2("softmax")?;
    let mut out = logits.data().to_vec();
    for row in out.chunks_exact_mut(c) {
        let max = row.iter().copied().fold(row[0], T::max);
        let mut sum = T::ZERO;
        for v in row.iter_mut() {
            *v = (*v - max).exp();
            sum += *v;
        }
        for v in row.iter_mut() {
            *v /= sum;
        }
    }
    Tensor::new(logits.shape().to_vec(), out)
}

/// Mean softmax cross-entropy over the batch and its gradient with respect
/// to the logits.
pub fn softmax_xent<T: Real>(logits: &Tensor<T>, labels: &[usize]) -> Result<(T, Tensor<T>), TensorError> {
    let (n, c) = logits.dims2("softmax_xent")?;
    if labels.len() != n {
        return Err(TensorError::ShapeMismatch {
            op: "softmax_xent",
            expected: format!("{n} labels"),
            actual: format!("{}", labels.len()),
        });
    }
    if n == 0 {
        return Err(TensorError::Empty { op: "softmax_xent" });
    }
    if let Some(&label) = labels.iter().find(|&&l| l >= c) {
        return Err(TensorError::LabelOutOfRange { label, classes: c });
    }
    let probs = softmax(logits)?;
    let n_t = T::from_usize(n);
    let mut grad = probs.into_data();
    let mut loss = T::ZERO;
    for (row, &label) in grad.chunks_exact_mut(c).zip(labels) {
        let p = row[label].max(T::from_f64(1e-30));
        loss -= p.ln();
        row[label] -= T::ONE;
        for v in row.iter_mut() {
            *v /= n_t;
        }
    }
    if !loss.is_finite() {
        return Err(TensorError::NonFinite { op: "softmax_xent" });
    }
    Ok((loss / n_t, Tensor::new(vec![n, c], grad)?))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn uniform_logits_give_log_c() {
        let logits = Tensor::<f64>::full(vec![3, 4], 0.7);
        let (loss, grad) = softmax_xent(&logits, &[0, 1, 3]).unwrap();
        assert!((loss - 4f64.ln()).abs() < 1e-12);
        let row_sums: Vec<f64> = grad.data().chunks(4).map(|r| r.iter().sum()).collect();
        assert!(row_sums.iter().all(|s| s.abs() < 1e-12));
    }

    #[test]
    fn softmax_rows_sum_to_one_and_are_shift_invariant() {
        let a = Tensor::<f64>::from_fn(vec![2, 3], |i| i as f64 * 1.3);
        let b = Tensor::<f64>::from_fn(vec![2, 3], |i| i as f64 * 1.3 + 50.0);
        let pa = softmax(&a).unwrap();
        let pb = softmax(&b).unwrap();
        for row in pa.data().chunks(3) {
            assert!((row.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        }
        for (x, y) in pa.data().iter().zip(pb.data()) {
            assert!((x - y).abs() < 1e-12);
        }
    }

    #[test]
    fn label_out_of_range_is_an_error() {
        let logits = Tensor::<f32>::zeros(vec![1, 2]);
        assert_eq!(
            softmax_xent(&logits, &[2]).unwrap_err(),
            TensorError::LabelOutOfRange { label: 2, classes: 2 }
        );
    }
}
