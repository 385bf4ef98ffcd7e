use super::{check_finite, valid_width, Real, Tensor, TensorError};

/// Whether a layer normalises with batch statistics (and updates its
/// running estimates) or with the stored running estimates.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Mode {
    Train,
    Eval,
}

/// Per-channel batch normalisation parameters and running statistics.
#[derive(Clone, Debug, PartialEq)]
pub struct BatchNormState<T> {
    pub gamma: Tensor<T>,
    pub beta: Tensor<T>,
    pub running_mean: Vec<T>,
    pub running_var: Vec<T>,
    pub epsilon: T,
    pub momentum_stats: T,
}

impl<T: Real> BatchNormState<T> {
    /// gamma 1, beta 0, running mean 0, running variance 1.
    pub fn new(channels: usize) -> Self {
        Self {
            gamma: Tensor::full(vec![channels], T::ONE),
            beta: Tensor::zeros(vec![channels]),
            running_mean: vec![T::ZERO; channels],
            running_var: vec![T::ONE; channels],
            epsilon: T::from_f64(1e-5),
            momentum_stats: T::from_f64(0.1),
        }
    }

    pub fn channels(&self) -> usize {
        self.running_mean.len()
    }
}

/// Values saved by the forward pass for [`batchnorm_backward`].
#[derive(Clone, Debug)]
pub struct BatchNormCache<T> {
    mode: Mode,
    shape: [usize; 4],
    lengths: Option<Vec<usize>>,
    xhat: Vec<T>,
    inv_std: Vec<T>,
    count: usize,
}

/// Batch normalisation over `(N, H, W)` per channel.
///
/// With `lengths`, only the first `lengths[n]` columns of sample `n` take
/// part in the statistics and all other positions are written as zero.
pub fn batchnorm<T: Real>(
    input: &Tensor<T>,
    state: &mut BatchNormState<T>,
    mode: Mode,
    lengths: Option<&[usize]>,
) -> Result<(Tensor<T>, BatchNormCache<T>), TensorError> {
    let (out, cache, stats) = batchnorm_stateless(input, state, mode, lengths)?;
    if let Some(stats) = stats {
        update_running_stats(state, &stats);
    }
    Ok((out, cache))
}

/// Batch statistics of one train-mode pass, used to update running estimates.
#[derive(Clone, Debug)]
pub(crate) struct BatchStats<T> {
    mean: Vec<T>,
    unbiased_var: Vec<T>,
}

pub(crate) fn update_running_stats<T: Real>(state: &mut BatchNormState<T>, stats: &BatchStats<T>) {
    let m = state.momentum_stats;
    for ch in 0..state.channels() {
        state.running_mean[ch] = (T::ONE - m) * state.running_mean[ch] + m * stats.mean[ch];
        state.running_var[ch] = (T::ONE - m) * state.running_var[ch] + m * stats.unbiased_var[ch];
    }
}

/// [`batchnorm`] without touching the running statistics; train mode
/// returns the batch statistics instead.
#[allow(clippy::type_complexity)]
pub(crate) fn batchnorm_stateless<T: Real>(
    input: &Tensor<T>,
    state: &BatchNormState<T>,
    mode: Mode,
    lengths: Option<&[usize]>,
) -> Result<(Tensor<T>, BatchNormCache<T>, Option<BatchStats<T>>), TensorError> {
    let (n, c, h, w) = input.dims4("batchnorm")?;
    if c != state.channels() {
        return Err(TensorError::ChannelMismatch {
            op: "batchnorm",
            input: c,
            kernel: state.channels(),
        });
    }
    if let Some(l) = lengths {
        if l.len() != n {
            return Err(TensorError::ShapeMismatch {
                op: "batchnorm",
                expected: format!("{n} lengths"),
                actual: format!("{}", l.len()),
            });
        }
    }
    let count: usize = (0..n).map(|i| h * valid_width(lengths, i, w)).sum();
    if count == 0 {
        return Err(TensorError::Empty { op: "batchnorm" });
    }
    if mode == Mode::Train && count < 2 {
        return Err(TensorError::Unsupported {
            op: "batchnorm",
            detail: "train mode needs at least two values per channel".into(),
        });
    }

    let x = input.data();
    let plane = h * w;
    let mut out = vec![T::ZERO; x.len()];
    let mut xhat = vec![T::ZERO; x.len()];
    let mut inv_std = vec![T::ZERO; c];
    let count_t = T::from_usize(count);
    let mut stats = (mode == Mode::Train).then(|| BatchStats {
        mean: vec![T::ZERO; c],
        unbiased_var: vec![T::ZERO; c],
    });

    for ch in 0..c {
        let (mean, var) = match mode {
            Mode::Train => {
                let mut sum = T::ZERO;
                for i in 0..n {
                    let vw = valid_width(lengths, i, w);
                    let base = (i * c + ch) * plane;
                    for y in 0..h {
                        sum += x[base + y * w..base + y * w + vw].iter().copied().sum::<T>();
                    }
                }
                let mean = sum / count_t;
                let mut sq = T::ZERO;
                for i in 0..n {
                    let vw = valid_width(lengths, i, w);
                    let base = (i * c + ch) * plane;
                    for y in 0..h {
                        for &v in &x[base + y * w..base + y * w + vw] {
                            let d = v - mean;
                            sq += d * d;
                        }
                    }
                }
                let var = sq / count_t;
                if let Some(st) = stats.as_mut() {
                    st.mean[ch] = mean;
                    st.unbiased_var[ch] = var * count_t / T::from_usize(count - 1);
                }
                (mean, var)
            }
            Mode::Eval => (state.running_mean[ch], state.running_var[ch]),
        };
        let istd = T::ONE / (var + state.epsilon).sqrt();
        inv_std[ch] = istd;
        let g = state.gamma.data()[ch];
        let b = state.beta.data()[ch];
        for i in 0..n {
            let vw = valid_width(lengths, i, w);
            let base = (i * c + ch) * plane;
            for y in 0..h {
                let row = base + y * w;
                for idx in row..row + vw {
                    let xh = (x[idx] - mean) * istd;
                    xhat[idx] = xh;
                    out[idx] = g * xh + b;
                }
            }
        }
    }
    check_finite("batchnorm", &out)?;
    let cache = BatchNormCache {
        mode,
        shape: [n, c, h, w],
        lengths: lengths.map(<[usize]>::to_vec),
        xhat,
        inv_std,
        count,
    };
    Ok((Tensor::new(input.shape().to_vec(), out)?, cache, stats))
}

/// Returns `(grad_input, grad_gamma, grad_beta)`.
pub fn batchnorm_backward<T: Real>(
    upstream: &Tensor<T>,
    cache: &BatchNormCache<T>,
    state: &BatchNormState<T>,
) -> Result<(Tensor<T>, Vec<T>, Vec<T>), TensorError> {
    let [n, c, h, w] = cache.shape;
    if upstream.shape() != cache.shape {
        return Err(TensorError::ShapeMismatch {
            op: "batchnorm_backward",
            expected: format!("{:?}", cache.shape),
            actual: format!("{:?}", upstream.shape()),
        });
    }
    let lengths = cache.lengths.as_deref();
    let dy = upstream.data();
    let plane = h * w;
    let mut dx = vec![T::ZERO; dy.len()];
    let mut dgamma = vec![T::ZERO; c];
    let mut dbeta = vec![T::ZERO; c];
    let count_t = T::from_usize(cache.count);

    let for_valid = |ch: usize, f: &mut dyn FnMut(usize)| {
        for i in 0..n {
            let vw = valid_width(lengths, i, w);
            let base = (i * c + ch) * plane;
            for y in 0..h {
                let row = base + y * w;
                for idx in row..row + vw {
                    f(idx);
                }
            }
        }
    };

    for ch in 0..c {
        let mut sum_dy = T::ZERO;
        let mut sum_dy_xhat = T::ZERO;
        for_valid(ch, &mut |idx| {
            sum_dy += dy[idx];
            sum_dy_xhat += dy[idx] * cache.xhat[idx];
        });
        dgamma[ch] = sum_dy_xhat;
        dbeta[ch] = sum_dy;
        let g = state.gamma.data()[ch];
        let istd = cache.inv_std[ch];
        match cache.mode {
            Mode::Train => {
                let scale = g * istd / count_t;
                for_valid(ch, &mut |idx| {
                    dx[idx] = scale * (count_t * dy[idx] - sum_dy - cache.xhat[idx] * sum_dy_xhat);
                });
            }
            Mode::Eval => {
                for_valid(ch, &mut |idx| dx[idx] = g * istd * dy[idx]);
            }
        }
    }
    check_finite("batchnorm_backward", &dx)?;
    Ok((Tensor::new(cache.shape.to_vec(), dx)?, dgamma, dbeta))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn standardises_two_values() {
        let x = Tensor::<f64>::new(vec![2, 1, 1, 1], vec![1.0, 3.0]).unwrap();
        let mut st = BatchNormState::new(1);
        st.epsilon = 0.0;
        let (y, _) = batchnorm(&x, &mut st, Mode::Train, None).unwrap();
        assert!((y.data()[0] + 1.0).abs() < 1e-12);
        assert!((y.data()[1] - 1.0).abs() < 1e-12);
    }

    #[test]
    fn constant_input_maps_to_beta() {
        let x = Tensor::<f32>::full(vec![2, 1, 2, 2], 7.0);
        let mut st = BatchNormState::new(1);
        st.beta.data_mut()[0] = 5.0;
        let (y, _) = batchnorm(&x, &mut st, Mode::Train, None).unwrap();
        assert!(y.data().iter().all(|&v| v == 5.0));
    }

    #[test]
    fn running_stats_follow_ema() {
        let x = Tensor::<f64>::new(vec![2, 1, 1, 1], vec![1.0, 3.0]).unwrap();
        let mut st = BatchNormState::new(1);
        batchnorm(&x, &mut st, Mode::Train, None).unwrap();
        assert!((st.running_mean[0] - 0.2).abs() < 1e-12);
        // unbiased variance 2.0
        assert!((st.running_var[0] - (0.9 + 0.2)).abs() < 1e-12);
        assert!(st.running_var.iter().all(|&v| v >= 0.0));
    }

    #[test]
    fn eval_mode_uses_running_stats_and_leaves_them() {
        let x = Tensor::<f64>::new(vec![1, 1, 1, 2], vec![2.0, 4.0]).unwrap();
        let mut st = BatchNormState::new(1);
        st.running_mean[0] = 1.0;
        st.running_var[0] = 4.0 - st.epsilon;
        let before = st.clone();
        let (y, _) = batchnorm(&x, &mut st, Mode::Eval, None).unwrap();
        assert_eq!(st, before);
        assert!((y.data()[0] - 0.5).abs() < 1e-12);
        assert!((y.data()[1] - 1.5).abs() < 1e-12);
    }

    #[test]
    fn masked_positions_are_zero_and_excluded() {
        // sample 0 valid width 1 of 3; masked values must not affect stats
        let x = Tensor::<f64>::new(vec![2, 1, 1, 3], vec![1.0, 100.0, -50.0, 3.0, 9.0, 9.0]).unwrap();
        let mut st = BatchNormState::new(1);
        st.epsilon = 0.0;
        let (y, _) = batchnorm(&x, &mut st, Mode::Train, Some(&[1, 1])).unwrap();
        assert_eq!(y.data()[1], 0.0);
        assert_eq!(y.data()[5], 0.0);
        assert!((y.data()[0] + 1.0).abs() < 1e-12);
        assert!((y.data()[3] - 1.0).abs() < 1e-12);
    }

    #[test]
    fn single_value_train_batch_is_rejected() {
        let x = Tensor::<f32>::full(vec![1, 2, 1, 1], 1.0);
        let mut st = BatchNormState::new(2);
        assert!(batchnorm(&x, &mut st, Mode::Train, None).is_err());
        assert!(batchnorm(&x, &mut st, Mode::Eval, None).is_ok());
        let empty = Tensor::<f32>::zeros(vec![0, 2, 1, 1]);
        assert!(matches!(
            batchnorm(&empty, &mut st, Mode::Eval, None),
            Err(TensorError::Empty { .. })
        ));
    }
}
