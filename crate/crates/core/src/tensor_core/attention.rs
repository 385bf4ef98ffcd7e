use rand::Rng;

use super::{check_finite, Real, Tensor, TensorError};

/// Parameters of the 2D attention pooling layer.
///
/// Each valid time-frequency location `x` (a `C`-vector) is scored as
/// `score · tanh(proj_w · x + proj_b)`; the scores are softmax-normalised over
/// the valid locations of a sample and the output is the weighted sum of the
/// location vectors.
#[derive(Clone, Debug, PartialEq)]
pub struct AttentionParams<T> {
    /// `[C, C]`, row = hidden unit.
    pub proj_w: Tensor<T>,
    pub proj_b: Tensor<T>,
    pub score: Tensor<T>,
}

impl<T: Real> AttentionParams<T> {
    pub fn zeros(channels: usize) -> Self {
        Self {
            proj_w: Tensor::zeros(vec![channels, channels]),
            proj_b: Tensor::zeros(vec![channels]),
            score: Tensor::zeros(vec![channels]),
        }
    }

    /// Uniform fan-in initialisation of the projection and score vector.
    pub fn init<R: Rng + ?Sized>(channels: usize, rng: &mut R) -> Self {
        let bound = (1.0 / channels as f64).sqrt();
        let mut draw = |_| T::from_f64(rng.random_range(-bound..bound));
        Self {
            proj_w: Tensor::from_fn(vec![channels, channels], &mut draw),
            proj_b: Tensor::zeros(vec![channels]),
            score: Tensor::from_fn(vec![channels], &mut draw),
        }
    }

    pub fn channels(&self) -> usize {
        self.proj_b.numel()
    }
}

#[derive(Clone, Debug)]
struct SampleCache<T> {
    locations: Vec<T>,
    hidden: Vec<T>,
    weights: Vec<T>,
    valid_w: usize,
}

/// Forward state needed by [`attention_pool_backward`].
#[derive(Clone, Debug)]
pub struct AttentionCache<T> {
    shape: [usize; 4],
    samples: Vec<SampleCache<T>>,
}

impl<T: Real> AttentionCache<T> {
    /// Attention weights of sample `n` over its valid locations, row-major
    /// in `(frequency, valid frame)` order.
    pub fn weights(&self, n: usize) -> &[T] {
        &self.samples[n].weights
    }
}

#[derive(Clone, Debug)]
pub struct AttentionGrads<T> {
    pub features: Tensor<T>,
    pub proj_w: Vec<T>,
    pub proj_b: Vec<T>,
    pub score: Vec<T>,
}

fn check_lengths(lengths: &[usize], n: usize, w: usize) -> Result<(), TensorError> {
    if lengths.len() != n {
        return Err(TensorError::ShapeMismatch {
            op: "attention_pool",
            expected: format!("{n} lengths"),
            actual: format!("{}", lengths.len()),
        });
    }
    for (i, &l) in lengths.iter().enumerate() {
        if l == 0 {
            return Err(TensorError::ZeroLength {
                op: "attention_pool",
                sample: i,
            });
        }
        if l > w {
            return Err(TensorError::ShapeMismatch {
                op: "attention_pool",
                expected: format!("length <= {w}"),
                actual: format!("{l}"),
            });
        }
    }
    Ok(())
}

/// Pools `[N, C, H, W]` features into `[N, C]`, attending only to the first
/// `lengths[n]` frames of each sample.
pub fn attention_pool<T: Real>(
    features: &Tensor<T>,
    lengths: &[usize],
    params: &AttentionParams<T>,
) -> Result<(Tensor<T>, AttentionCache<T>), TensorError> {
    let (n, c, h, w) = features.dims4("attention_pool")?;
    if params.channels() != c || params.proj_w.shape() != [c, c] || params.score.shape() != [c] {
        return Err(TensorError::ChannelMismatch {
            op: "attention_pool",
            input: c,
            kernel: params.channels(),
        });
    }
    check_lengths(lengths, n, w)?;
    let x = features.data();
    let mut out = vec![T::ZERO; n * c];
    let mut samples = Vec::with_capacity(n);
    for (i, &vw) in lengths.iter().enumerate() {
        let l = h * vw;
        let mut loc = vec![T::ZERO; c * l];
        for ch in 0..c {
            let plane = &x[(i * c + ch) * h * w..][..h * w];
            for y in 0..h {
                loc[ch * l + y * vw..][..vw].copy_from_slice(&plane[y * w..y * w + vw]);
            }
        }
        let mut hidden = vec![T::ZERO; c * l];
        for (row, &b) in hidden.chunks_exact_mut(l).zip(params.proj_b.data()) {
            row.fill(b);
        }
        T::gemm(c, c, l, params.proj_w.data(), false, &loc, false, T::ONE, &mut hidden);
        hidden.iter_mut().for_each(|v| *v = v.tanh());
        let mut scores = vec![T::ZERO; l];
        T::gemm(1, c, l, params.score.data(), false, &hidden, false, T::ZERO, &mut scores);
        let max = scores.iter().copied().fold(scores[0], T::max);
        let mut total = T::ZERO;
        for s in scores.iter_mut() {
            *s = (*s - max).exp();
            total += *s;
        }
        scores.iter_mut().for_each(|s| *s /= total);
        T::gemm(c, l, 1, &loc, false, &scores, false, T::ZERO, &mut out[i * c..(i + 1) * c]);
        samples.push(SampleCache {
            locations: loc,
            hidden,
            weights: scores,
            valid_w: vw,
        });
    }
    check_finite("attention_pool", &out)?;
    Ok((
        Tensor::new(vec![n, c], out)?,
        AttentionCache {
            shape: [n, c, h, w],
            samples,
        },
    ))
}

pub fn attention_pool_backward<T: Real>(
    upstream: &Tensor<T>,
    cache: &AttentionCache<T>,
    params: &AttentionParams<T>,
) -> Result<AttentionGrads<T>, TensorError> {
    let [n, c, h, w] = cache.shape;
    if upstream.shape() != [n, c] {
        return Err(TensorError::ShapeMismatch {
            op: "attention_pool_backward",
            expected: format!("{:?}", [n, c]),
            actual: format!("{:?}", upstream.shape()),
        });
    }
    let mut d_features = vec![T::ZERO; n * c * h * w];
    let mut d_w = vec![T::ZERO; c * c];
    let mut d_b = vec![T::ZERO; c];
    let mut d_v = vec![T::ZERO; c];
    let v = params.score.data();
    for (i, s) in cache.samples.iter().enumerate() {
        let vw = s.valid_w;
        let l = h * vw;
        let dout = &upstream.data()[i * c..(i + 1) * c];
        let mut d_alpha = vec![T::ZERO; l];
        T::gemm(1, c, l, dout, false, &s.locations, false, T::ZERO, &mut d_alpha);
        let dot: T = s.weights.iter().zip(&d_alpha).map(|(&a, &d)| a * d).sum();
        let d_scores: Vec<T> = s.weights.iter().zip(&d_alpha).map(|(&a, &d)| a * (d - dot)).collect();
        T::gemm(c, l, 1, &s.hidden, false, &d_scores, false, T::ONE, &mut d_v);
        let mut d_z = vec![T::ZERO; c * l];
        for hid in 0..c {
            let row_u = &s.hidden[hid * l..(hid + 1) * l];
            let row_dz = &mut d_z[hid * l..(hid + 1) * l];
            let mut bsum = T::ZERO;
            for ((dz, &u), &ds) in row_dz.iter_mut().zip(row_u).zip(&d_scores) {
                *dz = v[hid] * ds * (T::ONE - u * u);
                bsum += *dz;
            }
            d_b[hid] += bsum;
        }
        T::gemm(c, l, c, &d_z, false, &s.locations, true, T::ONE, &mut d_w);
        let mut d_loc = vec![T::ZERO; c * l];
        T::gemm(c, c, l, params.proj_w.data(), true, &d_z, false, T::ZERO, &mut d_loc);
        for ch in 0..c {
            let row = &mut d_loc[ch * l..(ch + 1) * l];
            for (d, &a) in row.iter_mut().zip(&s.weights) {
                *d += dout[ch] * a;
            }
            let plane = &mut d_features[(i * c + ch) * h * w..][..h * w];
            for y in 0..h {
                plane[y * w..y * w + vw].copy_from_slice(&row[y * vw..(y + 1) * vw]);
            }
        }
    }
    check_finite("attention_pool_backward", &d_features)?;
    Ok(AttentionGrads {
        features: Tensor::new(vec![n, c, h, w], d_features)?,
        proj_w: d_w,
        proj_b: d_b,
        score: d_v,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn zero_parameters_average_valid_locations() {
        // C=2, H=1, W=3, valid width 2
        let x = Tensor::<f64>::new(vec![1, 2, 1, 3], vec![1.0, 3.0, 100.0, -2.0, 4.0, 100.0]).unwrap();
        let p = AttentionParams::zeros(2);
        let (y, cache) = attention_pool(&x, &[2], &p).unwrap();
        assert_eq!(y.data(), &[2.0, 1.0]);
        assert_eq!(cache.weights(0), &[0.5, 0.5]);
    }

    #[test]
    fn single_location_is_returned_verbatim() {
        let x = Tensor::<f64>::new(vec![1, 3, 1, 2], vec![0.3, 9.0, -1.2, 9.0, 2.5, 9.0]).unwrap();
        let mut rng = <rand_chacha::ChaCha8Rng as rand::SeedableRng>::seed_from_u64(1);
        let p = AttentionParams::init(3, &mut rng);
        let (y, _) = attention_pool(&x, &[1], &p).unwrap();
        assert_eq!(y.data(), &[0.3, -1.2, 2.5]);
    }

    #[test]
    fn zero_length_is_rejected() {
        let x = Tensor::<f32>::zeros(vec![2, 2, 1, 3]);
        let p = AttentionParams::zeros(2);
        assert_eq!(
            attention_pool(&x, &[3, 0], &p).unwrap_err(),
            TensorError::ZeroLength {
                op: "attention_pool",
                sample: 1
            }
        );
    }
}
