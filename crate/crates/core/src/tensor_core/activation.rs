use rand::Rng;

use super::{Real, Tensor, TensorError};

pub fn relu<T: Real>(input: &Tensor<T>) -> Tensor<T> {
    let data = input
        .data()
        .iter()
        .map(|&v| if v > T::ZERO { v } else { T::ZERO })
        .collect();
    Tensor::new(input.shape().to_vec(), data).expect("same shape")
}

/// Gradient of ReLU given the forward *output*.
pub fn relu_backward<T: Real>(upstream: &Tensor<T>, output: &Tensor<T>) -> Result<Tensor<T>, TensorError> {
    if upstream.shape() != output.shape() {
        return Err(TensorError::ShapeMismatch {
            op: "relu_backward",
            expected: format!("{:?}", output.shape()),
            actual: format!("{:?}", upstream.shape()),
        });
    }
    let data = upstream
        .data()
        .iter()
        .zip(output.data())
        .map(|(&g, &y)| if y > T::ZERO { g } else { T::ZERO })
        .collect();
    Tensor::new(upstream.shape().to_vec(), data)
}

/// Inverted-dropout multiplier mask: kept entries are scaled by `1 / (1 - rate)`.
pub fn dropout_mask<T: Real, R: Rng + ?Sized>(len: usize, rate: f64, rng: &mut R) -> Vec<T> {
    if rate <= 0.0 {
        return vec![T::ONE; len];
    }
    let keep = T::from_f64(1.0 / (1.0 - rate));
    (0..len)
        .map(|_| if rng.random::<f64>() < rate { T::ZERO } else { keep })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn relu_clamps_negatives() {
        let x = Tensor::<f32>::new(vec![4], vec![-1.0, 0.0, 2.0, -0.5]).unwrap();
        let y = relu(&x);
        assert_eq!(y.data(), &[0.0, 0.0, 2.0, 0.0]);
        let g = relu_backward(&Tensor::full(vec![4], 3.0), &y).unwrap();
        assert_eq!(g.data(), &[0.0, 0.0, 3.0, 0.0]);
    }

    #[test]
    fn dropout_mask_is_seeded_and_scaled() {
        let mut a = ChaCha8Rng::seed_from_u64(3);
        let mut b = ChaCha8Rng::seed_from_u64(3);
        let ma: Vec<f32> = dropout_mask(100, 0.5, &mut a);
        let mb: Vec<f32> = dropout_mask(100, 0.5, &mut b);
        assert_eq!(ma, mb);
        assert!(ma.iter().all(|&v| v == 0.0 || v == 2.0));
        let none: Vec<f32> = dropout_mask(5, 0.0, &mut a);
        assert_eq!(none, vec![1.0; 5]);
    }
}
