use super::{Real, TensorError};

/// One SGD-with-momentum update: `v <- momentum * v - lr * g; p <- p + v`.
///
/// `weight_decay` adds `weight_decay * p` to the gradient first; pass zero
/// to disable it.
pub fn sgd_momentum_step<T: Real>(
    params: &mut [T],
    grads: &[T],
    velocity: &mut [T],
    lr: T,
    momentum: T,
    weight_decay: T,
) -> Result<(), TensorError> {
    if params.len() != grads.len() || params.len() != velocity.len() {
        return Err(TensorError::ShapeMismatch {
            op: "sgd_momentum_step",
            expected: format!("{} elements", params.len()),
            actual: format!("grads {}, velocity {}", grads.len(), velocity.len()),
        });
    }
    if grads.iter().any(|g| !g.is_finite()) {
        return Err(TensorError::NonFinite {
            op: "sgd_momentum_step",
        });
    }
    for ((p, &g), v) in params.iter_mut().zip(grads).zip(velocity.iter_mut()) {
        let g = g + weight_decay * *p;
        *v = momentum * *v - lr * g;
        *p += *v;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn zero_gradient_is_a_fixed_point() {
        let mut p = [1.5f64, -2.0];
        let mut v = [0.0; 2];
        sgd_momentum_step(&mut p, &[0.0, 0.0], &mut v, 0.1, 0.9, 0.0).unwrap();
        assert_eq!(p, [1.5, -2.0]);
    }

    #[test]
    fn two_momentum_steps() {
        let mut p = [0.0f64];
        let mut v = [0.0];
        sgd_momentum_step(&mut p, &[1.0], &mut v, 0.1, 0.9, 0.0).unwrap();
        assert!((p[0] + 0.1).abs() < 1e-15);
        sgd_momentum_step(&mut p, &[1.0], &mut v, 0.1, 0.9, 0.0).unwrap();
        assert!((p[0] + 0.29).abs() < 1e-15);
    }

    #[test]
    fn no_momentum_is_plain_descent() {
        let mut p = [2.0f64];
        let mut v = [0.0];
        sgd_momentum_step(&mut p, &[3.0], &mut v, 0.5, 0.0, 0.0).unwrap();
        assert_eq!(p[0], 0.5);
    }

    #[test]
    fn rejects_non_finite_gradient() {
        let mut p = [0.0f32];
        let mut v = [0.0];
        assert!(sgd_momentum_step(&mut p, &[f32::NAN], &mut v, 0.1, 0.9, 0.0).is_err());
        assert_eq!(p[0], 0.0);
    }
}
