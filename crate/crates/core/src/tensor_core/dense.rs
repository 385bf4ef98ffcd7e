use super::{check_finite, Real, Tensor, TensorError};

fn dense_dims<T: Real>(input: &Tensor<T>, weights: &Tensor<T>, bias: &Tensor<T>) -> Result<(usize, usize, usize), TensorError> {
    let (n, d_in) = input.dims2("dense")?;
    let (w_in, d_out) = weights.dims2("dense")?;
    if w_in != d_in {
        return Err(TensorError::ShapeMismatch {
            op: "dense",
            expected: format!("weights with {d_in} input rows"),
            actual: format!("{w_in}"),
        });
    }
    if bias.shape() != [d_out] {
        return Err(TensorError::ShapeMismatch {
            op: "dense",
            expected: format!("bias [{d_out}]"),
            actual: format!("{:?}", bias.shape()),
        });
    }
    Ok((n, d_in, d_out))
}

/// `input [N, D_in] · weights [D_in, D_out] + bias [D_out]`.
pub fn dense<T: Real>(input: &Tensor<T>, weights: &Tensor<T>, bias: &Tensor<T>) -> Result<Tensor<T>, TensorError> {
    let (n, d_in, d_out) = dense_dims(input, weights, bias)?;
    let mut out: Vec<T> = (0..n).flat_map(|_| bias.data().iter().copied()).collect();
    T::gemm(n, d_in, d_out, input.data(), false, weights.data(), false, T::ONE, &mut out);
    check_finite("dense", &out)?;
    Tensor::new(vec![n, d_out], out)
}

/// Returns `(grad_input, grad_weights, grad_bias)`.
pub fn dense_backward<T: Real>(
    upstream: &Tensor<T>,
    input: &Tensor<T>,
    weights: &Tensor<T>,
    bias: &Tensor<T>,
) -> Result<(Tensor<T>, Tensor<T>, Tensor<T>), TensorError> {
    let (n, d_in, d_out) = dense_dims(input, weights, bias)?;
    if upstream.shape() != [n, d_out] {
        return Err(TensorError::ShapeMismatch {
            op: "dense_backward",
            expected: format!("{:?}", [n, d_out]),
            actual: format!("{:?}", upstream.shape()),
        });
    }
    let dy = upstream.data();
    let mut dx = vec![T::ZERO; n * d_in];
    T::gemm(n, d_out, d_in, dy, false, weights.data(), true, T::ZERO, &mut dx);
    let mut dw = vec![T::ZERO; d_in * d_out];
    T::gemm(d_in, n, d_out, input.data(), true, dy, false, T::ZERO, &mut dw);
    let mut db = vec![T::ZERO; d_out];
    for row in dy.chunks_exact(d_out) {
        for (b, &g) in db.iter_mut().zip(row) {
            *b += g;
        }
    }
    Ok((
        Tensor::new(vec![n, d_in], dx)?,
        Tensor::new(vec![d_in, d_out], dw)?,
        Tensor::new(vec![d_out], db)?,
    ))
}
