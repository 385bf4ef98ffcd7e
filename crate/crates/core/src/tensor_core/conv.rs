use super::{check_finite, Real, Tensor, TensorError};

/// Spatial padding of a convolution.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Padding {
    /// Symmetric zero padding of `(k - 1) / 2`; output length `ceil(len / stride)`.
    Same,
    /// No padding; output length `floor((len - k) / stride) + 1`.
    None,
}

impl Padding {
    fn amount(self, k: usize) -> usize {
        match self {
            Padding::Same => (k - 1) / 2,
            Padding::None => 0,
        }
    }
}

pub fn conv_output_len(len: usize, k: usize, stride: usize, padding: Padding) -> usize {
    let pad = padding.amount(k);
    if len + 2 * pad < k {
        return 0;
    }
    (len + 2 * pad - k) / stride + 1
}

struct Geometry {
    n: usize,
    c_in: usize,
    h: usize,
    w: usize,
    c_out: usize,
    k: usize,
    stride: usize,
    pad: usize,
    oh: usize,
    ow: usize,
}

impl Geometry {
    fn patch(&self) -> usize {
        self.c_in * self.k * self.k
    }

    fn positions(&self) -> usize {
        self.oh * self.ow
    }

    /// A 1×1, stride-1 convolution reads the input directly as its column matrix.
    fn is_pointwise(&self) -> bool {
        self.k == 1 && self.stride == 1 && self.pad == 0
    }
}

fn geometry<T: Real>(
    op: &'static str,
    input: &Tensor<T>,
    kernel: &Tensor<T>,
    stride: usize,
    padding: Padding,
) -> Result<Geometry, TensorError> {
    let (n, c_in, h, w) = input.dims4(op)?;
    let (c_out, kc, kh, kw) = kernel.dims4(op)?;
    if kc != c_in {
        return Err(TensorError::ChannelMismatch {
            op,
            input: c_in,
            kernel: kc,
        });
    }
    if kh != kw || kh == 0 {
        return Err(TensorError::Unsupported {
            op,
            detail: format!("kernel {kh}x{kw} must be square and non-empty"),
        });
    }
    if padding == Padding::Same && kh % 2 == 0 {
        return Err(TensorError::Unsupported {
            op,
            detail: "same padding needs an odd kernel".into(),
        });
    }
    if stride == 0 {
        return Err(TensorError::Unsupported {
            op,
            detail: "stride must be positive".into(),
        });
    }
    if n == 0 || c_in == 0 || h == 0 || w == 0 || c_out == 0 {
        return Err(TensorError::Empty { op });
    }
    let oh = conv_output_len(h, kh, stride, padding);
    let ow = conv_output_len(w, kh, stride, padding);
    if oh == 0 || ow == 0 {
        return Err(TensorError::Empty { op });
    }
    Ok(Geometry {
        n,
        c_in,
        h,
        w,
        c_out,
        k: kh,
        stride,
        pad: padding.amount(kh),
        oh,
        ow,
    })
}

impl Geometry {
    /// Output columns `lo..hi` whose input column `ox * stride + kj - pad`
    /// falls inside the row.
    fn valid_cols(&self, kj: usize) -> (usize, usize) {
        let lo = self.pad.saturating_sub(kj).div_ceil(self.stride);
        let hi = if self.w + self.pad > kj {
            ((self.w - 1 + self.pad - kj) / self.stride + 1).min(self.ow)
        } else {
            0
        };
        (lo.min(hi), hi)
    }

    fn input_row(&self, oy: usize, ki: usize) -> Option<usize> {
        (oy * self.stride + ki).checked_sub(self.pad).filter(|&iy| iy < self.h)
    }
}

fn dot<T: Real>(a: &[T], b: &[T]) -> T {
    let mut acc = [T::ZERO; 8];
    let (ac, bc) = (a.chunks_exact(8), b.chunks_exact(8));
    let tail: T = ac.remainder().iter().zip(bc.remainder()).fold(T::ZERO, |s, (&x, &y)| s + x * y);
    for (x, y) in ac.zip(bc) {
        let (x, y): (&[T; 8], &[T; 8]) = (x.try_into().expect("chunk of 8"), y.try_into().expect("chunk of 8"));
        for i in 0..8 {
            acc[i] += x[i] * y[i];
        }
    }
    acc.iter().fold(tail, |s, &v| s + v)
}

fn im2col<T: Real>(x: &[T], g: &Geometry, cols: &mut [T]) {
    let p = g.positions();
    for ci in 0..g.c_in {
        let plane = &x[ci * g.h * g.w..(ci + 1) * g.h * g.w];
        for ki in 0..g.k {
            for kj in 0..g.k {
                let row = (ci * g.k + ki) * g.k + kj;
                let dst = &mut cols[row * p..(row + 1) * p];
                let (lo, hi) = g.valid_cols(kj);
                for oy in 0..g.oh {
                    let drow = &mut dst[oy * g.ow..(oy + 1) * g.ow];
                    let Some(iy) = g.input_row(oy, ki) else {
                        drow.fill(T::ZERO);
                        continue;
                    };
                    let src = &plane[iy * g.w..(iy + 1) * g.w];
                    drow[..lo].fill(T::ZERO);
                    drow[hi..].fill(T::ZERO);
                    let first = lo * g.stride + kj - g.pad;
                    if g.stride == 1 {
                        drow[lo..hi].copy_from_slice(&src[first..first + hi - lo]);
                    } else {
                        for (d, s) in drow[lo..hi].iter_mut().zip(src[first..].iter().step_by(g.stride)) {
                            *d = *s;
                        }
                    }
                }
            }
        }
    }
}

fn col2im<T: Real>(cols: &[T], g: &Geometry, dx: &mut [T]) {
    let p = g.positions();
    for ci in 0..g.c_in {
        let plane = &mut dx[ci * g.h * g.w..(ci + 1) * g.h * g.w];
        for ki in 0..g.k {
            for kj in 0..g.k {
                let row = (ci * g.k + ki) * g.k + kj;
                let src = &cols[row * p..(row + 1) * p];
                let (lo, hi) = g.valid_cols(kj);
                for oy in 0..g.oh {
                    let Some(iy) = g.input_row(oy, ki) else {
                        continue;
                    };
                    let drow = &mut plane[iy * g.w..(iy + 1) * g.w];
                    let first = lo * g.stride + kj - g.pad;
                    let srow = &src[oy * g.ow + lo..oy * g.ow + hi];
                    for (d, s) in drow[first..].iter_mut().step_by(g.stride).zip(srow) {
                        *d += *s;
                    }
                }
            }
        }
    }
}

/// 2D cross-correlation (no kernel flip) of `[N, C_in, H, W]` with
/// `[C_out, C_in, k, k]`.
pub fn conv2d<T: Real>(
    input: &Tensor<T>,
    kernel: &Tensor<T>,
    stride: usize,
    padding: Padding,
) -> Result<Tensor<T>, TensorError> {
    let g = geometry("conv2d", input, kernel, stride, padding)?;
    let p = g.positions();
    let in_sample = g.c_in * g.h * g.w;
    let out_sample = g.c_out * p;
    let mut out = vec![T::ZERO; g.n * out_sample];
    let mut cols = if g.is_pointwise() {
        Vec::new()
    } else {
        vec![T::ZERO; g.patch() * p]
    };
    for n in 0..g.n {
        let x = &input.data()[n * in_sample..(n + 1) * in_sample];
        let cols_ref: &[T] = if g.is_pointwise() {
            x
        } else {
            im2col(x, &g, &mut cols);
            &cols
        };
        T::gemm(
            g.c_out,
            g.patch(),
            p,
            kernel.data(),
            false,
            cols_ref,
            false,
            T::ZERO,
            &mut out[n * out_sample..(n + 1) * out_sample],
        );
    }
    check_finite("conv2d", &out)?;
    Tensor::new(vec![g.n, g.c_out, g.oh, g.ow], out)
}

/// Gradients of a convolution with respect to its input and kernel.
pub fn conv2d_backward<T: Real>(
    upstream: &Tensor<T>,
    input: &Tensor<T>,
    kernel: &Tensor<T>,
    stride: usize,
    padding: Padding,
) -> Result<(Tensor<T>, Tensor<T>), TensorError> {
    let (gi, gk) = conv2d_backward_selective(upstream, input, kernel, stride, padding, true, true)?;
    Ok((gi.expect("requested"), gk.expect("requested")))
}

/// Like [`conv2d_backward`] but skips the gradients that are not wanted.
pub(crate) fn conv2d_backward_selective<T: Real>(
    upstream: &Tensor<T>,
    input: &Tensor<T>,
    kernel: &Tensor<T>,
    stride: usize,
    padding: Padding,
    want_input: bool,
    want_kernel: bool,
) -> Result<(Option<Tensor<T>>, Option<Tensor<T>>), TensorError> {
    let g = geometry("conv2d_backward", input, kernel, stride, padding)?;
    let expected = [g.n, g.c_out, g.oh, g.ow];
    if upstream.shape() != expected {
        return Err(TensorError::ShapeMismatch {
            op: "conv2d_backward",
            expected: format!("{expected:?}"),
            actual: format!("{:?}", upstream.shape()),
        });
    }
    let p = g.positions();
    let in_sample = g.c_in * g.h * g.w;
    let out_sample = g.c_out * p;
    let mut grad_kernel = want_kernel.then(|| vec![T::ZERO; kernel.numel()]);
    let mut grad_input = want_input.then(|| vec![T::ZERO; input.numel()]);
    let pointwise = g.is_pointwise();
    let mut cols = vec![T::ZERO; if pointwise { 0 } else { g.patch() * p }];
    let mut dcols = vec![T::ZERO; if pointwise || !want_input { 0 } else { g.patch() * p }];

    for n in 0..g.n {
        let dy = &upstream.data()[n * out_sample..(n + 1) * out_sample];
        if let Some(gk) = grad_kernel.as_mut() {
            let x = &input.data()[n * in_sample..(n + 1) * in_sample];
            let cols_ref: &[T] = if pointwise {
                x
            } else {
                im2col(x, &g, &mut cols);
                &cols
            };
            // dK[C_out, CKK] += dY[C_out, P] · cols[CKK, P]^T as row dot
            // products; gemm packing is slow for this skinny shape
            for r in 0..g.patch() {
                let col = &cols_ref[r * p..(r + 1) * p];
                for co in 0..g.c_out {
                    gk[co * g.patch() + r] += dot(&dy[co * p..(co + 1) * p], col);
                }
            }
        }
        if let Some(gi) = grad_input.as_mut() {
            let dx = &mut gi[n * in_sample..(n + 1) * in_sample];
            if pointwise {
                T::gemm(g.patch(), g.c_out, p, kernel.data(), true, dy, false, T::ZERO, dx);
            } else {
                // dcols[CKK, P] = K[C_out, CKK]^T · dY[C_out, P]
                T::gemm(g.patch(), g.c_out, p, kernel.data(), true, dy, false, T::ZERO, &mut dcols);
                col2im(&dcols, &g, dx);
            }
        }
    }
    let gi = match grad_input {
        Some(v) => {
            check_finite("conv2d_backward", &v)?;
            Some(Tensor::new(input.shape().to_vec(), v)?)
        }
        None => None,
    };
    let gk = match grad_kernel {
        Some(v) => {
            check_finite("conv2d_backward", &v)?;
            Some(Tensor::new(kernel.shape().to_vec(), v)?)
        }
        None => None,
    };
    Ok((gi, gk))
}
