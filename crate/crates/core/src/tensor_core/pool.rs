use super::{valid_width, Real, Tensor, TensorError};

struct PoolGeometry {
    n: usize,
    c: usize,
    h: usize,
    w: usize,
    oh: usize,
    ow: usize,
    patch: usize,
}

fn pool_geometry<T: Real>(input: &Tensor<T>, patch: usize, stride: usize) -> Result<PoolGeometry, TensorError> {
    let (n, c, h, w) = input.dims4("avgpool2d")?;
    if patch == 0 || patch != stride {
        return Err(TensorError::Unsupported {
            op: "avgpool2d",
            detail: format!("patch {patch} with stride {stride}; only non-overlapping windows are supported"),
        });
    }
    if n == 0 || c == 0 || h == 0 || w == 0 {
        return Err(TensorError::Empty { op: "avgpool2d" });
    }
    Ok(PoolGeometry {
        n,
        c,
        h,
        w,
        oh: h.div_ceil(patch),
        ow: w.div_ceil(patch),
        patch,
    })
}

/// Non-overlapping average pooling with ceil-mode edges.
///
/// Each window averages only the values that are inside the input and
/// inside the sample's valid width; windows with no such values yield 0.
pub fn avgpool2d<T: Real>(
    input: &Tensor<T>,
    patch: usize,
    stride: usize,
    lengths: Option<&[usize]>,
) -> Result<Tensor<T>, TensorError> {
    let g = pool_geometry(input, patch, stride)?;
    let x = input.data();
    let mut out = vec![T::ZERO; g.n * g.c * g.oh * g.ow];
    for i in 0..g.n {
        let vw = valid_width(lengths, i, g.w);
        for ch in 0..g.c {
            let src = &x[(i * g.c + ch) * g.h * g.w..][..g.h * g.w];
            let dst = &mut out[(i * g.c + ch) * g.oh * g.ow..][..g.oh * g.ow];
            for oy in 0..g.oh {
                let ys = oy * g.patch..((oy + 1) * g.patch).min(g.h);
                for ox in 0..g.ow {
                    let xs = ox * g.patch..((ox + 1) * g.patch).min(vw);
                    if xs.is_empty() {
                        continue;
                    }
                    let mut sum = T::ZERO;
                    for y in ys.clone() {
                        for x in xs.clone() {
                            sum += src[y * g.w + x];
                        }
                    }
                    dst[oy * g.ow + ox] = sum / T::from_usize(ys.len() * xs.len());
                }
            }
        }
    }
    Tensor::new(vec![g.n, g.c, g.oh, g.ow], out)
}

pub fn avgpool2d_backward<T: Real>(
    upstream: &Tensor<T>,
    input_shape: &[usize],
    patch: usize,
    stride: usize,
    lengths: Option<&[usize]>,
) -> Result<Tensor<T>, TensorError> {
    let probe = Tensor::<T>::zeros(input_shape.to_vec());
    let g = pool_geometry(&probe, patch, stride)?;
    if upstream.shape() != [g.n, g.c, g.oh, g.ow] {
        return Err(TensorError::ShapeMismatch {
            op: "avgpool2d_backward",
            expected: format!("{:?}", [g.n, g.c, g.oh, g.ow]),
            actual: format!("{:?}", upstream.shape()),
        });
    }
    let dy = upstream.data();
    let mut dx = probe.into_data();
    for i in 0..g.n {
        let vw = valid_width(lengths, i, g.w);
        for ch in 0..g.c {
            let src = &dy[(i * g.c + ch) * g.oh * g.ow..][..g.oh * g.ow];
            let dst = &mut dx[(i * g.c + ch) * g.h * g.w..][..g.h * g.w];
            for oy in 0..g.oh {
                let ys = oy * g.patch..((oy + 1) * g.patch).min(g.h);
                for ox in 0..g.ow {
                    let xs = ox * g.patch..((ox + 1) * g.patch).min(vw);
                    if xs.is_empty() {
                        continue;
                    }
                    let share = src[oy * g.ow + ox] / T::from_usize(ys.len() * xs.len());
                    for y in ys.clone() {
                        for x in xs.clone() {
                            dst[y * g.w + x] += share;
                        }
                    }
                }
            }
        }
    }
    Tensor::new(input_shape.to_vec(), dx)
}

/// Appends zero channels so the result has `channels` channels.
pub fn pad_channels<T: Real>(input: &Tensor<T>, channels: usize) -> Result<Tensor<T>, TensorError> {
    let (n, c, h, w) = input.dims4("pad_channels")?;
    if channels < c {
        return Err(TensorError::ChannelMismatch {
            op: "pad_channels",
            input: c,
            kernel: channels,
        });
    }
    let plane = h * w;
    let mut out = vec![T::ZERO; n * channels * plane];
    for i in 0..n {
        out[i * channels * plane..][..c * plane].copy_from_slice(&input.data()[i * c * plane..][..c * plane]);
    }
    Tensor::new(vec![n, channels, h, w], out)
}

/// Keeps the gradient of the first `channels` channels.
pub fn pad_channels_backward<T: Real>(upstream: &Tensor<T>, channels: usize) -> Result<Tensor<T>, TensorError> {
    let (n, c, h, w) = upstream.dims4("pad_channels_backward")?;
    if channels > c {
        return Err(TensorError::ChannelMismatch {
            op: "pad_channels_backward",
            input: c,
            kernel: channels,
        });
    }
    let plane = h * w;
    let mut out = Vec::with_capacity(n * channels * plane);
    for i in 0..n {
        out.extend_from_slice(&upstream.data()[i * c * plane..][..channels * plane]);
    }
    Tensor::new(vec![n, channels, h, w], out)
}
