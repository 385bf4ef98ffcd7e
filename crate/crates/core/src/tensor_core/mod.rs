//! Dense tensors and the hand-written forward/backward kernels used by the
//! network: convolution, batch normalisation, pooling, dense layers,
//! attention pooling, the softmax cross-entropy loss and SGD with momentum.
//!
//! Every kernel is single-threaded and deterministic. Batched kernels take
//! optional per-sample valid widths so that zero-padded time frames stay
//! exactly zero and never leak into statistics.

mod activation;
mod attention;
mod conv;
mod dense;
mod loss;
mod norm;
mod optim;
mod pool;
mod real;
mod tensor;

pub use activation::{dropout_mask, relu, relu_backward};
pub use attention::{attention_pool, attention_pool_backward, AttentionCache, AttentionGrads, AttentionParams};
pub use conv::{conv2d, conv2d_backward, conv_output_len, Padding};
pub use dense::{dense, dense_backward};
pub use loss::{softmax, softmax_xent};
pub use norm::{batchnorm, batchnorm_backward, BatchNormCache, BatchNormState, Mode};
pub(crate) use norm::{batchnorm_stateless, update_running_stats, BatchStats};
pub(crate) use conv::conv2d_backward_selective;
pub use optim::sgd_momentum_step;
pub use pool::{avgpool2d, avgpool2d_backward, pad_channels, pad_channels_backward};
pub use real::Real;
pub use tensor::Tensor;
pub(crate) use tensor::check_finite;

use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum TensorError {
    #[error("{op}: shape mismatch, expected {expected}, got {actual}")]
    ShapeMismatch {
        op: &'static str,
        expected: String,
        actual: String,
    },
    #[error("{op}: expected rank {expected}, got {actual}")]
    Rank {
        op: &'static str,
        expected: usize,
        actual: usize,
    },
    #[error("{op}: channel mismatch ({input} input channels, kernel expects {kernel})")]
    ChannelMismatch {
        op: &'static str,
        input: usize,
        kernel: usize,
    },
    #[error("{op}: empty dimension")]
    Empty { op: &'static str },
    #[error("{op}: unsupported configuration: {detail}")]
    Unsupported { op: &'static str, detail: String },
    #[error("label {label} out of range for {classes} classes")]
    LabelOutOfRange { label: usize, classes: usize },
    #[error("{op}: sample {sample} has zero valid frames")]
    ZeroLength { op: &'static str, sample: usize },
    #[error("{op}: non-finite value encountered")]
    NonFinite { op: &'static str },
}

/// Valid width (time frames) of sample `n`, or the full width when no
/// lengths are supplied.
#[inline]
pub(crate) fn valid_width(lengths: Option<&[usize]>, n: usize, width: usize) -> usize {
    lengths.map_or(width, |l| l[n].min(width))
}
