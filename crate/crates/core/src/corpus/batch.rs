use rand::seq::SliceRandom;
use rand::Rng;

use super::CorpusError;
use crate::dsp::FeatureSample;
use crate::tensor_core::Tensor;

/// Zero-padded mini-batch `[N, 1, n_mels, W_max]`.
#[derive(Clone, Debug, PartialEq)]
pub struct Batch {
    pub features: Tensor<f32>,
    pub lengths: Vec<usize>,
    pub labels: Vec<usize>,
    pub domain_id: String,
}

impl Batch {
    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    /// Pads `samples` to their longest member.
    pub fn assemble(samples: &[&FeatureSample], domain_id: &str) -> Result<Self, CorpusError> {
        let first = samples.first().ok_or_else(|| CorpusError::Invalid("empty batch".into()))?;
        let n_mels = first.n_mels;
        if let Some(bad) = samples.iter().find(|s| s.n_mels != n_mels || s.n_frames == 0) {
            return Err(CorpusError::Invalid(format!(
                "sample with {} mel bands and {} frames in a batch of {n_mels}-band features",
                bad.n_mels, bad.n_frames
            )));
        }
        let w = samples.iter().map(|s| s.n_frames).max().expect("non-empty");
        let mut data = vec![0.0f32; samples.len() * n_mels * w];
        for (i, s) in samples.iter().enumerate() {
            for m in 0..n_mels {
                let dst = (i * n_mels + m) * w;
                data[dst..dst + s.n_frames].copy_from_slice(&s.mel[m * s.n_frames..(m + 1) * s.n_frames]);
            }
        }
        Ok(Self {
            features: Tensor::new(vec![samples.len(), 1, n_mels, w], data).expect("sized above"),
            lengths: samples.iter().map(|s| s.n_frames).collect(),
            labels: samples.iter().map(|s| s.label).collect(),
            domain_id: domain_id.to_string(),
        })
    }
}

/// Splits samples into batches of at most `batch_size`, shuffling first when
/// an rng is given. The last batch may be short.
pub fn make_batches<R: Rng + ?Sized>(
    samples: &[&FeatureSample],
    batch_size: usize,
    shuffle: Option<&mut R>,
    domain_id: &str,
) -> Result<Vec<Batch>, CorpusError> {
    if batch_size == 0 {
        return Err(CorpusError::Invalid("batch size must be positive".into()));
    }
    let mut order: Vec<&FeatureSample> = samples.to_vec();
    if let Some(rng) = shuffle {
        order.shuffle(rng);
    }
    order.chunks(batch_size).map(|c| Batch::assemble(c, domain_id)).collect()
}
