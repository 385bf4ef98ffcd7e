use rand::Rng;

use super::TrainError;
use crate::corpus::{make_batches, Batch, CorpusError, CorpusManifest, Partition};
use crate::dsp::FeatureSample;
use crate::model::ModelBundle;
use crate::stats::uar;

/// Features of one training domain, split by partition.
#[derive(Clone, Debug, PartialEq)]
pub struct DomainData {
    pub id: String,
    pub n_classes: usize,
    pub train: Vec<FeatureSample>,
    pub dev: Vec<FeatureSample>,
    pub test: Vec<FeatureSample>,
}

impl DomainData {
    /// Splits `features` (in manifest order) by the manifest's partitions.
    pub fn from_manifest(manifest: &CorpusManifest, features: Vec<FeatureSample>) -> Result<Self, TrainError> {
        if features.len() != manifest.samples.len() {
            return Err(CorpusError::Invalid(format!(
                "{} feature matrices for {} manifest rows",
                features.len(),
                manifest.samples.len()
            ))
            .into());
        }
        let mut data = Self {
            id: manifest.corpus_id.clone(),
            n_classes: manifest.n_classes(),
            train: Vec::new(),
            dev: Vec::new(),
            test: Vec::new(),
        };
        for (record, f) in manifest.samples.iter().zip(features) {
            match record.partition {
                Partition::Train => data.train.push(f),
                Partition::Dev => data.dev.push(f),
                Partition::Test => data.test.push(f),
            }
        }
        Ok(data)
    }

    pub(crate) fn check(&self, need_test: bool) -> Result<(), TrainError> {
        let empty = |partition| TrainError::EmptyPartition {
            domain: self.id.clone(),
            partition,
        };
        if self.train.is_empty() {
            return Err(empty("train"));
        }
        if self.train.len() < 2 {
            return Err(TrainError::TooFewSamples(self.id.clone()));
        }
        if self.dev.is_empty() {
            return Err(empty("dev"));
        }
        if need_test && self.test.is_empty() {
            return Err(empty("test"));
        }
        Ok(())
    }
}

/// Shuffled training batches with no singleton: a trailing one-sample
/// remainder joins the previous batch, because a batch norm in training mode
/// needs two samples.
pub fn training_batches<R: Rng + ?Sized>(
    samples: &[FeatureSample],
    batch_size: usize,
    rng: &mut R,
    domain_id: &str,
) -> Result<Vec<Batch>, TrainError> {
    if samples.len() < 2 {
        return Err(TrainError::TooFewSamples(domain_id.to_string()));
    }
    let mut order: Vec<&FeatureSample> = samples.iter().collect();
    rand::seq::SliceRandom::shuffle(order.as_mut_slice(), rng);
    let mut sizes = vec![batch_size; order.len() / batch_size];
    match order.len() % batch_size {
        0 => {}
        1 => *sizes.last_mut().expect("len >= 2 and batch_size >= 2") += 1,
        r => sizes.push(r),
    }
    let mut start = 0;
    let mut out = Vec::with_capacity(sizes.len());
    for n in sizes {
        out.push(Batch::assemble(&order[start..start + n], domain_id)?);
        start += n;
    }
    Ok(out)
}

/// Eval-mode class predictions in input order.
pub fn predict(
    bundle: &ModelBundle<f32>,
    domain: &str,
    samples: &[FeatureSample],
    batch_size: usize,
) -> Result<Vec<usize>, TrainError> {
    let refs: Vec<&FeatureSample> = samples.iter().collect();
    let mut preds = Vec::with_capacity(samples.len());
    for batch in make_batches::<rand_chacha::ChaCha8Rng>(&refs, batch_size, None, domain)? {
        let logits = bundle.forward(domain, &batch.features, &batch.lengths)?;
        let (n, c) = logits.dims2("predict")?;
        let data = logits.data();
        for i in 0..n {
            let row = &data[i * c..(i + 1) * c];
            let mut best = 0;
            for (j, &v) in row.iter().enumerate() {
                if v > row[best] {
                    best = j;
                }
            }
            preds.push(best);
        }
    }
    Ok(preds)
}

pub fn evaluate_uar(
    bundle: &ModelBundle<f32>,
    domain: &str,
    samples: &[FeatureSample],
    batch_size: usize,
) -> Result<f64, TrainError> {
    let n_classes = bundle.domain(domain)?.n_classes;
    let preds = predict(bundle, domain, samples, batch_size)?;
    let labels: Vec<usize> = samples.iter().map(|s| s.label).collect();
    Ok(uar(&preds, &labels, n_classes)?)
}
