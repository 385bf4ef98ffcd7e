use serde::{Deserialize, Serialize};

use super::loops::{train_multidomain, train_single};
use super::{DomainData, RunRecord, TrainConfig, TrainError, TrainEvent};
use crate::corpus::{balanced_subsample_indices, AvMapping, AvTarget, CorpusManifest, Partition};
use crate::dsp::FeatureSample;
use crate::model::{ArchitectureSpec, DomainDescriptor, ModelBundle, Regime};
use crate::seed::rng_for;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum AggregateTarget {
    Arousal,
    Valence,
    /// Arousal and valence as two domains of one multi-domain model.
    Both,
}

impl AggregateTarget {
    pub fn targets(self) -> Vec<AvTarget> {
        match self {
            AggregateTarget::Arousal => vec![AvTarget::Arousal],
            AggregateTarget::Valence => vec![AvTarget::Valence],
            AggregateTarget::Both => vec![AvTarget::Arousal, AvTarget::Valence],
        }
    }
}

/// Pools `corpora` into one domain named after `target`. Labels map through
/// `mapping`; every partition of every corpus is class-balanced separately.
pub fn aggregate_domain(
    corpora: &[(CorpusManifest, Vec<FeatureSample>)],
    target: AvTarget,
    mapping: &AvMapping,
    seed: u64,
) -> Result<DomainData, TrainError> {
    let mut out = DomainData {
        id: target.as_str().to_string(),
        n_classes: target.n_classes(),
        train: Vec::new(),
        dev: Vec::new(),
        test: Vec::new(),
    };
    for (manifest, features) in corpora {
        if features.len() != manifest.samples.len() {
            return Err(TrainError::Config(format!(
                "corpus {:?}: {} feature matrices for {} manifest rows",
                manifest.corpus_id,
                features.len(),
                manifest.samples.len()
            )));
        }
        for partition in Partition::ALL {
            let indices = manifest.partition_indices(partition);
            let mut classes = Vec::with_capacity(indices.len());
            for &i in &indices {
                classes.push(target.class_of(mapping.map_to_av(&manifest.samples[i].label)?));
            }
            let label = format!("subsample:{}:{}:{}", manifest.corpus_id, partition.as_str(), target.as_str());
            let dst = match partition {
                Partition::Train => &mut out.train,
                Partition::Dev => &mut out.dev,
                Partition::Test => &mut out.test,
            };
            for k in balanced_subsample_indices(&classes, &mut rng_for(seed, &label, 0)) {
                let mut f = features[indices[k]].clone();
                f.label = classes[k];
                dst.push(f);
            }
        }
    }
    Ok(out)
}

/// Trains a fresh model on the aggregated arousal and/or valence task.
pub fn train_aggregated(
    corpora: &[(CorpusManifest, Vec<FeatureSample>)],
    target: AggregateTarget,
    mapping: &AvMapping,
    spec: ArchitectureSpec,
    cfg: &TrainConfig,
    observer: &mut dyn FnMut(&TrainEvent),
) -> Result<(ModelBundle<f32>, Vec<RunRecord>), TrainError> {
    let domains = target
        .targets()
        .into_iter()
        .map(|t| aggregate_domain(corpora, t, mapping, cfg.seed))
        .collect::<Result<Vec<_>, _>>()?;
    let descriptors: Vec<DomainDescriptor> = domains.iter().map(|d| DomainDescriptor::new(&d.id, d.n_classes)).collect();
    let mut bundle = ModelBundle::build(spec, &descriptors, cfg.seed)?;
    let mut records = if domains.len() == 1 {
        vec![train_single(&mut bundle, &domains[0], Regime::Scratch, cfg, observer)?]
    } else {
        train_multidomain(&mut bundle, &domains, cfg, observer)?
    };
    let ids: Vec<String> = corpora.iter().map(|(m, _)| m.corpus_id.clone()).collect();
    for r in &mut records {
        r.corpus_ids = ids.clone();
    }
    Ok((bundle, records))
}
