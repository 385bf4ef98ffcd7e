use std::path::Path;

use emoadapt_core::corpus::{compute_features, generate_synthetic_corpus, CorpusManifest, SynthConfig};
use emoadapt_core::dsp::FeatureSample;
use emoadapt_core::trainer::DomainData;

/// Generates a synthetic corpus under `dir` and returns its manifest and
/// features.
pub fn corpus(dir: &Path, cfg: &SynthConfig) -> (CorpusManifest, Vec<FeatureSample>) {
    let manifest = generate_synthetic_corpus(&dir.join(&cfg.corpus_id), cfg).expect("synthetic corpus");
    let features = compute_features(&manifest, cfg.seed).expect("features");
    (manifest, features)
}

pub fn domain(dir: &Path, cfg: &SynthConfig) -> DomainData {
    let (m, f) = corpus(dir, cfg);
    DomainData::from_manifest(&m, f).expect("domain data")
}
