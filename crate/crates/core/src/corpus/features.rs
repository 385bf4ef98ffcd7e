use std::path::{Path, PathBuf};

use sha2::{Digest, Sha256};

use super::{CorpusError, CorpusManifest, SampleRecord};
use crate::dsp::{load_wav, read_feature_cache, write_feature_cache, FeatureExtractor, FeatureSample, FeatureSidecar};
use crate::seed;

/// `<cache_root>/<corpus_id>/<hash of the manifest audio path>` (without
/// extension).
pub fn feature_cache_base(cache_root: &Path, manifest: &CorpusManifest, sample: &SampleRecord) -> PathBuf {
    let digest = Sha256::digest(sample.audio_path.as_bytes());
    let name: String = digest[..8].iter().map(|b| format!("{b:02x}")).collect();
    cache_root.join(&manifest.corpus_id).join(name)
}

fn extract_one(
    manifest: &CorpusManifest,
    extractor: &FeatureExtractor,
    index: usize,
    seed: u64,
) -> Result<FeatureSample, CorpusError> {
    let s = &manifest.samples[index];
    let clip = load_wav(manifest.resolve(s))?;
    let mut rng = seed::rng_for(seed, &format!("chunk:{}", manifest.corpus_id), index as u64);
    let (mel, n_frames) = extractor.extract(&clip, &mut rng)?;
    Ok(FeatureSample {
        n_mels: mel.len() / n_frames,
        mel,
        n_frames,
        label: manifest.class_of(&s.label).expect("validated manifest"),
        corpus_id: manifest.corpus_id.clone(),
    })
}

/// Features of every sample in manifest order, without touching a cache.
/// Long clips are cut at a random offset drawn from `seed` and the sample
/// index.
pub fn compute_features(manifest: &CorpusManifest, seed: u64) -> Result<Vec<FeatureSample>, CorpusError> {
    let extractor = FeatureExtractor::default();
    (0..manifest.samples.len())
        .map(|i| extract_one(manifest, &extractor, i, seed))
        .collect()
}

/// Computes features and writes them to the cache, skipping samples whose
/// cache entry already exists unless `force` is set. Returns the number of
/// entries written.
pub fn extract_features(manifest: &CorpusManifest, cache_root: &Path, seed: u64, force: bool) -> Result<usize, CorpusError> {
    let extractor = FeatureExtractor::default();
    let mut written = 0;
    for (i, s) in manifest.samples.iter().enumerate() {
        let base = feature_cache_base(cache_root, manifest, s);
        if !force && base.with_extension("f32").exists() && base.with_extension("json").exists() {
            continue;
        }
        let f = extract_one(manifest, &extractor, i, seed)?;
        let sidecar = FeatureSidecar {
            n_mels: f.n_mels,
            n_frames: f.n_frames,
            source_path: s.audio_path.clone(),
            label: s.label.clone(),
        };
        write_feature_cache(&base, &f.mel, &sidecar)?;
        written += 1;
    }
    Ok(written)
}

/// Reads cached features for every sample in manifest order.
pub fn load_features(manifest: &CorpusManifest, cache_root: &Path) -> Result<Vec<FeatureSample>, CorpusError> {
    manifest
        .samples
        .iter()
        .map(|s| {
            let base = feature_cache_base(cache_root, manifest, s);
            if !base.with_extension("f32").exists() || !base.with_extension("json").exists() {
                return Err(CorpusError::MissingFeature {
                    audio: s.audio_path.clone(),
                    cache: base.with_extension("f32").display().to_string(),
                });
            }
            let (mel, side) = read_feature_cache(&base)?;
            if side.source_path != s.audio_path || side.label != s.label {
                return Err(CorpusError::Invalid(format!(
                    "cache entry {} belongs to {:?} ({}), not {:?} ({})",
                    base.display(),
                    side.source_path,
                    side.label,
                    s.audio_path,
                    s.label
                )));
            }
            Ok(FeatureSample {
                mel,
                n_mels: side.n_mels,
                n_frames: side.n_frames,
                label: manifest.class_of(&s.label).expect("validated manifest"),
                corpus_id: manifest.corpus_id.clone(),
            })
        })
        .collect()
}
