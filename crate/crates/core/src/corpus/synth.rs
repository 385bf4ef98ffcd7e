use std::f64::consts::PI;
use std::fs;
use std::path::Path;

use rand::Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use super::{CorpusError, CorpusManifest, Partition, SampleRecord};
use crate::dsp::{write_wav_pcm16, AudioClip, SAMPLE_RATE};
use crate::seed;

/// Class names used by synthetic corpora, in class order. All are Table-AV
/// categories, so synthetic corpora can be aggregated.
pub const SYNTH_LABELS: [&str; 8] = [
    "sadness", "anger", "boredom", "happiness", "fear", "neutral", "relief", "surprise",
];

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SynthConfig {
    pub corpus_id: String,
    pub n_classes: usize,
    pub samples_per_class: usize,
    pub seed: u64,
    /// Overrides the class names (defaults to the first `n_classes` of
    /// [`SYNTH_LABELS`]).
    #[serde(default)]
    pub labels: Option<Vec<String>>,
    /// Standard deviation of the low-passed noise relative to full scale.
    #[serde(default = "default_noise")]
    pub noise_level: f64,
    #[serde(default = "default_speakers")]
    pub n_speakers: usize,
}

fn default_noise() -> f64 {
    0.05
}

fn default_speakers() -> usize {
    10
}

impl SynthConfig {
    pub fn new(corpus_id: impl Into<String>, n_classes: usize, samples_per_class: usize, seed: u64) -> Self {
        Self {
            corpus_id: corpus_id.into(),
            n_classes,
            samples_per_class,
            seed,
            labels: None,
            noise_level: default_noise(),
            n_speakers: default_speakers(),
        }
    }

    fn label_names(&self) -> Result<Vec<String>, CorpusError> {
        if self.n_classes < 2 || self.n_classes > SYNTH_LABELS.len() {
            return Err(CorpusError::Invalid(format!(
                "synthetic corpora support 2..={} classes, got {}",
                SYNTH_LABELS.len(),
                self.n_classes
            )));
        }
        match &self.labels {
            Some(l) if l.len() != self.n_classes => Err(CorpusError::Invalid(format!(
                "{} label names for {} classes",
                l.len(),
                self.n_classes
            ))),
            Some(l) => Ok(l.clone()),
            None => Ok(SYNTH_LABELS[..self.n_classes].iter().map(|s| s.to_string()).collect()),
        }
    }
}

/// Speakers are split 60/20/20 into train/dev/test.
fn speaker_partition(speaker: usize, n_speakers: usize) -> Partition {
    let train = (n_speakers * 3).div_ceil(5);
    let dev = (n_speakers - train).div_ceil(2);
    if speaker < train {
        Partition::Train
    } else if speaker < train + dev {
        Partition::Dev
    } else {
        Partition::Test
    }
}

fn synth_clip<R: Rng + ?Sized>(class: usize, noise_level: f64, rng: &mut R) -> Vec<f32> {
    let len = rng.random_range(SAMPLE_RATE as usize..=3 * SAMPLE_RATE as usize);
    let freq = 400.0 * (class + 1) as f64;
    let amp = rng.random_range(0.2..0.4);
    let phase = rng.random_range(0.0..2.0 * PI);
    // one-pole low-pass at 2 kHz, gain-corrected to unit variance
    let a = (-2.0 * PI * 2000.0 / SAMPLE_RATE as f64).exp();
    let gain = ((1.0 + a) / (1.0 - a)).sqrt();
    let mut state = 0.0;
    (0..len)
        .map(|n| {
            let white: f64 = StandardNormal.sample(rng);
            state = a * state + (1.0 - a) * white;
            let t = n as f64 / SAMPLE_RATE as f64;
            let v = amp * (2.0 * PI * freq * t + phase).sin() + noise_level * gain * state;
            v.clamp(-1.0, 1.0) as f32
        })
        .collect()
}

/// Writes `manifest.csv` and `wav/*.wav` under `out_dir`. Class `k` is a
/// tone at `400·(k+1)` Hz over low-passed noise; durations are uniform in
/// 1–3 s. Output is a pure function of the config.
pub fn generate_synthetic_corpus(out_dir: &Path, config: &SynthConfig) -> Result<CorpusManifest, CorpusError> {
    let labels = config.label_names()?;
    if config.samples_per_class == 0 || config.n_speakers < 3 {
        return Err(CorpusError::Invalid(
            "need at least one sample per class and three speakers".into(),
        ));
    }
    let wav_dir = out_dir.join("wav");
    fs::create_dir_all(&wav_dir).map_err(|e| CorpusError::Io {
        path: wav_dir.display().to_string(),
        message: e.to_string(),
    })?;
    let mut samples = Vec::with_capacity(config.n_classes * config.samples_per_class);
    for (k, label) in labels.iter().enumerate() {
        for j in 0..config.samples_per_class {
            let index = (k * config.samples_per_class + j) as u64;
            let mut rng = seed::rng_for(config.seed, &format!("synth:{}", config.corpus_id), index);
            let clip = AudioClip::new(synth_clip(k, config.noise_level, &mut rng), SAMPLE_RATE)?;
            let rel = format!("wav/{label}_{j:04}.wav");
            write_wav_pcm16(out_dir.join(&rel), &clip)?;
            let speaker = j % config.n_speakers;
            samples.push(SampleRecord {
                audio_path: rel,
                label: label.clone(),
                speaker: Some(format!("{}_spk{speaker:02}", config.corpus_id)),
                partition: speaker_partition(speaker, config.n_speakers),
            });
        }
    }
    let manifest = CorpusManifest::new(config.corpus_id.clone(), out_dir, samples, None)?;
    manifest.write(&out_dir.join("manifest.csv"))?;
    Ok(manifest)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::load_manifest;

    #[test]
    fn same_seed_same_bytes() {
        let (a, b) = (tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap());
        let cfg = SynthConfig::new("syn", 2, 3, 11);
        generate_synthetic_corpus(a.path(), &cfg).unwrap();
        generate_synthetic_corpus(b.path(), &cfg).unwrap();
        for name in ["manifest.csv", "wav/sadness_0000.wav", "wav/anger_0002.wav"] {
            assert_eq!(fs::read(a.path().join(name)).unwrap(), fs::read(b.path().join(name)).unwrap());
        }
        let m = load_manifest(&a.path().join("manifest.csv")).unwrap();
        assert_eq!(m.label_space, vec!["anger", "sadness"]);
    }

    #[test]
    fn speakers_split_sixty_twenty_twenty() {
        let dir = tempfile::tempdir().unwrap();
        let m = generate_synthetic_corpus(dir.path(), &SynthConfig::new("syn", 2, 10, 0)).unwrap();
        let count = |p| m.partition_indices(p).len();
        assert_eq!((count(Partition::Train), count(Partition::Dev), count(Partition::Test)), (12, 4, 4));
    }

    #[test]
    fn class_count_is_bounded() {
        let dir = tempfile::tempdir().unwrap();
        assert!(generate_synthetic_corpus(dir.path(), &SynthConfig::new("syn", 9, 1, 0)).is_err());
    }
}
