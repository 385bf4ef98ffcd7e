//! Log-mel feature extraction for 16 kHz mono audio.
//!
//! Pipeline: optional random 5 s chunk, 512-sample Hann STFT with hop 256,
//! power spectrum, 64 HTK mel filters over 0–8 kHz, `ln(x + 1e-10)`, then
//! per-sample standardisation.

mod cache;
mod mel;
mod stft;
mod wav;

pub use cache::{read_feature_cache, write_feature_cache, FeatureSidecar};
pub use mel::{hz_to_mel, mel_filterbank, mel_to_hz, MelFilterbank};
pub use stft::{frame_count, hann_window, stft_magnitude, Spectrogram};
pub use wav::{load_wav, write_wav_pcm16};

use rand::Rng;
use thiserror::Error;

pub const SAMPLE_RATE: u32 = 16_000;
pub const N_FFT: usize = 512;
pub const HOP_LENGTH: usize = 256;
pub const N_MELS: usize = 64;
pub const MAX_SECONDS: f64 = 5.0;
const LOG_FLOOR: f64 = 1e-10;
const STD_FLOOR: f64 = 1e-8;

#[derive(Debug, Error)]
pub enum DspError {
    #[error("{path}: {what}")]
    Unsupported { path: String, what: String },
    #[error("{path}: cannot read WAV: {message}")]
    Wav { path: String, message: String },
    #[error("audio clip is empty")]
    EmptyClip,
    #[error("unsupported sample rate {0} Hz (expected 16000)")]
    SampleRate(u32),
    #[error("mel filterbank: {0}")]
    Filterbank(String),
    #[error("spectrogram has {actual} bins, filterbank expects {expected}")]
    BinMismatch { expected: usize, actual: usize },
    #[error("feature cache {path}: {message}")]
    Cache { path: String, message: String },
}

/// Mono audio at 16 kHz, amplitudes in `[-1, 1]`.
#[derive(Clone, Debug, PartialEq)]
pub struct AudioClip {
    samples: Vec<f32>,
    sample_rate: u32,
}

impl AudioClip {
    pub fn new(samples: Vec<f32>, sample_rate: u32) -> Result<Self, DspError> {
        if sample_rate != SAMPLE_RATE {
            return Err(DspError::SampleRate(sample_rate));
        }
        if samples.is_empty() {
            return Err(DspError::EmptyClip);
        }
        Ok(Self { samples, sample_rate })
    }

    pub fn samples(&self) -> &[f32] {
        &self.samples
    }

    pub fn sample_rate(&self) -> u32 {
        self.sample_rate
    }

    pub fn duration_seconds(&self) -> f64 {
        self.samples.len() as f64 / self.sample_rate as f64
    }
}

/// One utterance's normalised log-mel matrix.
#[derive(Clone, Debug, PartialEq)]
pub struct FeatureSample {
    /// Row-major `n_mels × n_frames`.
    pub mel: Vec<f32>,
    pub n_mels: usize,
    pub n_frames: usize,
    pub label: usize,
    pub corpus_id: String,
}

/// Returns clips up to `max_seconds` unchanged; longer clips yield a
/// contiguous window with a uniformly drawn start offset.
pub fn chunk<R: Rng + ?Sized>(clip: &AudioClip, max_seconds: f64, rng: &mut R) -> AudioClip {
    chunk_with_offset(clip, max_seconds, rng).0
}

/// [`chunk`] that also reports the chosen start offset.
pub fn chunk_with_offset<R: Rng + ?Sized>(clip: &AudioClip, max_seconds: f64, rng: &mut R) -> (AudioClip, usize) {
    let max_len = (max_seconds * clip.sample_rate as f64).round() as usize;
    if clip.samples.len() <= max_len {
        return (clip.clone(), 0);
    }
    let offset = rng.random_range(0..=clip.samples.len() - max_len);
    let window = clip.samples[offset..offset + max_len].to_vec();
    (
        AudioClip {
            samples: window,
            sample_rate: clip.sample_rate,
        },
        offset,
    )
}

/// Unnormalised `ln(mel · |X|² + 1e-10)`, `n_mels × frames`.
pub fn log_mel(spec: &Spectrogram, bank: &MelFilterbank) -> Result<Spectrogram, DspError> {
    let power = Spectrogram {
        bins: spec.bins,
        frames: spec.frames,
        data: spec.data.iter().map(|m| m * m).collect(),
    };
    let mut mel = bank.apply(&power)?;
    mel.data.iter_mut().for_each(|v| *v = (*v + LOG_FLOOR).ln());
    Ok(mel)
}

/// Standardises a matrix to zero mean and unit (population) deviation.
pub fn normalize(values: &[f64]) -> Vec<f32> {
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n;
    let std = var.sqrt().max(STD_FLOOR);
    values.iter().map(|v| ((v - mean) / std) as f32).collect()
}

/// Log-mel followed by per-sample standardisation.
pub fn log_mel_normalize(spec: &Spectrogram, bank: &MelFilterbank) -> Result<Vec<f32>, DspError> {
    if spec.frames == 0 {
        return Err(DspError::EmptyClip);
    }
    Ok(normalize(&log_mel(spec, bank)?.data))
}

/// The full frontend with a prebuilt filterbank.
#[derive(Clone, Debug)]
pub struct FeatureExtractor {
    bank: MelFilterbank,
    max_seconds: f64,
}

impl Default for FeatureExtractor {
    fn default() -> Self {
        Self {
            bank: mel_filterbank(N_MELS, N_FFT, SAMPLE_RATE, 0.0, SAMPLE_RATE as f64 / 2.0).expect("valid defaults"),
            max_seconds: MAX_SECONDS,
        }
    }
}

impl FeatureExtractor {
    pub fn bank(&self) -> &MelFilterbank {
        &self.bank
    }

    /// Returns the normalised `64 × n_frames` matrix and `n_frames`.
    pub fn extract<R: Rng + ?Sized>(&self, clip: &AudioClip, rng: &mut R) -> Result<(Vec<f32>, usize), DspError> {
        let clip = chunk(clip, self.max_seconds, rng);
        let spec = stft_magnitude(clip.samples())?;
        let mel = log_mel_normalize(&spec, &self.bank)?;
        Ok((mel, spec.frames))
    }
}
