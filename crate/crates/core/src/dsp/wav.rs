use std::path::Path;

use super::{AudioClip, DspError, SAMPLE_RATE};

/// Reads a mono 16 kHz RIFF/WAVE file (PCM16 or IEEE float32).
///
/// PCM16 values are scaled by `1 / 32768`. Nothing is resampled or
/// down-mixed; any other layout is rejected.
pub fn load_wav(path: impl AsRef<Path>) -> Result<AudioClip, DspError> {
    let path = path.as_ref();
    let wav_err = |e: hound::Error| DspError::Wav {
        path: path.display().to_string(),
        message: e.to_string(),
    };
    let reader = hound::WavReader::open(path).map_err(wav_err)?;
    let spec = reader.spec();
    let unsupported = |what: String| DspError::Unsupported {
        path: path.display().to_string(),
        what,
    };
    if spec.sample_rate != SAMPLE_RATE {
        return Err(unsupported(format!(
            "unsupported sample rate {} Hz (expected {SAMPLE_RATE})",
            spec.sample_rate
        )));
    }
    if spec.channels != 1 {
        return Err(unsupported(format!(
            "unsupported channel count {} (expected mono)",
            spec.channels
        )));
    }
    let samples: Vec<f32> = match (spec.sample_format, spec.bits_per_sample) {
        (hound::SampleFormat::Int, 16) => reader
            .into_samples::<i16>()
            .map(|s| s.map(|v| v as f32 / 32768.0))
            .collect::<Result<_, _>>()
            .map_err(wav_err)?,
        (hound::SampleFormat::Float, 32) => reader
            .into_samples::<f32>()
            .collect::<Result<_, _>>()
            .map_err(wav_err)?,
        (format, bits) => {
            return Err(unsupported(format!(
                "unsupported encoding {format:?} with {bits} bits per sample (expected PCM16 or float32)"
            )))
        }
    };
    AudioClip::new(samples, SAMPLE_RATE)
}

/// Writes a clip as mono PCM16; samples are clamped to the representable range.
pub fn write_wav_pcm16(path: impl AsRef<Path>, clip: &AudioClip) -> Result<(), DspError> {
    let path = path.as_ref();
    let wav_err = |e: hound::Error| DspError::Wav {
        path: path.display().to_string(),
        message: e.to_string(),
    };
    let spec = hound::WavSpec {
        channels: 1,
        sample_rate: clip.sample_rate(),
        bits_per_sample: 16,
        sample_format: hound::SampleFormat::Int,
    };
    let mut writer = hound::WavWriter::create(path, spec).map_err(wav_err)?;
    for &s in clip.samples() {
        let q = (s as f64 * 32768.0).round().clamp(-32768.0, 32767.0) as i16;
        writer.write_sample(q).map_err(wav_err)?;
    }
    writer.finalize().map_err(wav_err)
}
