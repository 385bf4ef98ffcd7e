use std::f64::consts::PI;

use rustfft::{num_complex::Complex, FftPlanner};

use super::{DspError, HOP_LENGTH, N_FFT};

/// Row-major `bins × frames` real matrix.
#[derive(Clone, Debug, PartialEq)]
pub struct Spectrogram {
    pub bins: usize,
    pub frames: usize,
    pub data: Vec<f64>,
}

impl Spectrogram {
    pub fn at(&self, bin: usize, frame: usize) -> f64 {
        self.data[bin * self.frames + frame]
    }

    /// Frame `t` as a bins-long vector.
    pub fn frame(&self, t: usize) -> Vec<f64> {
        (0..self.bins).map(|b| self.at(b, t)).collect()
    }
}

/// Number of frames for `len` samples without centre padding.
pub fn frame_count(len: usize) -> usize {
    let len = len.max(N_FFT);
    (len - N_FFT) / HOP_LENGTH + 1
}

/// Periodic Hann window.
pub fn hann_window(n: usize) -> Vec<f64> {
    (0..n).map(|i| 0.5 - 0.5 * (2.0 * PI * i as f64 / n as f64).cos()).collect()
}

/// Magnitude STFT: 512-sample Hann frames, hop 256, no centre padding,
/// 257 non-negative frequency bins. Clips shorter than one window are
/// zero-padded to 512 samples.
pub fn stft_magnitude(samples: &[f32]) -> Result<Spectrogram, DspError> {
    if samples.is_empty() {
        return Err(DspError::EmptyClip);
    }
    let mut padded;
    let signal: &[f32] = if samples.len() < N_FFT {
        padded = samples.to_vec();
        padded.resize(N_FFT, 0.0);
        &padded
    } else {
        samples
    };
    let frames = frame_count(signal.len());
    let bins = N_FFT / 2 + 1;
    let window = hann_window(N_FFT);
    let fft = FftPlanner::<f64>::new().plan_fft_forward(N_FFT);
    let mut buf = vec![Complex::new(0.0, 0.0); N_FFT];
    let mut data = vec![0.0; bins * frames];
    for t in 0..frames {
        let start = t * HOP_LENGTH;
        for (i, c) in buf.iter_mut().enumerate() {
            *c = Complex::new(signal[start + i] as f64 * window[i], 0.0);
        }
        fft.process(&mut buf);
        for (b, c) in buf.iter().take(bins).enumerate() {
            data[b * frames + t] = c.norm();
        }
    }
    Ok(Spectrogram { bins, frames, data })
}
