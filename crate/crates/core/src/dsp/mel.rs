use super::{DspError, Spectrogram};

/// HTK mel scale.
pub fn hz_to_mel(f: f64) -> f64 {
    2595.0 * (1.0 + f / 700.0).log10()
}

pub fn mel_to_hz(m: f64) -> f64 {
    700.0 * (10f64.powf(m / 2595.0) - 1.0)
}

/// Triangular mel filters over the non-negative FFT bins.
#[derive(Clone, Debug, PartialEq)]
pub struct MelFilterbank {
    pub n_mels: usize,
    pub n_bins: usize,
    /// Row-major `n_mels × n_bins`.
    pub weights: Vec<f64>,
    pub centers_hz: Vec<f64>,
}

impl MelFilterbank {
    pub fn row(&self, m: usize) -> &[f64] {
        &self.weights[m * self.n_bins..(m + 1) * self.n_bins]
    }

    /// `n_mels × frames` projection of a `n_bins × frames` spectrogram.
    pub fn apply(&self, spec: &Spectrogram) -> Result<Spectrogram, DspError> {
        if spec.bins != self.n_bins {
            return Err(DspError::BinMismatch {
                expected: self.n_bins,
                actual: spec.bins,
            });
        }
        let mut out = vec![0.0; self.n_mels * spec.frames];
        for m in 0..self.n_mels {
            let dst = &mut out[m * spec.frames..(m + 1) * spec.frames];
            for (b, &wgt) in self.row(m).iter().enumerate() {
                if wgt == 0.0 {
                    continue;
                }
                let src = &spec.data[b * spec.frames..(b + 1) * spec.frames];
                for (d, &s) in dst.iter_mut().zip(src) {
                    *d += wgt * s;
                }
            }
        }
        Ok(Spectrogram {
            bins: self.n_mels,
            frames: spec.frames,
            data: out,
        })
    }

    /// Index of the filter whose centre frequency is closest to `hz`.
    pub fn nearest_filter(&self, hz: f64) -> usize {
        self.centers_hz
            .iter()
            .enumerate()
            .min_by(|a, b| (a.1 - hz).abs().total_cmp(&(b.1 - hz).abs()))
            .map(|(i, _)| i)
            .unwrap_or(0)
    }
}

/// Builds `n_mels` triangular filters whose edges are equally spaced on the
/// HTK mel scale between `f_min` and `f_max`.
pub fn mel_filterbank(n_mels: usize, n_fft: usize, sample_rate: u32, f_min: f64, f_max: f64) -> Result<MelFilterbank, DspError> {
    let nyquist = sample_rate as f64 / 2.0;
    if n_mels == 0 {
        return Err(DspError::Filterbank("n_mels must be at least 1".into()));
    }
    if f_max > nyquist {
        return Err(DspError::Filterbank(format!("f_max {f_max} Hz exceeds Nyquist {nyquist} Hz")));
    }
    if !(f_min >= 0.0 && f_min < f_max) {
        return Err(DspError::Filterbank(format!("invalid band [{f_min}, {f_max}] Hz")));
    }
    let n_bins = n_fft / 2 + 1;
    let (lo, hi) = (hz_to_mel(f_min), hz_to_mel(f_max));
    let edges: Vec<f64> = (0..n_mels + 2)
        .map(|i| mel_to_hz(lo + (hi - lo) * i as f64 / (n_mels + 1) as f64))
        .collect();
    let bin_hz: Vec<f64> = (0..n_bins).map(|b| b as f64 * sample_rate as f64 / n_fft as f64).collect();
    let mut weights = vec![0.0; n_mels * n_bins];
    for m in 0..n_mels {
        let (left, center, right) = (edges[m], edges[m + 1], edges[m + 2]);
        for (b, &f) in bin_hz.iter().enumerate() {
            let rise = (f - left) / (center - left);
            let fall = (right - f) / (right - center);
            weights[m * n_bins + b] = rise.min(fall).max(0.0);
        }
    }
    Ok(MelFilterbank {
        n_mels,
        n_bins,
        weights,
        centers_hz: edges[1..=n_mels].to_vec(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn mel_of_nyquist() {
        let expected = 2595.0 * (1.0f64 + 8000.0 / 700.0).log10();
        assert!((hz_to_mel(8000.0) - expected).abs() < 1e-12);
        assert!((hz_to_mel(8000.0) - 2840.03).abs() < 0.01);
        assert!((mel_to_hz(hz_to_mel(1234.5)) - 1234.5).abs() < 1e-9);
    }

    #[test]
    fn filters_are_nonnegative_with_increasing_peaks() {
        let fb = mel_filterbank(64, 512, 16_000, 0.0, 8000.0).unwrap();
        assert_eq!(fb.weights.len(), 64 * 257);
        assert!(fb.weights.iter().all(|&w| w >= 0.0));
        let mut last_peak = None;
        for m in 0..64 {
            let row = fb.row(m);
            assert!(row.iter().any(|&w| w > 0.0), "filter {m} is empty");
            let peak = row
                .iter()
                .enumerate()
                .max_by(|a, b| a.1.total_cmp(b.1))
                .map(|(i, _)| i)
                .unwrap();
            if let Some(prev) = last_peak {
                assert!(peak > prev, "filter {m}: peak {peak} not after {prev}");
            }
            last_peak = Some(peak);
        }
        assert!(fb.centers_hz.windows(2).all(|w| w[0] < w[1]));
    }

    #[test]
    fn all_ones_spectrum_gives_row_sums() {
        let fb = mel_filterbank(64, 512, 16_000, 0.0, 8000.0).unwrap();
        let ones = Spectrogram {
            bins: 257,
            frames: 2,
            data: vec![1.0; 514],
        };
        let out = fb.apply(&ones).unwrap();
        for m in 0..64 {
            let s: f64 = fb.row(m).iter().sum();
            assert!((out.at(m, 0) - s).abs() < 1e-12);
            assert!((out.at(m, 1) - s).abs() < 1e-12);
        }
    }

    #[test]
    fn rejects_band_above_nyquist() {
        assert!(mel_filterbank(64, 512, 16_000, 0.0, 8001.0).is_err());
        assert!(mel_filterbank(0, 512, 16_000, 0.0, 8000.0).is_err());
    }
}
