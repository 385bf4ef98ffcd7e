use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::DspError;

/// JSON sidecar written next to each cached feature matrix.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct FeatureSidecar {
    pub n_mels: usize,
    pub n_frames: usize,
    pub source_path: String,
    pub label: String,
}

fn paths(base: &Path) -> (PathBuf, PathBuf) {
    (base.with_extension("f32"), base.with_extension("json"))
}

fn cache_err(path: &Path, message: impl ToString) -> DspError {
    DspError::Cache {
        path: path.display().to_string(),
        message: message.to_string(),
    }
}

/// Writes `<base>.f32` (little-endian float32, row-major, `n_mels` rows)
/// and `<base>.json`.
pub fn write_feature_cache(base: &Path, mel: &[f32], sidecar: &FeatureSidecar) -> Result<(), DspError> {
    if mel.len() != sidecar.n_mels * sidecar.n_frames {
        return Err(cache_err(base, "matrix size does not match sidecar dimensions"));
    }
    let (bin, json) = paths(base);
    if let Some(parent) = bin.parent() {
        fs::create_dir_all(parent).map_err(|e| cache_err(parent, e))?;
    }
    let bytes: Vec<u8> = mel.iter().flat_map(|v| v.to_le_bytes()).collect();
    fs::write(&bin, bytes).map_err(|e| cache_err(&bin, e))?;
    let text = serde_json::to_string_pretty(sidecar).map_err(|e| cache_err(&json, e))?;
    fs::write(&json, text).map_err(|e| cache_err(&json, e))
}

pub fn read_feature_cache(base: &Path) -> Result<(Vec<f32>, FeatureSidecar), DspError> {
    let (bin, json) = paths(base);
    let text = fs::read_to_string(&json).map_err(|e| cache_err(&json, e))?;
    let sidecar: FeatureSidecar = serde_json::from_str(&text).map_err(|e| cache_err(&json, e))?;
    let bytes = fs::read(&bin).map_err(|e| cache_err(&bin, e))?;
    if bytes.len() != 4 * sidecar.n_mels * sidecar.n_frames {
        return Err(cache_err(
            &bin,
            format!(
                "expected {} bytes for {}x{}, found {}",
                4 * sidecar.n_mels * sidecar.n_frames,
                sidecar.n_mels,
                sidecar.n_frames,
                bytes.len()
            ),
        ));
    }
    let mel = bytes
        .chunks_exact(4)
        .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]))
        .collect();
    Ok((mel, sidecar))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn cache_round_trip_and_truncation() {
        let dir = tempfile::tempdir().unwrap();
        let base = dir.path().join("c/x");
        let sidecar = FeatureSidecar {
            n_mels: 2,
            n_frames: 3,
            source_path: "a.wav".into(),
            label: "joy".into(),
        };
        let mel = vec![1.0, -2.0, 3.5, 0.0, 1e-3, 7.0];
        write_feature_cache(&base, &mel, &sidecar).unwrap();
        let (m, s) = read_feature_cache(&base).unwrap();
        assert_eq!(m, mel);
        assert_eq!(s, sidecar);
        let bin = base.with_extension("f32");
        let bytes = fs::read(&bin).unwrap();
        fs::write(&bin, &bytes[..bytes.len() - 2]).unwrap();
        assert!(read_feature_cache(&base).is_err());
    }
}
