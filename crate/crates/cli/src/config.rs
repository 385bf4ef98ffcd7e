use std::path::{Path, PathBuf};

use emoadapt_core::model::ArchitectureSpec;
use emoadapt_core::stats::AsoConfig;
use emoadapt_core::trainer::TrainConfig;
use serde::{Deserialize, Serialize};

use crate::error::CliError;

pub const CACHE_ENV: &str = "EMOADAPT_CACHE";

/// Contents of the `--config` TOML file. Every key is optional; unknown
/// keys are rejected.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RunConfigFile {
    pub train: TrainConfig,
    pub model: ArchitectureSpec,
    pub paths: PathsConfig,
    pub stats: StatsConfig,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PathsConfig {
    /// Feature cache; `EMOADAPT_CACHE` and `--cache` take precedence.
    pub cache_root: Option<PathBuf>,
    /// Checkpoints and run records go under `<out_dir>/<model_id>/`.
    pub out_dir: PathBuf,
    /// JSON Lines score file that training and evaluation append to.
    pub scores: PathBuf,
}

impl Default for PathsConfig {
    fn default() -> Self {
        Self {
            cache_root: None,
            out_dir: PathBuf::from("runs"),
            scores: PathBuf::from("runs/scores.jsonl"),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct StatsConfig {
    pub alpha: f64,
    pub n_bootstrap: usize,
    pub grid_points: usize,
    pub seed: u64,
}

impl Default for StatsConfig {
    fn default() -> Self {
        let aso = AsoConfig::default();
        Self {
            alpha: aso.alpha,
            n_bootstrap: aso.n_bootstrap,
            grid_points: aso.grid_points,
            seed: aso.seed,
        }
    }
}

impl StatsConfig {
    pub fn aso(&self) -> AsoConfig {
        AsoConfig {
            alpha: self.alpha,
            n_bootstrap: self.n_bootstrap,
            grid_points: self.grid_points,
            seed: self.seed,
        }
    }
}

impl RunConfigFile {
    pub fn load(path: Option<&Path>) -> Result<Self, CliError> {
        let Some(path) = path else {
            return Ok(Self::default());
        };
        let text = std::fs::read_to_string(path).map_err(|e| CliError::Usage(format!("{}: {e}", path.display())))?;
        let cfg: Self = toml::from_str(&text).map_err(|e| CliError::Usage(format!("{}: {e}", path.display())))?;
        cfg.train.validate()?;
        cfg.model.validate()?;
        Ok(cfg)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serialises")
    }

    /// `--cache`, then `EMOADAPT_CACHE`, then `paths.cache_root`.
    pub fn cache_root(&self, flag: Option<&Path>) -> Result<PathBuf, CliError> {
        if let Some(p) = flag {
            return Ok(p.to_path_buf());
        }
        if let Some(p) = std::env::var_os(CACHE_ENV).filter(|v| !v.is_empty()) {
            return Ok(PathBuf::from(p));
        }
        self.paths
            .cache_root
            .clone()
            .ok_or_else(|| CliError::Usage(format!("no feature cache given (use --cache, {CACHE_ENV} or paths.cache_root)")))
    }
}

/// Parses `3`, `0..9` (inclusive) or `1,4,7`.
pub fn parse_seeds(s: &str) -> Result<Vec<u64>, String> {
    let bad = || format!("invalid seed list {s:?}; expected N, A..B or A,B,C");
    if let Some((a, b)) = s.split_once("..") {
        let a: u64 = a.trim().parse().map_err(|_| bad())?;
        let b: u64 = b.trim().parse().map_err(|_| bad())?;
        if b < a {
            return Err(bad());
        }
        return Ok((a..=b).collect());
    }
    s.split(',').map(|p| p.trim().parse().map_err(|_| bad())).collect()
}
