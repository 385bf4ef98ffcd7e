//! Unweighted average recall, Almost Stochastic Order tests over repeated
//! runs, Bonferroni adjustment and pairwise dominance matrices.

mod aso;
mod scores;

pub use aso::{aso, eps_w2, AsoConfig, AsoResult};
pub use scores::{
    append_scores, dominance_matrix, group_scores, read_scores, write_scores, DominanceMatrix, RunScoreSet, ScoreRecord,
};

use thiserror::Error;

#[derive(Debug, Error)]
pub enum StatsError {
    #[error("empty input")]
    Empty,
    #[error("{predictions} predictions for {labels} labels")]
    LengthMismatch { predictions: usize, labels: usize },
    #[error("class index {index} out of range for {n_classes} classes")]
    ClassOutOfRange { index: usize, n_classes: usize },
    #[error("need at least 2 scores per sample, got {0}")]
    TooFewScores(usize),
    #[error("score {0} outside [0, 1]")]
    ScoreRange(f64),
    #[error("no scores for model {model:?} on corpus {corpus:?}")]
    MissingPair { model: String, corpus: String },
    #[error("{path}: {message}")]
    Io { path: String, message: String },
    #[error("invalid argument: {0}")]
    Invalid(String),
}

/// Mean per-class recall over the classes that occur in `labels`.
pub fn uar(predictions: &[usize], labels: &[usize], n_classes: usize) -> Result<f64, StatsError> {
    if predictions.len() != labels.len() {
        return Err(StatsError::LengthMismatch {
            predictions: predictions.len(),
            labels: labels.len(),
        });
    }
    if labels.is_empty() {
        return Err(StatsError::Empty);
    }
    let mut hits = vec![0usize; n_classes];
    let mut support = vec![0usize; n_classes];
    for (&p, &l) in predictions.iter().zip(labels) {
        for index in [p, l] {
            if index >= n_classes {
                return Err(StatsError::ClassOutOfRange { index, n_classes });
            }
        }
        support[l] += 1;
        hits[l] += (p == l) as usize;
    }
    let present: Vec<f64> = hits
        .iter()
        .zip(&support)
        .filter(|(_, &s)| s > 0)
        .map(|(&h, &s)| h as f64 / s as f64)
        .collect();
    Ok(present.iter().sum::<f64>() / present.len() as f64)
}

/// `alpha / n_comparisons`.
pub fn bonferroni(alpha: f64, n_comparisons: usize) -> Result<f64, StatsError> {
    if n_comparisons == 0 {
        return Err(StatsError::Invalid("number of comparisons must be at least 1".into()));
    }
    Ok(alpha / n_comparisons as f64)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn uar_examples() {
        assert_eq!(uar(&[0, 1, 2], &[0, 1, 2], 3).unwrap(), 1.0);
        assert_eq!(uar(&[0, 1, 1, 1], &[0, 0, 1, 1], 2).unwrap(), 0.75);
        // class 2 never occurs in the labels
        assert_eq!(uar(&[0, 2], &[0, 1], 3).unwrap(), 0.5);
        assert!(matches!(uar(&[], &[], 2), Err(StatsError::Empty)));
        assert!(uar(&[3], &[0], 2).is_err());
    }

    #[test]
    fn bonferroni_factors() {
        assert!((bonferroni(0.05, 26).unwrap() - 0.001_923_076_9).abs() < 1e-9);
        assert!((bonferroni(0.05, 26 * 5 * 4 / 2).unwrap() - 0.000_192_307_69).abs() < 1e-10);
        assert_eq!(bonferroni(0.05, 1).unwrap(), 0.05);
        assert!(bonferroni(0.05, 0).is_err());
    }
}
