use std::collections::{BTreeMap, BTreeSet};
use std::fmt::Write as _;
use std::fs;
use std::io::Write as _;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{aso, bonferroni, AsoConfig, StatsError};

/// One line of a score file.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScoreRecord {
    pub model_id: String,
    pub corpus_id: String,
    pub seed: u64,
    /// Absent for records written by a test-only evaluation.
    pub dev_uar: Option<f64>,
    pub test_uar: f64,
}

/// Test UARs of one model on one corpus across seeds.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunScoreSet {
    pub model_id: String,
    pub corpus_id: String,
    pub scores: Vec<f64>,
    pub seeds: Vec<u64>,
}

impl RunScoreSet {
    pub fn validate(&self) -> Result<(), StatsError> {
        if self.scores.len() != self.seeds.len() {
            return Err(StatsError::Invalid(format!(
                "{} scores for {} seeds",
                self.scores.len(),
                self.seeds.len()
            )));
        }
        if self.scores.len() < 2 {
            return Err(StatsError::TooFewScores(self.scores.len()));
        }
        if let Some(&s) = self.scores.iter().find(|s| !(0.0..=1.0).contains(*s)) {
            return Err(StatsError::ScoreRange(s));
        }
        Ok(())
    }

    pub fn mean(&self) -> f64 {
        self.scores.iter().sum::<f64>() / self.scores.len() as f64
    }
}

fn io_err(path: &Path, e: impl ToString) -> StatsError {
    StatsError::Io {
        path: path.display().to_string(),
        message: e.to_string(),
    }
}

/// Writes records as JSON Lines, replacing the file.
pub fn write_scores(path: &Path, records: &[ScoreRecord]) -> Result<(), StatsError> {
    let mut out = Vec::new();
    for r in records {
        serde_json::to_writer(&mut out, r).map_err(|e| io_err(path, e))?;
        out.push(b'\n');
    }
    let mut f = fs::File::create(path).map_err(|e| io_err(path, e))?;
    f.write_all(&out).map_err(|e| io_err(path, e))
}

/// Appends records to a score file, creating it if needed.
pub fn append_scores(path: &Path, records: &[ScoreRecord]) -> Result<(), StatsError> {
    let mut out = Vec::new();
    for r in records {
        serde_json::to_writer(&mut out, r).map_err(|e| io_err(path, e))?;
        out.push(b'\n');
    }
    let mut f = fs::OpenOptions::new()
        .create(true)
        .append(true)
        .open(path)
        .map_err(|e| io_err(path, e))?;
    f.write_all(&out).map_err(|e| io_err(path, e))
}

pub fn read_scores(path: &Path) -> Result<Vec<ScoreRecord>, StatsError> {
    let text = fs::read_to_string(path).map_err(|e| io_err(path, e))?;
    text.lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty())
        .map(|(i, l)| serde_json::from_str(l).map_err(|e| io_err(path, format!("line {}: {e}", i + 1))))
        .collect()
}

/// Groups records by `(model_id, corpus_id)`, ordering seeds ascending.
pub fn group_scores(records: &[ScoreRecord]) -> BTreeMap<(String, String), RunScoreSet> {
    let mut by_pair: BTreeMap<(String, String), BTreeMap<u64, f64>> = BTreeMap::new();
    for r in records {
        by_pair
            .entry((r.model_id.clone(), r.corpus_id.clone()))
            .or_default()
            .insert(r.seed, r.test_uar);
    }
    by_pair
        .into_iter()
        .map(|((model, corpus), runs)| {
            let set = RunScoreSet {
                model_id: model.clone(),
                corpus_id: corpus.clone(),
                seeds: runs.keys().copied().collect(),
                scores: runs.values().copied().collect(),
            };
            ((model, corpus), set)
        })
        .collect()
}

/// Mean `eps_min` of row model over column model across corpora.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DominanceMatrix {
    pub models: Vec<String>,
    pub corpora: Vec<String>,
    pub alpha_used: f64,
    pub cells: Vec<Vec<f64>>,
}

impl DominanceMatrix {
    pub fn to_csv(&self) -> String {
        let mut s = String::from("model");
        for m in &self.models {
            s.push(',');
            s.push_str(m);
        }
        s.push('\n');
        for (m, row) in self.models.iter().zip(&self.cells) {
            s.push_str(m);
            for v in row {
                write!(s, ",{v:.6}").expect("write to string");
            }
            s.push('\n');
        }
        s
    }
}

/// Pairwise ASO over every model pair on every corpus, with `alpha`
/// Bonferroni-divided by `n_comparisons`. The diagonal is 0.5.
pub fn dominance_matrix(
    sets: &BTreeMap<(String, String), RunScoreSet>,
    alpha: f64,
    n_comparisons: usize,
    config: &AsoConfig,
) -> Result<DominanceMatrix, StatsError> {
    let models: Vec<String> = sets.keys().map(|(m, _)| m.clone()).collect::<BTreeSet<_>>().into_iter().collect();
    let corpora: Vec<String> = sets.keys().map(|(_, c)| c.clone()).collect::<BTreeSet<_>>().into_iter().collect();
    if models.is_empty() {
        return Err(StatsError::Empty);
    }
    let get = |m: &String, c: &String| {
        sets.get(&(m.clone(), c.clone())).ok_or_else(|| StatsError::MissingPair {
            model: m.clone(),
            corpus: c.clone(),
        })
    };
    for m in &models {
        for c in &corpora {
            get(m, c)?.validate()?;
        }
    }
    let alpha_used = bonferroni(alpha, n_comparisons)?;
    let cfg = AsoConfig {
        alpha: alpha_used,
        ..*config
    };
    let mut cells = vec![vec![0.5; models.len()]; models.len()];
    for (i, mi) in models.iter().enumerate() {
        for (j, mj) in models.iter().enumerate() {
            if i == j {
                continue;
            }
            let mut total = 0.0;
            for c in &corpora {
                total += aso(&get(mi, c)?.scores, &get(mj, c)?.scores, &cfg)?.eps_min;
            }
            cells[i][j] = total / corpora.len() as f64;
        }
    }
    Ok(DominanceMatrix {
        models,
        corpora,
        alpha_used,
        cells,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn rec(model: &str, corpus: &str, seed: u64, uar: f64) -> ScoreRecord {
        ScoreRecord {
            model_id: model.into(),
            corpus_id: corpus.into(),
            seed,
            dev_uar: Some(uar),
            test_uar: uar,
        }
    }

    #[test]
    fn score_file_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("scores.jsonl");
        let recs = vec![rec("a", "x", 0, 0.5), rec("a", "x", 1, 0.625)];
        write_scores(&p, &recs).unwrap();
        assert_eq!(read_scores(&p).unwrap(), recs);
    }

    #[test]
    fn single_corpus_matrix_equals_aso() {
        let recs: Vec<_> = (0..5)
            .flat_map(|s| {
                [
                    rec("good", "x", s, 0.8 + 0.01 * s as f64),
                    rec("bad", "x", s, 0.6 + 0.02 * s as f64),
                ]
            })
            .collect();
        let sets = group_scores(&recs);
        let cfg = AsoConfig {
            n_bootstrap: 200,
            ..AsoConfig::default()
        };
        let m = dominance_matrix(&sets, 0.05, 1, &cfg).unwrap();
        assert_eq!(m.models, vec!["bad", "good"]);
        assert_eq!(m.cells[0][0], 0.5);
        assert_eq!(m.cells[1][1], 0.5);
        let direct = aso(&sets[&("good".into(), "x".into())].scores, &sets[&("bad".into(), "x".into())].scores, &cfg)
            .unwrap()
            .eps_min;
        assert_eq!(m.cells[1][0], direct);
        assert!(m.to_csv().starts_with("model,bad,good\nbad,0.500000,"));
    }

    #[test]
    fn missing_pair_is_reported() {
        let recs = vec![
            rec("a", "x", 0, 0.5),
            rec("a", "x", 1, 0.6),
            rec("b", "y", 0, 0.5),
            rec("b", "y", 1, 0.6),
        ];
        assert!(matches!(
            dominance_matrix(&group_scores(&recs), 0.05, 1, &AsoConfig::default()),
            Err(StatsError::MissingPair { .. })
        ));
    }
}
