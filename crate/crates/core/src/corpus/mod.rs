//! Corpus manifests, label spaces, arousal/valence mapping, balanced
//! subsampling, batch assembly and synthetic test corpora.

mod av;
mod batch;
mod features;
mod subsample;
mod synth;

pub use av::{AvMapping, AvTarget, Arousal, Valence};
pub use batch::{make_batches, Batch};
pub use features::{compute_features, extract_features, feature_cache_base, load_features};
pub use subsample::{balanced_subsample, balanced_subsample_indices};
pub use synth::{generate_synthetic_corpus, SynthConfig, SYNTH_LABELS};

use std::collections::{BTreeMap, BTreeSet, HashSet};
use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::dsp::DspError;

#[derive(Debug, Error)]
pub enum CorpusError {
    #[error("{path}: {message}")]
    Io { path: String, message: String },
    #[error("{path} line {line}: {message}")]
    Row { path: String, line: usize, message: String },
    #[error("{path}: audio path {audio:?} listed twice")]
    DuplicatePath { path: String, audio: String },
    #[error("{path}: label {label:?} is not in the declared label space")]
    UndeclaredLabel { path: String, label: String },
    #[error("{0}: empty label space")]
    EmptyLabelSpace(String),
    #[error("speaker {speaker:?} appears in both {a} and {b}")]
    SpeakerOverlap { speaker: String, a: Partition, b: Partition },
    #[error("label {0:?} has no arousal/valence mapping (add it to the alias file)")]
    UnmappedLabel(String),
    #[error("missing cached features for {audio} (expected {cache}); run feature extraction first")]
    MissingFeature { audio: String, cache: String },
    #[error("corpus {corpus}: {partition} partition is empty")]
    EmptyPartition { corpus: String, partition: Partition },
    #[error("invalid request: {0}")]
    Invalid(String),
    #[error(transparent)]
    Dsp(#[from] DspError),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Partition {
    Train,
    Dev,
    Test,
}

impl Partition {
    pub const ALL: [Partition; 3] = [Partition::Train, Partition::Dev, Partition::Test];

    pub fn as_str(self) -> &'static str {
        match self {
            Partition::Train => "train",
            Partition::Dev => "dev",
            Partition::Test => "test",
        }
    }
}

impl fmt::Display for Partition {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Partition {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Partition::ALL
            .into_iter()
            .find(|p| p.as_str() == s)
            .ok_or_else(|| format!("unknown partition tag {s:?} (expected train, dev or test)"))
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct SampleRecord {
    /// Path as written in the manifest.
    pub audio_path: String,
    pub label: String,
    pub speaker: Option<String>,
    pub partition: Partition,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct CorpusManifest {
    pub corpus_id: String,
    /// Directory that relative audio paths are resolved against.
    pub root: PathBuf,
    pub samples: Vec<SampleRecord>,
    /// Sorted, unique label names; a label's class index is its position.
    pub label_space: Vec<String>,
}

#[derive(Deserialize)]
struct Row {
    corpus_id: String,
    audio_path: String,
    label: String,
    #[serde(default)]
    speaker: String,
    partition: String,
}

impl CorpusManifest {
    /// Validates samples and derives the label space from them unless one is
    /// declared.
    pub fn new(
        corpus_id: impl Into<String>,
        root: impl Into<PathBuf>,
        samples: Vec<SampleRecord>,
        declared_labels: Option<&[String]>,
    ) -> Result<Self, CorpusError> {
        let corpus_id = corpus_id.into();
        let label_space: Vec<String> = match declared_labels {
            Some(d) => d.iter().cloned().collect::<BTreeSet<_>>().into_iter().collect(),
            None => samples.iter().map(|s| s.label.clone()).collect::<BTreeSet<_>>().into_iter().collect(),
        };
        if label_space.is_empty() {
            return Err(CorpusError::EmptyLabelSpace(corpus_id));
        }
        let mut seen = HashSet::new();
        for s in &samples {
            if !seen.insert(s.audio_path.as_str()) {
                return Err(CorpusError::DuplicatePath {
                    path: corpus_id.clone(),
                    audio: s.audio_path.clone(),
                });
            }
            if label_space.binary_search(&s.label).is_err() {
                return Err(CorpusError::UndeclaredLabel {
                    path: corpus_id.clone(),
                    label: s.label.clone(),
                });
            }
        }
        let mut owner: BTreeMap<&str, Partition> = BTreeMap::new();
        for s in &samples {
            if let Some(sp) = s.speaker.as_deref() {
                match owner.get(sp) {
                    Some(&p) if p != s.partition => {
                        let (a, b) = if p < s.partition { (p, s.partition) } else { (s.partition, p) };
                        return Err(CorpusError::SpeakerOverlap {
                            speaker: sp.to_string(),
                            a,
                            b,
                        });
                    }
                    _ => {
                        owner.insert(sp, s.partition);
                    }
                }
            }
        }
        Ok(Self {
            corpus_id,
            root: root.into(),
            samples,
            label_space,
        })
    }

    pub fn n_classes(&self) -> usize {
        self.label_space.len()
    }

    pub fn class_of(&self, label: &str) -> Option<usize> {
        self.label_space.binary_search_by(|l| l.as_str().cmp(label)).ok()
    }

    /// Indices (into `samples`) of one partition, in manifest order.
    pub fn partition_indices(&self, partition: Partition) -> Vec<usize> {
        (0..self.samples.len())
            .filter(|&i| self.samples[i].partition == partition)
            .collect()
    }

    pub fn resolve(&self, sample: &SampleRecord) -> PathBuf {
        let p = Path::new(&sample.audio_path);
        if p.is_absolute() {
            p.to_path_buf()
        } else {
            self.root.join(p)
        }
    }

    pub fn speakers(&self) -> BTreeSet<&str> {
        self.samples.iter().filter_map(|s| s.speaker.as_deref()).collect()
    }

    /// Writes the manifest CSV (`corpus_id,audio_path,label,speaker,partition`).
    pub fn write(&self, path: &Path) -> Result<(), CorpusError> {
        let io = |e: &dyn fmt::Display| CorpusError::Io {
            path: path.display().to_string(),
            message: e.to_string(),
        };
        let mut w = csv::Writer::from_path(path).map_err(|e| io(&e))?;
        w.write_record(["corpus_id", "audio_path", "label", "speaker", "partition"])
            .map_err(|e| io(&e))?;
        for s in &self.samples {
            w.write_record([
                self.corpus_id.as_str(),
                &s.audio_path,
                &s.label,
                s.speaker.as_deref().unwrap_or(""),
                s.partition.as_str(),
            ])
            .map_err(|e| io(&e))?;
        }
        w.flush().map_err(|e| io(&e))
    }
}

/// Reads and validates a manifest; relative audio paths resolve against the
/// manifest's directory.
pub fn load_manifest(path: &Path) -> Result<CorpusManifest, CorpusError> {
    load_manifest_with_labels(path, None)
}

/// Like [`load_manifest`], but every label must belong to `declared`.
pub fn load_manifest_with_labels(path: &Path, declared: Option<&[String]>) -> Result<CorpusManifest, CorpusError> {
    let shown = path.display().to_string();
    let mut reader = csv::ReaderBuilder::new()
        .trim(csv::Trim::All)
        .from_path(path)
        .map_err(|e| CorpusError::Io {
            path: shown.clone(),
            message: e.to_string(),
        })?;
    let mut corpus_id: Option<String> = None;
    let mut samples = Vec::new();
    for (i, row) in reader.deserialize::<Row>().enumerate() {
        let line = i + 2;
        let row_err = |message: String| CorpusError::Row {
            path: shown.clone(),
            line,
            message,
        };
        let row = row.map_err(|e| row_err(e.to_string()))?;
        let partition = row.partition.parse::<Partition>().map_err(row_err)?;
        match &corpus_id {
            None => corpus_id = Some(row.corpus_id.clone()),
            Some(c) if *c != row.corpus_id => {
                return Err(row_err(format!("corpus_id {:?} differs from {c:?}", row.corpus_id)));
            }
            _ => {}
        }
        if row.audio_path.is_empty() || row.label.is_empty() {
            return Err(row_err("audio_path and label must be non-empty".into()));
        }
        samples.push(SampleRecord {
            audio_path: row.audio_path,
            label: row.label,
            speaker: (!row.speaker.is_empty()).then_some(row.speaker),
            partition,
        });
    }
    let corpus_id = corpus_id.ok_or_else(|| CorpusError::EmptyLabelSpace(shown.clone()))?;
    let root = path.parent().map(Path::to_path_buf).unwrap_or_default();
    CorpusManifest::new(corpus_id, root, samples, declared).map_err(|e| match e {
        CorpusError::DuplicatePath { audio, .. } => CorpusError::DuplicatePath { path: shown.clone(), audio },
        CorpusError::UndeclaredLabel { label, .. } => CorpusError::UndeclaredLabel { path: shown.clone(), label },
        CorpusError::EmptyLabelSpace(_) => CorpusError::EmptyLabelSpace(shown.clone()),
        other => other,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::fs;

    fn write(dir: &Path, body: &str) -> PathBuf {
        let p = dir.join("manifest.csv");
        fs::write(&p, format!("corpus_id,audio_path,label,speaker,partition\n{body}")).unwrap();
        p
    }

    #[test]
    fn emodb_shaped_manifest_is_accepted() {
        let dir = tempfile::tempdir().unwrap();
        let labels = ["anger", "boredom", "disgust", "fear", "happiness", "neutral", "sadness"];
        let mut body = String::new();
        for i in 0..494 {
            let speaker = i % 10;
            let partition = match speaker {
                0..=5 => "train",
                6 | 7 => "dev",
                _ => "test",
            };
            body += &format!("emodb,wav/{i:03}.wav,{},sp{speaker},{partition}\n", labels[i % 7]);
        }
        let m = load_manifest(&write(dir.path(), &body)).unwrap();
        assert_eq!(m.samples.len(), 494);
        assert_eq!(m.n_classes(), 7);
        assert_eq!(m.speakers().len(), 10);
        assert_eq!(m.class_of("sadness"), Some(6));
        assert_eq!(m.resolve(&m.samples[0]), dir.path().join("wav/000.wav"));
    }

    #[test]
    fn speaker_overlap_is_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let p = write(dir.path(), "c,a.wav,joy,s1,train\nc,b.wav,joy,s1,test\n");
        assert!(matches!(load_manifest(&p), Err(CorpusError::SpeakerOverlap { .. })));
    }

    #[test]
    fn malformed_manifests_are_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let p = write(dir.path(), "c,a.wav,joy,,valid\n");
        assert!(matches!(load_manifest(&p), Err(CorpusError::Row { line: 2, .. })));
        let p = write(dir.path(), "c,a.wav,joy,,train\nc,a.wav,joy,,dev\n");
        assert!(matches!(load_manifest(&p), Err(CorpusError::DuplicatePath { .. })));
        let p = write(dir.path(), "");
        assert!(matches!(load_manifest(&p), Err(CorpusError::EmptyLabelSpace(_))));
        let p = write(dir.path(), "c,a.wav,joy,,train\n");
        let declared = vec!["anger".to_string()];
        assert!(matches!(
            load_manifest_with_labels(&p, Some(&declared)),
            Err(CorpusError::UndeclaredLabel { .. })
        ));
        assert!(matches!(
            load_manifest_with_labels(&p, Some(&[])),
            Err(CorpusError::EmptyLabelSpace(_))
        ));
    }

    #[test]
    fn manifest_write_round_trips() {
        let dir = tempfile::tempdir().unwrap();
        let p = write(dir.path(), "c,a.wav,joy,s1,train\nc,b.wav,anger,,dev\n");
        let m = load_manifest(&p).unwrap();
        let q = dir.path().join("copy.csv");
        m.write(&q).unwrap();
        assert_eq!(load_manifest(&q).unwrap(), m);
    }
}
