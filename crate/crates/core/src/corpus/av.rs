use std::collections::BTreeMap;
use std::fmt;
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use super::CorpusError;

const TABLE_AV: &str = include_str!("../../data/table_av.csv");

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Arousal {
    Low,
    High,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Valence {
    Negative,
    Neutral,
    Positive,
}

/// Which mapped label space an aggregated corpus uses.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum AvTarget {
    Arousal,
    Valence,
}

impl AvTarget {
    pub fn class_names(self) -> &'static [&'static str] {
        match self {
            AvTarget::Arousal => &["low", "high"],
            AvTarget::Valence => &["negative", "neutral", "positive"],
        }
    }

    pub fn n_classes(self) -> usize {
        self.class_names().len()
    }

    pub fn class_of(self, (a, v): (Arousal, Valence)) -> usize {
        match self {
            AvTarget::Arousal => a as usize,
            AvTarget::Valence => v as usize,
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            AvTarget::Arousal => "arousal",
            AvTarget::Valence => "valence",
        }
    }
}

impl fmt::Display for AvTarget {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Arousal {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "low" => Ok(Arousal::Low),
            "high" => Ok(Arousal::High),
            _ => Err(format!("unknown arousal level {s:?}")),
        }
    }
}

impl FromStr for Valence {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "negative" => Ok(Valence::Negative),
            "neutral" => Ok(Valence::Neutral),
            "positive" => Ok(Valence::Positive),
            _ => Err(format!("unknown valence level {s:?}")),
        }
    }
}

/// Category → (arousal, valence) table plus explicit aliases.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct AvMapping {
    table: BTreeMap<String, (Arousal, Valence)>,
    aliases: BTreeMap<String, String>,
}

impl Default for AvMapping {
    fn default() -> Self {
        Self::table_av()
    }
}

#[derive(Deserialize)]
struct TableRow {
    label: String,
    arousal: String,
    valence: String,
}

#[derive(Deserialize)]
struct AliasRow {
    label: String,
    canonical_table_av_label: String,
}

impl AvMapping {
    /// The built-in category table.
    pub fn table_av() -> Self {
        let mut table = BTreeMap::new();
        for row in csv::Reader::from_reader(TABLE_AV.as_bytes()).deserialize::<TableRow>() {
            let row = row.expect("bundled table is well formed");
            let a = row.arousal.parse().expect("bundled arousal level");
            let v = row.valence.parse().expect("bundled valence level");
            table.insert(row.label, (a, v));
        }
        Self {
            table,
            aliases: BTreeMap::new(),
        }
    }

    /// Adds aliases from a `label,canonical_table_av_label` CSV. Each
    /// canonical label must exist in the table.
    pub fn with_alias_file(mut self, path: &Path) -> Result<Self, CorpusError> {
        let shown = path.display().to_string();
        let mut reader = csv::ReaderBuilder::new()
            .trim(csv::Trim::All)
            .from_path(path)
            .map_err(|e| CorpusError::Io {
                path: shown.clone(),
                message: e.to_string(),
            })?;
        for (i, row) in reader.deserialize::<AliasRow>().enumerate() {
            let row = row.map_err(|e| CorpusError::Row {
                path: shown.clone(),
                line: i + 2,
                message: e.to_string(),
            })?;
            self = self.with_alias(&row.label, &row.canonical_table_av_label).map_err(|e| CorpusError::Row {
                path: shown.clone(),
                line: i + 2,
                message: e.to_string(),
            })?;
        }
        Ok(self)
    }

    pub fn with_alias(mut self, label: &str, canonical: &str) -> Result<Self, CorpusError> {
        if !self.table.contains_key(canonical) {
            return Err(CorpusError::UnmappedLabel(canonical.to_string()));
        }
        self.aliases.insert(label.to_string(), canonical.to_string());
        Ok(self)
    }

    /// Table labels in sorted order.
    pub fn labels(&self) -> impl Iterator<Item = &str> {
        self.table.keys().map(String::as_str)
    }

    pub fn len(&self) -> usize {
        self.table.len()
    }

    pub fn is_empty(&self) -> bool {
        self.table.is_empty()
    }

    pub fn map_to_av(&self, label: &str) -> Result<(Arousal, Valence), CorpusError> {
        let canonical = self.aliases.get(label).map_or(label, String::as_str);
        self.table
            .get(canonical)
            .copied()
            .ok_or_else(|| CorpusError::UnmappedLabel(label.to_string()))
    }
}
