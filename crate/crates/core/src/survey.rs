//! Questionnaire data model and ingestion.
//!
//! A dataset is a flat list of rows, one per question–answer turn, grouped by
//! `record_id`. Skip logic is represented by an empty answer: a question the
//! respondent was never asked carries no answer and is dropped by
//! [`SurveyRecord::effective_pairs`].

use std::collections::{BTreeMap, HashMap, HashSet};
use std::fmt;
use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum SurveyError {
    #[error("io error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("line {line}: {message}")]
    Parse { line: usize, message: String },
    #[error("record {record_id}: {message}")]
    Validation { record_id: String, message: String },
    #[error("unknown label name {0:?}")]
    UnknownLabel(String),
    #[error("label ordinal {0} outside 1..=5")]
    OrdinalOutOfRange(i64),
    #[error("dataset is empty")]
    Empty,
}

/// Five-level ordinal mental state, from very unhappy (1) to very happy (5).
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(try_from = "u8", into = "u8")]
pub enum MentalState {
    VeryUnhappy = 1,
    Unhappy = 2,
    Neutral = 3,
    Happy = 4,
    VeryHappy = 5,
}

impl MentalState {
    pub const ALL: [MentalState; 5] = [
        MentalState::VeryUnhappy,
        MentalState::Unhappy,
        MentalState::Neutral,
        MentalState::Happy,
        MentalState::VeryHappy,
    ];

    pub fn ordinal(self) -> u8 {
        self as u8
    }

    pub fn from_ordinal(ordinal: i64) -> Result<Self, SurveyError> {
        match ordinal {
            1 => Ok(Self::VeryUnhappy),
            2 => Ok(Self::Unhappy),
            3 => Ok(Self::Neutral),
            4 => Ok(Self::Happy),
            5 => Ok(Self::VeryHappy),
            other => Err(SurveyError::OrdinalOutOfRange(other)),
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Self::VeryUnhappy => "very unhappy",
            Self::Unhappy => "unhappy",
            Self::Neutral => "neutral",
            Self::Happy => "happy",
            Self::VeryHappy => "very happy",
        }
    }
}

impl fmt::Display for MentalState {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for MentalState {
    type Err = SurveyError;

    /// Accepts the canonical names case-insensitively, with `_` or `-` in
    /// place of the space.
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let norm = s.trim().to_lowercase().replace(['_', '-'], " ");
        Self::ALL
            .into_iter()
            .find(|l| l.name() == norm)
            .ok_or_else(|| SurveyError::UnknownLabel(s.to_string()))
    }
}

impl TryFrom<u8> for MentalState {
    type Error = SurveyError;
    fn try_from(v: u8) -> Result<Self, Self::Error> {
        Self::from_ordinal(v as i64)
    }
}

impl From<MentalState> for u8 {
    fn from(l: MentalState) -> u8 {
        l.ordinal()
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct QaPair {
    pub category: String,
    pub question: String,
    /// `None` when skip logic suppressed the question.
    pub answer: Option<String>,
    pub turn_index: usize,
}

impl QaPair {
    pub fn new(
        turn_index: usize,
        category: impl Into<String>,
        question: impl Into<String>,
        answer: Option<&str>,
    ) -> Self {
        Self {
            category: category.into(),
            question: question.into(),
            answer: answer.map(str::to_string),
            turn_index,
        }
    }

    pub fn is_answered(&self) -> bool {
        self.answer.is_some()
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SurveyRecord {
    pub record_id: String,
    pub pairs: Vec<QaPair>,
    pub label: MentalState,
}

impl SurveyRecord {
    /// Builds a record and checks its invariants. Pairs are sorted by turn.
    pub fn new(
        record_id: impl Into<String>,
        mut pairs: Vec<QaPair>,
        label: MentalState,
    ) -> Result<Self, SurveyError> {
        pairs.sort_by_key(|p| p.turn_index);
        let record = Self {
            record_id: record_id.into(),
            pairs,
            label,
        };
        record.validate()?;
        Ok(record)
    }

    pub fn validate(&self) -> Result<(), SurveyError> {
        let fail = |message: String| SurveyError::Validation {
            record_id: self.record_id.clone(),
            message,
        };
        let mut seen = HashSet::new();
        for p in &self.pairs {
            if p.category.trim().is_empty() {
                return Err(fail(format!("turn {} has an empty category", p.turn_index)));
            }
            if p.question.trim().is_empty() {
                return Err(fail(format!("turn {} has an empty question", p.turn_index)));
            }
            if !seen.insert(p.turn_index) {
                return Err(fail(format!("duplicate turn_index {}", p.turn_index)));
            }
        }
        if !self.pairs.iter().any(QaPair::is_answered) {
            return Err(fail("no answered questions".into()));
        }
        Ok(())
    }

    /// The answered pairs, in turn order.
    pub fn effective_pairs(&self) -> Vec<&QaPair> {
        self.pairs.iter().filter(|p| p.is_answered()).collect()
    }

    /// Distinct categories of the answered pairs, in first-appearance order.
    pub fn categories(&self) -> Vec<&str> {
        let mut out: Vec<&str> = Vec::new();
        for p in self.effective_pairs() {
            if !out.contains(&p.category.as_str()) {
                out.push(&p.category);
            }
        }
        out
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Format {
    Jsonl,
    Csv,
}

impl Format {
    pub fn from_path(path: &Path) -> Option<Self> {
        match path.extension()?.to_str()? {
            "jsonl" | "json" => Some(Self::Jsonl),
            "csv" => Some(Self::Csv),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub name: String,
    pub records: Vec<SurveyRecord>,
    pub turns_per_record: usize,
}

/// Interchange row. `label` is accepted as an alias of `label_name`.
#[derive(Debug, Serialize, Deserialize)]
struct Row {
    record_id: String,
    turn_index: usize,
    category: String,
    question: String,
    #[serde(default)]
    answer: Option<String>,
    #[serde(alias = "label")]
    label_name: String,
}

impl Dataset {
    pub fn new(name: impl Into<String>, records: Vec<SurveyRecord>) -> Result<Self, SurveyError> {
        for r in &records {
            r.validate()?;
        }
        let turns_per_record = records.iter().map(|r| r.pairs.len()).max().unwrap_or(0);
        Ok(Self {
            name: name.into(),
            records,
            turns_per_record,
        })
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn concat(&self, other: &Dataset) -> Dataset {
        let mut records = self.records.clone();
        records.extend(other.records.iter().cloned());
        Dataset {
            name: format!("{}+{}", self.name, other.name),
            records,
            turns_per_record: self.turns_per_record.max(other.turns_per_record),
        }
    }

    pub fn get(&self, record_id: &str) -> Option<&SurveyRecord> {
        self.records.iter().find(|r| r.record_id == record_id)
    }

    pub fn save(&self, path: &Path, format: Format) -> Result<(), SurveyError> {
        let io = |source| SurveyError::Io {
            path: path.display().to_string(),
            source,
        };
        let file = File::create(path).map_err(io)?;
        let rows = self.records.iter().flat_map(|r| {
            r.pairs.iter().map(move |p| Row {
                record_id: r.record_id.clone(),
                turn_index: p.turn_index,
                category: p.category.clone(),
                question: p.question.clone(),
                answer: Some(p.answer.clone().unwrap_or_default()),
                label_name: r.label.name().to_string(),
            })
        });
        match format {
            Format::Jsonl => {
                let mut w = BufWriter::new(file);
                for row in rows {
                    let line = serde_json::to_string(&row).expect("row serializes");
                    writeln!(w, "{line}").map_err(io)?;
                }
                w.flush().map_err(io)?;
            }
            Format::Csv => {
                let mut w = csv::Writer::from_writer(file);
                for row in rows {
                    w.serialize(row).map_err(|e| SurveyError::Parse {
                        line: 0,
                        message: e.to_string(),
                    })?;
                }
                w.flush().map_err(io)?;
            }
        }
        Ok(())
    }
}

/// Reads a dataset file. Empty answers become skipped questions.
pub fn load_dataset(path: &Path, format: Format) -> Result<Dataset, SurveyError> {
    let io = |source| SurveyError::Io {
        path: path.display().to_string(),
        source,
    };
    let file = File::open(path).map_err(io)?;
    let mut rows = Vec::new();
    match format {
        Format::Jsonl => {
            for (i, line) in BufReader::new(file).lines().enumerate() {
                let line = line.map_err(io)?;
                if line.trim().is_empty() {
                    continue;
                }
                let row: Row = serde_json::from_str(&line).map_err(|e| SurveyError::Parse {
                    line: i + 1,
                    message: e.to_string(),
                })?;
                rows.push((i + 1, row));
            }
        }
        Format::Csv => {
            let mut reader = csv::Reader::from_reader(file);
            for result in reader.deserialize::<Row>() {
                let row = result.map_err(|e| SurveyError::Parse {
                    line: e.position().map(|p| p.line() as usize).unwrap_or(0),
                    message: e.to_string(),
                })?;
                // header occupies line 1
                let line = rows.len() + 2;
                rows.push((line, row));
            }
        }
    }
    let name = path
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_default();
    assemble(name, rows)
}

fn assemble(name: String, rows: Vec<(usize, Row)>) -> Result<Dataset, SurveyError> {
    let mut order: Vec<String> = Vec::new();
    let mut grouped: HashMap<String, (MentalState, Vec<QaPair>)> = HashMap::new();
    for (line, row) in rows {
        let label: MentalState = row.label_name.parse()?;
        let answer = row.answer.filter(|a| !a.trim().is_empty());
        let pair = QaPair {
            category: row.category,
            question: row.question,
            answer,
            turn_index: row.turn_index,
        };
        match grouped.get_mut(&row.record_id) {
            Some((existing, pairs)) => {
                if *existing != label {
                    return Err(SurveyError::Parse {
                        line,
                        message: format!(
                            "record {} has conflicting labels {existing} and {label}",
                            row.record_id
                        ),
                    });
                }
                pairs.push(pair);
            }
            None => {
                order.push(row.record_id.clone());
                grouped.insert(row.record_id, (label, vec![pair]));
            }
        }
    }
    let mut records = Vec::with_capacity(order.len());
    for id in order {
        let (label, pairs) = grouped.remove(&id).expect("grouped by id");
        records.push(SurveyRecord::new(id, pairs, label)?);
    }
    Dataset::new(name, records)
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct DatasetStats {
    pub counts: BTreeMap<MentalState, usize>,
    pub turns_per_record: usize,
    pub records: usize,
}

impl DatasetStats {
    pub fn count(&self, label: MentalState) -> usize {
        self.counts.get(&label).copied().unwrap_or(0)
    }
}

/// Per-label record counts. Every label appears in the map, possibly with 0.
pub fn dataset_stats(ds: &Dataset) -> Result<DatasetStats, SurveyError> {
    if ds.is_empty() {
        return Err(SurveyError::Empty);
    }
    let mut counts: BTreeMap<MentalState, usize> =
        MentalState::ALL.iter().map(|&l| (l, 0)).collect();
    for r in &ds.records {
        *counts.entry(r.label).or_default() += 1;
    }
    Ok(DatasetStats {
        counts,
        turns_per_record: ds.turns_per_record,
        records: ds.len(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::io::Write;

    fn write_tmp(contents: &str, suffix: &str) -> tempfile::NamedTempFile {
        let mut f = tempfile::Builder::new().suffix(suffix).tempfile().unwrap();
        f.write_all(contents.as_bytes()).unwrap();
        f
    }

    fn row(id: &str, turn: usize, cat: &str, answer: &str, label: &str) -> String {
        serde_json::json!({
            "record_id": id, "turn_index": turn, "category": cat,
            "question": format!("q{turn}"), "answer": answer, "label_name": label,
        })
        .to_string()
    }

    #[test]
    fn label_bijection() {
        for l in MentalState::ALL {
            assert_eq!(MentalState::from_ordinal(l.ordinal() as i64).unwrap(), l);
            assert_eq!(l.name().parse::<MentalState>().unwrap(), l);
        }
        assert_eq!(MentalState::VeryUnhappy.ordinal(), 1);
        assert_eq!(MentalState::VeryHappy.ordinal(), 5);
        assert_eq!("Very_Happy".parse::<MentalState>().unwrap(), MentalState::VeryHappy);
        assert!(MentalState::from_ordinal(6).is_err());
    }

    #[test]
    fn loads_single_record() {
        let text = [
            row("r1", 0, "economics", "yes", "happy"),
            row("r1", 1, "health", "good", "happy"),
            row("r1", 2, "family", "married", "happy"),
        ]
        .join("\n");
        let f = write_tmp(&text, ".jsonl");
        let ds = load_dataset(f.path(), Format::Jsonl).unwrap();
        assert_eq!(ds.len(), 1);
        assert_eq!(ds.records[0].label.ordinal(), 4);
        assert_eq!(ds.records[0].effective_pairs().len(), 3);
    }

    #[test]
    fn all_empty_answers_rejected() {
        let text = [row("r1", 0, "a", "", "happy"), row("r1", 1, "b", "  ", "happy")].join("\n");
        let f = write_tmp(&text, ".jsonl");
        assert!(matches!(
            load_dataset(f.path(), Format::Jsonl),
            Err(SurveyError::Validation { .. })
        ));
    }

    #[test]
    fn unknown_label_rejected() {
        let f = write_tmp(&row("r1", 0, "a", "x", "ecstatic"), ".jsonl");
        assert!(matches!(
            load_dataset(f.path(), Format::Jsonl),
            Err(SurveyError::UnknownLabel(_))
        ));
    }

    #[test]
    fn malformed_row_names_line() {
        let text = format!("{}\n{{not json\n", row("r1", 0, "a", "x", "happy"));
        let f = write_tmp(&text, ".jsonl");
        match load_dataset(f.path(), Format::Jsonl) {
            Err(SurveyError::Parse { line, .. }) => assert_eq!(line, 2),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn duplicate_turn_rejected() {
        let text = [row("r1", 0, "a", "x", "happy"), row("r1", 0, "b", "y", "happy")].join("\n");
        let f = write_tmp(&text, ".jsonl");
        assert!(load_dataset(f.path(), Format::Jsonl).is_err());
    }

    #[test]
    fn csv_matches_jsonl() {
        let csv_text = "record_id,turn_index,category,question,answer,label_name\n\
                        r1,0,economics,Income?,stable,neutral\n\
                        r1,1,family,Spouse age?,,neutral\n";
        let f = write_tmp(csv_text, ".csv");
        let ds = load_dataset(f.path(), Format::Csv).unwrap();
        let r = &ds.records[0];
        assert_eq!(r.label, MentalState::Neutral);
        assert_eq!(r.pairs.len(), 2);
        assert_eq!(r.pairs[1].answer, None);
        assert_eq!(ds.turns_per_record, 2);
    }

    #[test]
    fn effective_pairs_follow_skip_pattern() {
        let pairs: Vec<QaPair> = (0..6)
            .map(|t| {
                let a = [0, 2, 5].contains(&t).then_some("ans");
                QaPair::new(t, "c", format!("q{t}"), a)
            })
            .collect();
        let r = SurveyRecord::new("r", pairs.clone(), MentalState::Neutral).unwrap();
        let turns: Vec<usize> = r.effective_pairs().iter().map(|p| p.turn_index).collect();
        assert_eq!(turns, vec![0, 2, 5]);

        let full: Vec<QaPair> = (0..6)
            .map(|t| QaPair::new(t, "c", format!("q{t}"), Some("a")))
            .collect();
        let r2 = SurveyRecord::new("r2", full.clone(), MentalState::Neutral).unwrap();
        let eff: Vec<QaPair> = r2.effective_pairs().into_iter().cloned().collect();
        assert_eq!(eff, full);
        assert_ne!(r.effective_pairs().len(), r2.effective_pairs().len());
    }

    #[test]
    fn stats_single_neutral() {
        let r = SurveyRecord::new(
            "r",
            vec![QaPair::new(0, "c", "q", Some("a"))],
            MentalState::Neutral,
        )
        .unwrap();
        let ds = Dataset::new("d", vec![r]).unwrap();
        let s = dataset_stats(&ds).unwrap();
        assert_eq!(s.count(MentalState::Neutral), 1);
        for l in MentalState::ALL.into_iter().filter(|&l| l != MentalState::Neutral) {
            assert_eq!(s.count(l), 0);
        }
    }

    #[test]
    fn stats_empty_dataset_errors() {
        let ds = Dataset::new("d", vec![]).unwrap();
        assert!(matches!(dataset_stats(&ds), Err(SurveyError::Empty)));
    }
}
