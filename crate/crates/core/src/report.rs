//! Result tables: one row per dataset × model × prompting strategy with
//! success rate, weighted F1, mean runtime and consistency, written as CSV
//! and as an aligned plain-text table.

use std::fmt::Write as _;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::metrics::EvalResult;

#[derive(Debug, Error)]
pub enum ReportError {
    #[error("csv: {0}")]
    Csv(#[from] csv::Error),
    #[error("row {row}: {message}")]
    Field { row: usize, message: String },
}

pub const NOT_IMPLEMENTED: &str = "not implemented";

pub const HEADER: [&str; 10] = [
    "dataset",
    "llm",
    "prompting",
    "success_pct",
    "weighted_f1_pct",
    "runtime_s",
    "consistency_pct",
    "consistency_pass_pct",
    "n_samples",
    "note",
];

const TABLE_HEADER: [&str; 7] = [
    "Dataset",
    "LLMs",
    "Prompting",
    "Success (%)",
    "Weighted-F1 (%)",
    "Runtime (s)",
    "Consistency (%)",
];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReportRow {
    pub dataset: String,
    pub llm: String,
    pub prompting: String,
    pub success: Option<f64>,
    pub weighted_f1: Option<f64>,
    pub runtime: Option<f64>,
    pub consistency: Option<f64>,
    pub consistency_pass: Option<f64>,
    pub n_samples: Option<usize>,
    pub note: String,
}

impl ReportRow {
    pub fn from_eval(dataset: &str, llm: &str, prompting: &str, r: &EvalResult) -> Self {
        Self {
            dataset: dataset.into(),
            llm: llm.into(),
            prompting: prompting.into(),
            success: Some(r.success_rate),
            weighted_f1: Some(r.weighted_f1),
            runtime: Some(r.mean_runtime),
            consistency: Some(r.consistency),
            consistency_pass: Some(r.consistency_pass_rate),
            n_samples: Some(r.n_samples),
            note: String::new(),
        }
    }

    /// A row whose metric columns are deliberately left blank.
    pub fn not_implemented(dataset: &str, llm: &str, prompting: &str) -> Self {
        Self {
            dataset: dataset.into(),
            llm: llm.into(),
            prompting: prompting.into(),
            success: None,
            weighted_f1: None,
            runtime: None,
            consistency: None,
            consistency_pass: None,
            n_samples: None,
            note: NOT_IMPLEMENTED.into(),
        }
    }
}

/// Two decimals, as in published result tables.
fn num(v: Option<f64>) -> String {
    v.map(|x| format!("{x:.2}")).unwrap_or_default()
}

fn parse_num(field: &str, row: usize, name: &str) -> Result<Option<f64>, ReportError> {
    if field.trim().is_empty() {
        return Ok(None);
    }
    field.trim().parse::<f64>().map(Some).map_err(|e| ReportError::Field {
        row,
        message: format!("{name}: {e}"),
    })
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct Report {
    pub rows: Vec<ReportRow>,
}

impl Report {
    pub fn push(&mut self, row: ReportRow) {
        self.rows.push(row);
    }

    pub fn to_csv(&self) -> String {
        let mut w = csv::Writer::from_writer(Vec::new());
        w.write_record(HEADER).expect("in-memory write");
        for r in &self.rows {
            w.write_record([
                r.dataset.clone(),
                r.llm.clone(),
                r.prompting.clone(),
                num(r.success),
                num(r.weighted_f1),
                num(r.runtime),
                num(r.consistency),
                num(r.consistency_pass),
                r.n_samples.map(|n| n.to_string()).unwrap_or_default(),
                r.note.clone(),
            ])
            .expect("in-memory write");
        }
        String::from_utf8(w.into_inner().expect("in-memory flush")).expect("utf-8 csv")
    }

    pub fn from_csv(text: &str) -> Result<Self, ReportError> {
        let mut rdr = csv::Reader::from_reader(text.as_bytes());
        let mut rows = Vec::new();
        for (i, rec) in rdr.records().enumerate() {
            let rec = rec?;
            let row = i + 1;
            let get = |j: usize| rec.get(j).unwrap_or("");
            let n_samples = match get(8).trim() {
                "" => None,
                s => Some(s.parse::<usize>().map_err(|e| ReportError::Field {
                    row,
                    message: format!("n_samples: {e}"),
                })?),
            };
            rows.push(ReportRow {
                dataset: get(0).into(),
                llm: get(1).into(),
                prompting: get(2).into(),
                success: parse_num(get(3), row, "success_pct")?,
                weighted_f1: parse_num(get(4), row, "weighted_f1_pct")?,
                runtime: parse_num(get(5), row, "runtime_s")?,
                consistency: parse_num(get(6), row, "consistency_pct")?,
                consistency_pass: parse_num(get(7), row, "consistency_pass_pct")?,
                n_samples,
                note: get(9).into(),
            });
        }
        Ok(Self { rows })
    }

    /// Aligned text table. Blank metric cells read `not implemented`.
    pub fn to_table(&self) -> String {
        let cells: Vec<[String; 7]> = self
            .rows
            .iter()
            .map(|r| {
                let metric = |v: Option<f64>| match v {
                    Some(_) => num(v),
                    None if r.note.is_empty() => "-".into(),
                    None => r.note.clone(),
                };
                [
                    r.dataset.clone(),
                    r.llm.clone(),
                    r.prompting.clone(),
                    metric(r.success),
                    metric(r.weighted_f1),
                    metric(r.runtime),
                    metric(r.consistency),
                ]
            })
            .collect();
        let mut widths: Vec<usize> = TABLE_HEADER.iter().map(|h| h.chars().count()).collect();
        for row in &cells {
            for (w, c) in widths.iter_mut().zip(row) {
                *w = (*w).max(c.chars().count());
            }
        }
        let line = |fields: Vec<&str>| -> String {
            let parts: Vec<String> = fields
                .iter()
                .zip(&widths)
                .enumerate()
                .map(|(i, (f, w))| {
                    if i < 3 {
                        format!("{f:<w$}")
                    } else {
                        format!("{f:>w$}")
                    }
                })
                .collect();
            parts.join("  ").trim_end().to_string()
        };
        let mut out = String::new();
        writeln!(out, "{}", line(TABLE_HEADER.to_vec())).unwrap();
        let rule: Vec<String> = widths.iter().map(|w| "-".repeat(*w)).collect();
        writeln!(out, "{}", rule.join("  ")).unwrap();
        for row in &cells {
            writeln!(out, "{}", line(row.iter().map(String::as_str).collect())).unwrap();
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn io_row() -> ReportRow {
        ReportRow {
            dataset: "CGSS".into(),
            llm: "Llama3-8B".into(),
            prompting: "I/O Prompt".into(),
            success: Some(22.22),
            weighted_f1: Some(22.09),
            runtime: Some(3.39),
            consistency: Some(100.0),
            consistency_pass: None,
            n_samples: None,
            note: String::new(),
        }
    }

    #[test]
    fn published_row_round_trips() {
        let mut r = Report::default();
        r.push(io_row());
        r.push(ReportRow::not_implemented("CGSS", "Llama3-8B", "Fine Tuning (LoRA)"));
        let csv = r.to_csv();
        assert!(csv.contains("CGSS,Llama3-8B,I/O Prompt,22.22,22.09,3.39,100.00,,,"));
        let back = Report::from_csv(&csv).unwrap();
        assert_eq!(back, r);
        assert_eq!(back.to_csv(), csv);
    }

    #[test]
    fn table_layout() {
        let mut r = Report::default();
        r.push(io_row());
        r.push(ReportRow::not_implemented("CGSS", "Llama3-8B", "LoRA"));
        let t = r.to_table();
        let lines: Vec<&str> = t.lines().collect();
        assert!(lines[0].starts_with("Dataset"));
        assert!(lines[0].ends_with("Consistency (%)"));
        assert!(lines[2].ends_with("100.00"));
        assert!(lines[3].contains(NOT_IMPLEMENTED));
        // numeric columns are right-aligned to a shared edge
        assert_eq!(lines[0].len(), lines[2].len());
    }

    #[test]
    fn from_eval_copies_metrics() {
        let e = EvalResult {
            success_rate: 50.0,
            weighted_f1: 40.0,
            mean_runtime: 0.0,
            consistency: 99.5,
            consistency_pass_rate: 90.0,
            n_samples: 10,
        };
        let row = ReportRow::from_eval("synthetic", "replay", "RFoT", &e);
        assert_eq!(row.success, Some(50.0));
        assert_eq!(row.n_samples, Some(10));
    }

    #[test]
    fn bad_numbers_are_reported() {
        let text = format!("{}\na,b,c,x,,,,,,\n", HEADER.join(","));
        assert!(matches!(Report::from_csv(&text), Err(ReportError::Field { row: 1, .. })));
    }
}
