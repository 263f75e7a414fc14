//! Gain-ratio split scoring.
//!
//! A thought's binary feature over a set of labelled records is "the
//! thought's category was answered in that record". The records come from
//! outside the one being predicted, and only those sharing the tree's
//! bootstrap category pattern are used when enough of them exist.

use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};

use super::ForestError;
use crate::survey::{MentalState, SurveyRecord};

/// Shannon entropy in bits of the label multiset.
pub fn entropy<L: Ord>(labels: &[L]) -> f64 {
    if labels.is_empty() {
        return 0.0;
    }
    let mut counts: BTreeMap<&L, usize> = BTreeMap::new();
    for l in labels {
        *counts.entry(l).or_default() += 1;
    }
    let n = labels.len() as f64;
    counts
        .values()
        .map(|&c| {
            let p = c as f64 / n;
            -p * p.log2()
        })
        .sum()
}

/// Information gain of splitting `labels` by `feature`, divided by the
/// split information. Both use base-2 logarithms; a degenerate split
/// (zero split information) scores 0.
pub fn gain_ratio<L: Ord>(feature: &[bool], labels: &[L]) -> Result<f64, ForestError> {
    if feature.len() != labels.len() {
        return Err(ForestError::Shape {
            left: feature.len(),
            right: labels.len(),
        });
    }
    if labels.is_empty() {
        return Err(ForestError::Empty("split labels"));
    }
    let (yes, no): (Vec<_>, Vec<_>) = feature.iter().zip(labels).partition(|(f, _)| **f);
    let split_info = entropy(&feature.iter().collect::<Vec<_>>());
    if split_info == 0.0 {
        return Ok(0.0);
    }
    let n = labels.len() as f64;
    let conditional: f64 = [yes, no]
        .iter()
        .filter(|side| !side.is_empty())
        .map(|side| {
            let ls: Vec<&L> = side.iter().map(|(_, l)| *l).collect();
            side.len() as f64 / n * entropy(&ls)
        })
        .sum();
    let gain = (entropy(labels) - conditional).max(0.0);
    Ok(gain / split_info)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ContextRow {
    pub record_id: String,
    pub categories: BTreeSet<String>,
    pub label: MentalState,
}

/// Labelled records available for split scoring.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct SplitContext {
    pub rows: Vec<ContextRow>,
}

impl SplitContext {
    pub fn from_records<'a, I>(records: I) -> Self
    where
        I: IntoIterator<Item = &'a SurveyRecord>,
    {
        let rows = records
            .into_iter()
            .map(|r| ContextRow {
                record_id: r.record_id.clone(),
                categories: r
                    .effective_pairs()
                    .iter()
                    .map(|p| p.category.clone())
                    .collect(),
                label: r.label,
            })
            .collect();
        Self { rows }
    }

    /// Every record except `exclude`.
    pub fn leave_one_out(records: &[SurveyRecord], exclude: &str) -> Self {
        Self::from_records(records.iter().filter(|r| r.record_id != exclude))
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    /// Rows whose answered categories include all of `pattern`; all rows
    /// when fewer than two match.
    pub fn rows_for(&self, pattern: &BTreeSet<String>) -> Vec<&ContextRow> {
        let matching: Vec<&ContextRow> = self
            .rows
            .iter()
            .filter(|r| pattern.is_subset(&r.categories))
            .collect();
        if matching.len() >= 2 {
            matching
        } else {
            self.rows.iter().collect()
        }
    }

    /// Gain ratio of "category answered" against the rows' labels.
    pub fn score(&self, category: &str, rows: &[&ContextRow]) -> f64 {
        if rows.is_empty() {
            return 0.0;
        }
        let feature: Vec<bool> = rows.iter().map(|r| r.categories.contains(category)).collect();
        let labels: Vec<MentalState> = rows.iter().map(|r| r.label).collect();
        gain_ratio(&feature, &labels).unwrap_or(0.0)
    }
}
