//! Importance-proportional distributions, weighted sampling without
//! replacement, and bootstrap resampling of question-answer pairs.

use rand::Rng;
use serde::{Deserialize, Serialize};

use super::ForestError;
use crate::shapley::ImportanceVector;
use crate::survey::{QaPair, SurveyRecord};

/// Floor applied to importance scores before normalization, so that
/// thoughts with non-positive attribution stay selectable but rare.
pub const EPSILON: f64 = 1e-6;

const SUM_TOLERANCE: f64 = 1e-9;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SamplingDistribution {
    ids: Vec<String>,
    probs: Vec<f64>,
}

impl SamplingDistribution {
    /// A distribution from explicit probabilities, which must be finite,
    /// non-negative and sum to one.
    pub fn new(ids: Vec<String>, probs: Vec<f64>) -> Result<Self, ForestError> {
        if ids.is_empty() {
            return Err(ForestError::Empty("distribution"));
        }
        if ids.len() != probs.len() {
            return Err(ForestError::Shape {
                left: ids.len(),
                right: probs.len(),
            });
        }
        if probs.iter().any(|p| !p.is_finite() || *p < 0.0) {
            return Err(ForestError::InvalidDistribution(
                "probabilities must be finite and non-negative".into(),
            ));
        }
        let sum: f64 = probs.iter().sum();
        if (sum - 1.0).abs() > SUM_TOLERANCE {
            return Err(ForestError::InvalidDistribution(format!(
                "probabilities sum to {sum}"
            )));
        }
        Ok(Self { ids, probs })
    }

    pub fn uniform(ids: Vec<String>) -> Result<Self, ForestError> {
        let n = ids.len();
        Self::new(ids, vec![1.0 / n.max(1) as f64; n])
    }

    /// Normalizes `weights` after flooring them at `floor` (when given).
    /// Falls back to uniform when no weight is positive.
    pub fn from_weights(
        ids: Vec<String>,
        weights: &[f64],
        floor: Option<f64>,
    ) -> Result<Self, ForestError> {
        if ids.len() != weights.len() {
            return Err(ForestError::Shape {
                left: ids.len(),
                right: weights.len(),
            });
        }
        if weights.iter().any(|w| !w.is_finite()) {
            return Err(ForestError::InvalidDistribution("non-finite weight".into()));
        }
        if weights.iter().all(|&w| w <= 0.0) {
            return Self::uniform(ids);
        }
        let clamped: Vec<f64> = match floor {
            Some(eps) => weights.iter().map(|&w| w.max(eps)).collect(),
            None => weights.iter().map(|&w| w.max(0.0)).collect(),
        };
        let total: f64 = clamped.iter().sum();
        Self::new(ids, clamped.iter().map(|w| w / total).collect())
    }

    pub fn ids(&self) -> &[String] {
        &self.ids
    }

    pub fn probs(&self) -> &[f64] {
        &self.probs
    }

    pub fn prob(&self, id: &str) -> Option<f64> {
        self.ids.iter().position(|i| i == id).map(|i| self.probs[i])
    }

    pub fn len(&self) -> usize {
        self.ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ids.is_empty()
    }
}

/// Each thought's chance of entering a tree's thought subset, proportional
/// to its (floored) importance.
pub fn selection_probabilities(iv: &ImportanceVector) -> Result<SamplingDistribution, ForestError> {
    if iv.is_empty() {
        return Err(ForestError::Empty("importance vector"));
    }
    SamplingDistribution::from_weights(iv.ids.clone(), &iv.values, Some(EPSILON))
}

/// Root-node distribution: the importance vector restricted to `selected`,
/// then normalized.
pub fn root_probabilities(
    iv: &ImportanceVector,
    selected: &[String],
) -> Result<SamplingDistribution, ForestError> {
    if let Some(missing) = selected.iter().find(|id| iv.get(id).is_none()) {
        return Err(ForestError::MissingImportance(missing.clone()));
    }
    selection_probabilities(&iv.restrict(selected))
}

/// Draws `count` distinct ids one at a time, renormalizing the remaining
/// mass after every draw. Zero-mass ids are only drawn once nothing with
/// positive mass is left, and then uniformly.
pub fn weighted_sample_without_replacement<R: Rng + ?Sized>(
    dist: &SamplingDistribution,
    count: usize,
    rng: &mut R,
) -> Result<Vec<String>, ForestError> {
    if count > dist.len() {
        return Err(ForestError::Size {
            requested: count,
            available: dist.len(),
        });
    }
    let mut remaining: Vec<usize> = (0..dist.len()).collect();
    let mut out = Vec::with_capacity(count);
    for _ in 0..count {
        let mass: f64 = remaining.iter().map(|&i| dist.probs[i]).sum();
        let pos = if mass <= 0.0 {
            rng.gen_range(0..remaining.len())
        } else {
            let target = rng.gen::<f64>() * mass;
            let mut acc = 0.0;
            let mut chosen = None;
            for (pos, &i) in remaining.iter().enumerate() {
                acc += dist.probs[i];
                if target < acc {
                    chosen = Some(pos);
                    break;
                }
            }
            // rounding can leave `target` just past the last partial sum
            chosen.unwrap_or_else(|| {
                remaining
                    .iter()
                    .rposition(|&i| dist.probs[i] > 0.0)
                    .expect("positive mass")
            })
        };
        out.push(dist.ids[remaining.remove(pos)].clone());
    }
    Ok(out)
}

/// `n` uniform draws with replacement from `0..n`.
pub fn bootstrap_indices<R: Rng + ?Sized>(n: usize, rng: &mut R) -> Vec<usize> {
    (0..n).map(|_| rng.gen_range(0..n)).collect()
}

/// A bootstrap resample of the record's effective pairs: as many draws as
/// there are effective pairs, uniform, with replacement.
pub fn bootstrap_pairs<'a, R: Rng + ?Sized>(
    record: &'a SurveyRecord,
    rng: &mut R,
) -> Result<Vec<&'a QaPair>, ForestError> {
    let pairs = record.effective_pairs();
    if pairs.is_empty() {
        return Err(ForestError::Empty("effective pairs"));
    }
    Ok(bootstrap_indices(pairs.len(), rng)
        .into_iter()
        .map(|i| pairs[i])
        .collect())
}
