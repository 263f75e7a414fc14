//! Per-tree prediction and ensemble aggregation.

use std::collections::BTreeMap;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::tree::tree_request;
use super::{ForestError, ThoughtForest};
use crate::icot::CandidateThoughts;
use crate::llm::{LlmBackend, PromptRequest};
use crate::prompts;
use crate::shapley::ImportanceVector;
use crate::survey::MentalState;

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AggregationMode {
    #[default]
    MajorityVote,
    OrdinalMean,
}

/// Most frequent label. Ties go to the label whose supporters carry the
/// larger total weight, then to the lower ordinal.
pub fn majority_vote(votes: &[(MentalState, f64)]) -> Option<MentalState> {
    let mut tally: BTreeMap<MentalState, (usize, f64)> = BTreeMap::new();
    for &(label, weight) in votes {
        let e = tally.entry(label).or_default();
        e.0 += 1;
        e.1 += weight;
    }
    tally
        .into_iter()
        .max_by(|(la, (ca, wa)), (lb, (cb, wb))| {
            ca.cmp(cb).then(wa.total_cmp(wb)).then(lb.cmp(la))
        })
        .map(|(l, _)| l)
}

/// Mean ordinal, rounded half away from zero and clamped to the scale.
pub fn ordinal_mean(labels: &[MentalState]) -> Option<MentalState> {
    if labels.is_empty() {
        return None;
    }
    let mean = labels.iter().map(|l| l.ordinal() as f64).sum::<f64>() / labels.len() as f64;
    MentalState::from_ordinal((mean.round() as i64).clamp(1, 5)).ok()
}

/// Combines `(tree index, label)` votes; `weights[tree]` is the tree's
/// tie-break weight.
pub fn aggregate(
    per_tree: &[(usize, MentalState)],
    weights: &[f64],
    mode: AggregationMode,
) -> Result<MentalState, ForestError> {
    let label = match mode {
        AggregationMode::MajorityVote => majority_vote(
            &per_tree
                .iter()
                .map(|&(t, l)| (l, weights.get(t).copied().unwrap_or(0.0)))
                .collect::<Vec<_>>(),
        ),
        AggregationMode::OrdinalMean => {
            ordinal_mean(&per_tree.iter().map(|&(_, l)| l).collect::<Vec<_>>())
        }
    };
    label.ok_or(ForestError::AllAbstained)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Prediction {
    pub label: MentalState,
    pub per_tree: Vec<(usize, MentalState)>,
    /// Trees whose reply named no level.
    pub abstained: Vec<usize>,
    pub mode: AggregationMode,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TreeTrace {
    pub tree: usize,
    pub fingerprint: String,
    pub prompt: String,
    pub raw: String,
    pub label: Option<MentalState>,
    /// Format consistency of the reply against the label template.
    pub consistency: f64,
}

/// Sum of the importance of a tree's thoughts; used to break vote ties.
pub fn tree_weight(forest: &ThoughtForest, tree: usize, iv: &ImportanceVector) -> f64 {
    forest.trees[tree]
        .nodes
        .iter()
        .map(|n| iv.get(&n.thought_id).unwrap_or(0.0))
        .sum()
}

/// Completes every tree's chain prompt and aggregates the parsed levels.
///
/// Identical chains are sent once and share the reply, so concurrent
/// completion stays independent of scheduling.
pub fn predict<B: LlmBackend + ?Sized>(
    forest: &ThoughtForest,
    candidates: &CandidateThoughts,
    iv: &ImportanceVector,
    llm: &B,
) -> Result<(Prediction, Vec<TreeTrace>), ForestError> {
    let requests: Vec<PromptRequest> = forest
        .trees
        .iter()
        .map(|t| tree_request(t, candidates))
        .collect::<Result<_, _>>()?;
    let mut unique: BTreeMap<String, &PromptRequest> = BTreeMap::new();
    for r in &requests {
        unique.entry(r.fingerprint()).or_insert(r);
    }
    let replies: BTreeMap<String, String> = unique
        .into_par_iter()
        .map(|(fp, r)| llm.complete(r).map(|c| (fp, c.text)))
        .collect::<Result<_, _>>()?;

    let mut traces = Vec::with_capacity(requests.len());
    let mut per_tree = Vec::new();
    let mut abstained = Vec::new();
    for (i, req) in requests.iter().enumerate() {
        let fingerprint = req.fingerprint();
        let raw = replies[&fingerprint].clone();
        let label = prompts::parse_label_reply(&raw);
        match label {
            Some(l) => per_tree.push((i, l)),
            None => abstained.push(i),
        }
        traces.push(TreeTrace {
            tree: i,
            consistency: crate::metrics::format_consistency(&raw, prompts::formats::LABEL),
            fingerprint,
            prompt: req.user.clone(),
            raw,
            label,
        });
    }
    let weights: Vec<f64> = (0..forest.trees.len())
        .map(|t| tree_weight(forest, t, iv))
        .collect();
    let label = aggregate(&per_tree, &weights, forest.config.mode)?;
    Ok((
        Prediction {
            label,
            per_tree,
            abstained,
            mode: forest.config.mode,
        },
        traces,
    ))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use MentalState::*;

    fn ms(o: u8) -> MentalState {
        MentalState::from_ordinal(o as i64).unwrap()
    }

    #[test]
    fn both_modes() {
        let per_tree = [(0, Happy), (1, Happy), (2, Unhappy)];
        let w = [1.0; 3];
        assert_eq!(aggregate(&per_tree, &w, AggregationMode::MajorityVote).unwrap(), Happy);
        assert_eq!(aggregate(&per_tree, &w, AggregationMode::OrdinalMean).unwrap(), Neutral);
        for mode in [AggregationMode::MajorityVote, AggregationMode::OrdinalMean] {
            assert_eq!(aggregate(&[(0, VeryHappy)], &[0.2], mode).unwrap(), VeryHappy);
            assert!(matches!(aggregate(&[], &[], mode), Err(ForestError::AllAbstained)));
        }
    }

    #[test]
    fn tie_rules() {
        // equal counts: heavier supporters win
        assert_eq!(majority_vote(&[(Happy, 0.2), (Unhappy, 0.9)]), Some(Unhappy));
        // equal counts and weights: lower ordinal wins
        assert_eq!(majority_vote(&[(Happy, 1.0), (Unhappy, 1.0)]), Some(Unhappy));
        assert_eq!(majority_vote(&[(VeryHappy, 1.0), (Neutral, 1.0)]), Some(Neutral));
    }

    #[test]
    fn rounding() {
        // 3.5 rounds away from zero
        assert_eq!(ordinal_mean(&[Neutral, Happy]), Some(Happy));
        assert_eq!(ordinal_mean(&[VeryUnhappy, Unhappy]), Some(Unhappy));
    }

    proptest! {
        #[test]
        fn mean_within_range(labels in prop::collection::vec(1u8..=5, 1..20)) {
            let ls: Vec<MentalState> = labels.iter().map(|&o| ms(o)).collect();
            let m = ordinal_mean(&ls).unwrap();
            prop_assert!(m >= *ls.iter().min().unwrap() && m <= *ls.iter().max().unwrap());
        }

        #[test]
        fn vote_winner_has_max_count(labels in prop::collection::vec(1u8..=5, 1..20)) {
            let votes: Vec<(MentalState, f64)> = labels.iter().map(|&o| (ms(o), 1.0)).collect();
            let w = majority_vote(&votes).unwrap();
            let count = |l: MentalState| votes.iter().filter(|(x, _)| *x == l).count();
            prop_assert!(MentalState::ALL.iter().all(|&l| count(l) <= count(w)));
        }
    }
}
