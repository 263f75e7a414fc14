//! Random forest of thoughts.
//!
//! Each of the `trees` ensemble members draws its own bootstrap sample of
//! question-answer pairs and its own subset of `k` thoughts (with
//! probability proportional to importance), grows a binary thought tree
//! depth-first from an importance-drawn root, and becomes one chain prompt.
//! The members' labels are aggregated by vote or ordinal mean.
//!
//! Every tree has its own generator stream derived from the forest seed and
//! the tree index, so trees can be built in any order or in parallel.

mod sampling;
mod split;
mod tree;
mod vote;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::icot::{CandidateThoughts, Thought};
use crate::llm::LlmError;
use crate::shapley::ImportanceVector;
use crate::survey::SurveyRecord;

pub use sampling::{
    bootstrap_indices, bootstrap_pairs, root_probabilities, selection_probabilities,
    weighted_sample_without_replacement, SamplingDistribution, EPSILON,
};
pub use split::{entropy, gain_ratio, ContextRow, SplitContext};
pub use tree::{build_tree, linearize_tree, ThoughtTree, TreeNode};
pub use vote::{
    aggregate, majority_vote, ordinal_mean, predict, tree_weight, AggregationMode, Prediction,
    TreeTrace,
};

#[derive(Debug, Error)]
pub enum ForestError {
    #[error("empty input: {0}")]
    Empty(&'static str),
    #[error("cannot draw {requested} items from {available}")]
    Size { requested: usize, available: usize },
    #[error("length mismatch: {left} vs {right}")]
    Shape { left: usize, right: usize },
    #[error("invalid distribution: {0}")]
    InvalidDistribution(String),
    #[error("thought {0} has no importance score")]
    MissingImportance(String),
    #[error("tree references unknown thought {0}")]
    UnknownThought(String),
    #[error("invalid forest configuration: {0}")]
    Config(String),
    #[error("every tree abstained")]
    AllAbstained,
    #[error(transparent)]
    Backend(#[from] LlmError),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ForestConfig {
    /// Ensemble size.
    pub trees: usize,
    /// Thoughts drawn per tree.
    pub k: usize,
    pub mode: AggregationMode,
}

impl Default for ForestConfig {
    fn default() -> Self {
        Self {
            trees: 5,
            k: 8,
            mode: AggregationMode::MajorityVote,
        }
    }
}

impl ForestConfig {
    pub fn validate(&self) -> Result<(), ForestError> {
        if self.trees == 0 {
            return Err(ForestError::Config("at least one tree is required".into()));
        }
        if self.k == 0 {
            return Err(ForestError::Config("k must be at least 1".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ThoughtForest {
    pub record_id: String,
    pub seed: u64,
    pub config: ForestConfig,
    pub trees: Vec<ThoughtTree>,
}

impl ThoughtForest {
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("forest serializes") + "\n"
    }
}

/// The generator for tree `index` of a forest seeded with `seed`.
pub fn tree_rng(seed: u64, index: usize) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(index as u64);
    rng
}

/// Builds `config.trees` trees for one record.
///
/// Per tree: a bootstrap sample of the record's effective pairs, a thought
/// subset of size `min(k, candidates)` drawn without replacement in
/// proportion to importance, and a tree grown over that subset. `context`
/// supplies labelled records for split scoring; without it, splits fall
/// back to importance order.
pub fn build_forest(
    record: &SurveyRecord,
    candidates: &CandidateThoughts,
    iv: &ImportanceVector,
    config: &ForestConfig,
    context: Option<&SplitContext>,
    seed: u64,
) -> Result<ThoughtForest, ForestError> {
    config.validate()?;
    if candidates.is_empty() {
        return Err(ForestError::Empty("candidate thoughts"));
    }
    let pool: ImportanceVector = iv.restrict(&candidates.ids());
    if let Some(t) = candidates.thoughts.iter().find(|t| pool.get(&t.id).is_none()) {
        return Err(ForestError::MissingImportance(t.id.clone()));
    }
    let dist = selection_probabilities(&pool)?;
    let count = config.k.min(dist.len());

    let trees = (0..config.trees)
        .into_par_iter()
        .map(|index| {
            let mut rng = tree_rng(seed, index);
            let bootstrap = bootstrap_pairs(record, &mut rng)?;
            let ids = weighted_sample_without_replacement(&dist, count, &mut rng)?;
            let selected: Vec<&Thought> = ids
                .iter()
                .map(|id| candidates.get(id).expect("pool ids come from candidates"))
                .collect();
            let mut tree = build_tree(&selected, &pool, &bootstrap, context, &mut rng)?;
            tree.index = index;
            Ok(tree)
        })
        .collect::<Result<Vec<_>, ForestError>>()?;

    Ok(ThoughtForest {
        record_id: record.record_id.clone(),
        seed,
        config: config.clone(),
        trees,
    })
}
