//! Randomized binary thought trees, grown depth-first.
//!
//! The root is drawn from the importance distribution over the tree's
//! thought subset. Below any node, the remaining thoughts are partitioned:
//! those whose category co-occurs with the node's category in the bootstrap
//! sample go left, the rest go right. Each side's node is the best split by
//! gain ratio, or by importance when no labelled context is available.

use std::collections::{BTreeMap, BTreeSet};

use rand::Rng;
use serde::{Deserialize, Serialize};

use super::sampling::{root_probabilities, weighted_sample_without_replacement};
use super::split::SplitContext;
use super::ForestError;
use crate::icot::{CandidateThoughts, Thought};
use crate::prompts;
use crate::shapley::ImportanceVector;
use crate::survey::QaPair;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TreeNode {
    pub thought_id: String,
    pub left: Option<usize>,
    pub right: Option<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ThoughtTree {
    pub index: usize,
    /// Arena of nodes; the root is always node 0.
    pub nodes: Vec<TreeNode>,
    /// Gain ratio of each node chosen by split scoring.
    pub split_scores: BTreeMap<usize, f64>,
    /// The thought subset the tree was built from, in draw order.
    pub selected: Vec<String>,
    /// Turn indices of the bootstrap sample (with repeats).
    pub bootstrap: Vec<usize>,
}

impl ThoughtTree {
    pub fn root(&self) -> &TreeNode {
        &self.nodes[0]
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    /// Thought ids root first, left subtree fully before the right.
    pub fn preorder(&self) -> Vec<&str> {
        let mut out = Vec::with_capacity(self.nodes.len());
        let mut stack = vec![0usize];
        while let Some(i) = stack.pop() {
            let node = &self.nodes[i];
            out.push(node.thought_id.as_str());
            if let Some(r) = node.right {
                stack.push(r);
            }
            if let Some(l) = node.left {
                stack.push(l);
            }
        }
        out
    }

    pub fn depth(&self) -> usize {
        fn go(t: &ThoughtTree, i: Option<usize>) -> usize {
            match i {
                None => 0,
                Some(i) => 1 + go(t, t.nodes[i].left).max(go(t, t.nodes[i].right)),
            }
        }
        go(self, Some(0))
    }
}

struct Builder<'a> {
    iv: &'a ImportanceVector,
    present: BTreeSet<String>,
    rows: Option<Vec<&'a super::split::ContextRow>>,
    context: Option<&'a SplitContext>,
    nodes: Vec<TreeNode>,
    split_scores: BTreeMap<usize, f64>,
}

impl Builder<'_> {
    fn importance(&self, t: &Thought) -> f64 {
        self.iv.get(&t.id).unwrap_or(0.0)
    }

    /// Best split among `group`: highest gain ratio, then importance, then id.
    fn best(&self, group: &[&Thought]) -> (usize, Option<f64>) {
        let scored: Vec<(usize, Option<f64>)> = group
            .iter()
            .enumerate()
            .map(|(i, t)| {
                let s = match (self.context, &self.rows) {
                    (Some(ctx), Some(rows)) => Some(ctx.score(&t.category, rows)),
                    _ => None,
                };
                (i, s)
            })
            .collect();
        scored
            .into_iter()
            .max_by(|(a, sa), (b, sb)| {
                let (ta, tb) = (group[*a], group[*b]);
                sa.unwrap_or(0.0)
                    .total_cmp(&sb.unwrap_or(0.0))
                    .then(self.importance(ta).total_cmp(&self.importance(tb)))
                    .then(tb.id.cmp(&ta.id))
            })
            .expect("non-empty group")
    }

    fn push(&mut self, t: &Thought, score: Option<f64>) -> usize {
        let idx = self.nodes.len();
        self.nodes.push(TreeNode {
            thought_id: t.id.clone(),
            left: None,
            right: None,
        });
        if let Some(s) = score {
            self.split_scores.insert(idx, s);
        }
        idx
    }

    fn attach(&mut self, idx: usize, node: &Thought, rest: Vec<&Thought>) {
        let anchored = self.present.contains(&node.category);
        let (left, right): (Vec<&Thought>, Vec<&Thought>) = rest
            .into_iter()
            .partition(|t| anchored && self.present.contains(&t.category));
        let l = self.grow(left);
        self.nodes[idx].left = l;
        let r = self.grow(right);
        self.nodes[idx].right = r;
    }

    fn grow(&mut self, mut group: Vec<&Thought>) -> Option<usize> {
        if group.is_empty() {
            return None;
        }
        let (pos, score) = self.best(&group);
        let node = group.remove(pos);
        let idx = self.push(node, score);
        self.attach(idx, node, group);
        Some(idx)
    }
}

/// Builds one tree over `selected`. The root is the first draw taken from
/// `rng`, so a caller holding the same generator state can reproduce it.
pub fn build_tree<R: Rng + ?Sized>(
    selected: &[&Thought],
    iv: &ImportanceVector,
    bootstrap: &[&QaPair],
    context: Option<&SplitContext>,
    rng: &mut R,
) -> Result<ThoughtTree, ForestError> {
    if selected.is_empty() {
        return Err(ForestError::Empty("selected thoughts"));
    }
    let ids: Vec<String> = selected.iter().map(|t| t.id.clone()).collect();
    let unique: BTreeSet<&String> = ids.iter().collect();
    if unique.len() != ids.len() {
        return Err(ForestError::InvalidDistribution("duplicate thought in selection".into()));
    }
    let dist = root_probabilities(iv, &ids)?;
    let root_id = weighted_sample_without_replacement(&dist, 1, rng)?.remove(0);

    let present: BTreeSet<String> = bootstrap.iter().map(|p| p.category.clone()).collect();
    let context = context.filter(|c| !c.is_empty());
    let mut b = Builder {
        iv,
        rows: context.map(|c| c.rows_for(&present)),
        present,
        context,
        nodes: Vec::with_capacity(selected.len()),
        split_scores: BTreeMap::new(),
    };
    let root = *selected.iter().find(|t| t.id == root_id).expect("drawn from selection");
    let idx = b.push(root, None);
    let rest: Vec<&Thought> = selected.iter().copied().filter(|t| t.id != root_id).collect();
    b.attach(idx, root, rest);

    Ok(ThoughtTree {
        index: 0,
        nodes: b.nodes,
        split_scores: b.split_scores,
        selected: ids,
        bootstrap: bootstrap.iter().map(|p| p.turn_index).collect(),
    })
}

/// The tree's reasoning chain: pre-order numbered steps in the
/// label-extraction prompt.
pub fn linearize_tree(
    tree: &ThoughtTree,
    candidates: &CandidateThoughts,
) -> Result<String, ForestError> {
    Ok(tree_request(tree, candidates)?.user)
}

pub(crate) fn tree_request(
    tree: &ThoughtTree,
    candidates: &CandidateThoughts,
) -> Result<crate::llm::PromptRequest, ForestError> {
    let steps = tree
        .preorder()
        .into_iter()
        .map(|id| {
            candidates
                .get(id)
                .map(Thought::step_text)
                .ok_or_else(|| ForestError::UnknownThought(id.to_string()))
        })
        .collect::<Result<Vec<String>, _>>()?;
    Ok(prompts::label_request(
        &candidates.record_id,
        steps.iter().map(String::as_str),
    ))
}
