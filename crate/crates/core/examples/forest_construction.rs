//! Builds a forest of thought trees for one record, prints each tree's
//! shape and chain, and aggregates the trees' answers.
//!
//! Uses the built-in lexicon simulator, so it runs offline.
//! Run with `cargo run --example forest_construction [seed]`.

use std::path::Path;

use rfot::forest::{build_forest, linearize_tree, predict, ForestConfig, SplitContext};
use rfot::icot::{run_icot, IcotConfig, Thought};
use rfot::llm::LexiconBackend;
use rfot::shapley::{shapley, CachedValue, LabelAlignment};
use rfot::survey::{load_dataset, Format};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let seed: u64 = std::env::args().nth(1).map(|s| s.parse()).transpose()?.unwrap_or(42);
    let path = Path::new(env!("CARGO_MANIFEST_DIR")).join("fixtures/synthetic_survey.jsonl");
    let ds = load_dataset(&path, Format::Jsonl)?;
    let record = ds.get("s05").ok_or("fixture record missing")?;
    let llm = LexiconBackend::new();

    let mut candidates = run_icot(record, &llm, &IcotConfig { max_keywords: 1, ..IcotConfig::default() })?;
    let steps: Vec<String> = candidates.thoughts.iter().map(Thought::step_text).collect();
    let vf = CachedValue::new(LabelAlignment::new(&llm, &record.record_id, steps, record.label));
    let iv = shapley(&vf, &candidates.ids(), 12, 200, seed)?;
    for t in &mut candidates.thoughts {
        t.importance = iv.get(&t.id);
    }

    // split scoring learns from every other labelled record
    let context = SplitContext::leave_one_out(&ds.records, &record.record_id);
    let config = ForestConfig { trees: 5, k: 6, ..ForestConfig::default() };
    let forest = build_forest(record, &candidates, &iv, &config, Some(&context), seed)?;
    for tree in &forest.trees {
        println!(
            "tree {}: {} nodes, depth {}, root {}, bootstrap turns {:?}",
            tree.index,
            tree.len(),
            tree.depth(),
            tree.root().thought_id,
            tree.bootstrap
        );
        println!("  pre-order {:?}", tree.preorder());
    }
    println!("\nchain prompt of tree 0:\n{}", linearize_tree(&forest.trees[0], &candidates)?);

    let (prediction, traces) = predict(&forest, &candidates, &iv, &llm)?;
    for t in &traces {
        println!("tree {} answered {:?}", t.tree, t.raw.trim());
    }
    println!("forest answer: {} (truth: {})", prediction.label, record.label);
    Ok(())
}
