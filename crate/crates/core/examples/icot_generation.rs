//! Generates the aspect → keyword → response thought hierarchy for one
//! survey record and prints each thought with its parse log.
//!
//! Uses the built-in lexicon simulator, so it runs offline.
//! Run with `cargo run --example icot_generation [record_id]`.

use std::path::Path;

use rfot::icot::{run_icot, IcotConfig, ParseStatus};
use rfot::llm::LexiconBackend;
use rfot::survey::{load_dataset, Format};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let path = Path::new(env!("CARGO_MANIFEST_DIR")).join("fixtures/synthetic_survey.jsonl");
    let ds = load_dataset(&path, Format::Jsonl)?;
    let id = std::env::args().nth(1).unwrap_or_else(|| "s03".into());
    let record = ds.get(&id).ok_or_else(|| format!("no record {id}"))?;

    let llm = LexiconBackend::new();
    let config = IcotConfig {
        max_keywords: 2,
        ..IcotConfig::default()
    };
    let candidates = run_icot(record, &llm, &config)?;
    candidates.check(record)?;

    println!("{} thoughts over {:?}", candidates.len(), candidates.categories());
    for t in &candidates.thoughts {
        let parent = t.parent_id.as_deref().unwrap_or("-");
        println!("  {:<22} parent {:<22} {}", t.id, parent, t.step_text());
    }
    println!("generation log:");
    for g in &candidates.generation_log {
        let status = match &g.status {
            ParseStatus::Parsed => "parsed".to_string(),
            ParseStatus::Rejected { reason } => format!("rejected: {reason}"),
        };
        println!(
            "  {:<10} {:<8} attempt {} consistency {:.2} {}",
            g.category, g.level, g.attempt, g.consistency, status
        );
    }
    if !candidates.failed_categories.is_empty() {
        println!("failed categories: {:?}", candidates.failed_categories);
    }
    Ok(())
}
