//! Runs the IO, chain-of-thought, self-consistency and tree-of-thoughts
//! baselines on every record of the synthetic survey and prints their
//! answers and call counts side by side.
//!
//! Uses the built-in lexicon simulator, so it runs offline.
//! Run with `cargo run --example baselines_comparison`.

use std::path::Path;

use rfot::baselines::{run_baseline, Baseline, StrategyConfig, DEFAULT_BREADTH, DEFAULT_CHAINS, DEFAULT_DEPTH};
use rfot::llm::LexiconBackend;
use rfot::metrics::weighted_f1;
use rfot::survey::{load_dataset, Format, MentalState};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let path = Path::new(env!("CARGO_MANIFEST_DIR")).join("fixtures/synthetic_survey.jsonl");
    let ds = load_dataset(&path, Format::Jsonl)?;
    let baselines = [
        Baseline::Io,
        Baseline::Cot,
        Baseline::ScCot { n_chains: DEFAULT_CHAINS },
        Baseline::Tot { breadth: DEFAULT_BREADTH, depth: DEFAULT_DEPTH },
    ];
    let truth: Vec<MentalState> = ds.records.iter().map(|r| r.label).collect();

    print!("{:<6} {:>5}", "record", "truth");
    for b in &baselines {
        print!(" {:>12}", b.name());
    }
    println!();
    let mut preds = vec![Vec::new(); baselines.len()];
    for r in &ds.records {
        print!("{:<6} {:>5}", r.record_id, r.label.ordinal());
        for (i, b) in baselines.iter().enumerate() {
            // a fresh simulator per strategy, as if each ran against its own session
            let llm = LexiconBackend::new();
            let mut cfg = StrategyConfig::new(*b);
            cfg.seed = Some(1);
            let out = run_baseline(r, &llm, &cfg)?;
            preds[i].push(out.label);
            print!(" {:>6} ({:>2}c)", out.label.ordinal(), out.calls.len());
        }
        println!();
    }
    for (b, p) in baselines.iter().zip(&preds) {
        println!("{:<7} weighted F1 {:6.2}%", b.name(), weighted_f1(p, &truth)?);
    }
    Ok(())
}
