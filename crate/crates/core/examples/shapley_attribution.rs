//! Shapley attribution, first on a three-player toy game (exact and sampled),
//! then on the thoughts generated for one survey record, where a coalition's
//! worth is whether its thoughts lead the model to the true level.
//!
//! Run with `cargo run --example shapley_attribution`.

use std::path::Path;

use rfot::icot::{run_icot, IcotConfig, Thought};
use rfot::llm::LexiconBackend;
use rfot::shapley::{exact_shapley, mc_shapley, shapley, top_k, CachedValue, Coalition, LabelAlignment};
use rfot::survey::{load_dataset, Format};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    // a glove game: player 0 holds a left glove, players 1 and 2 right gloves
    let players: Vec<String> = ["left", "right-a", "right-b"].map(String::from).to_vec();
    let glove = |c: Coalition| {
        let left = c.contains(0) as u8;
        let right = c.contains(1) as u8 + c.contains(2) as u8;
        left.min(right) as f64
    };
    let exact = exact_shapley(&glove, &players, 12)?;
    let sampled = mc_shapley(&glove, &players, 2_000, 7)?;
    println!("glove game      exact    sampled");
    for (i, id) in players.iter().enumerate() {
        println!("  {id:<10} {:>8.4} {:>10.4}", exact.values[i], sampled.values[i]);
    }

    let path = Path::new(env!("CARGO_MANIFEST_DIR")).join("fixtures/synthetic_survey.jsonl");
    let ds = load_dataset(&path, Format::Jsonl)?;
    let record = ds.get("s09").ok_or("fixture record missing")?;
    let llm = LexiconBackend::new();
    let config = IcotConfig {
        max_keywords: 1,
        ..IcotConfig::default()
    };
    let candidates = run_icot(record, &llm, &config)?;
    let steps: Vec<String> = candidates.thoughts.iter().map(Thought::step_text).collect();
    let vf = CachedValue::new(LabelAlignment::new(&llm, &record.record_id, steps, record.label));
    let iv = shapley(&vf, &candidates.ids(), 12, 200, 0)?;
    println!(
        "\n{} thoughts for {} (truth: {}), {} coalition prompts",
        iv.len(),
        record.record_id,
        record.label,
        vf.evaluations()
    );
    for (id, phi) in iv.iter() {
        println!("  {id:<24} {phi:>8.4}");
    }
    println!("top 3: {:?}", top_k(&iv, 3)?);
    Ok(())
}
