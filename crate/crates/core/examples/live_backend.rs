//! Sends one IO and one chain-of-thought prompt for a synthetic record to a
//! live OpenAI-compatible chat endpoint, e.g. a local model runner.
//!
//! Run with
//! `RFOT_URL=http://localhost:11434/v1/chat/completions RFOT_MODEL=llama3:8b cargo run --example live_backend`.
//! `OPENAI_API_KEY` is sent as a bearer token when set.

use std::path::Path;

use rfot::baselines::{cot_predict, io_predict, Baseline, StrategyConfig};
use rfot::llm::{OpenAiCompatible, OpenAiConfig};
use rfot::survey::{load_dataset, Format};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let (Ok(url), Ok(model)) = (std::env::var("RFOT_URL"), std::env::var("RFOT_MODEL")) else {
        eprintln!("set RFOT_URL and RFOT_MODEL to a chat-completions endpoint and model name");
        return Ok(());
    };
    let llm = OpenAiCompatible::new(OpenAiConfig {
        url,
        model,
        api_key: std::env::var("OPENAI_API_KEY").ok(),
        timeout_secs: 120,
    });

    let path = Path::new(env!("CARGO_MANIFEST_DIR")).join("fixtures/synthetic_survey.jsonl");
    let ds = load_dataset(&path, Format::Jsonl)?;
    let record = &ds.records[0];
    let io = io_predict(record, &llm, &StrategyConfig::new(Baseline::Io))?;
    let cot = cot_predict(record, &llm, &StrategyConfig::new(Baseline::Cot))?;
    for (name, out) in [("io", io), ("cot", cot)] {
        let c = &out.calls[0];
        println!("{name}: {} in {:.2}s, format consistency {:.2}", out.label, c.latency, c.consistency);
        println!("  {}", c.raw.replace('\n', "\n  "));
    }
    println!("truth: {}", record.label);
    Ok(())
}
