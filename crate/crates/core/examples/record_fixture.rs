//! Regenerates the shipped cassette by recording every strategy against the
//! built-in lexicon simulator, then replays it to check the two runs agree.
//!
//! Run with `cargo run --example record_fixture`.

use std::path::Path;

use rfot::runner::{run, RunConfig};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let fixtures = Path::new(env!("CARGO_MANIFEST_DIR")).join("fixtures");
    let cassette = fixtures.join("synthetic_cassette.json");
    let scratch = std::env::temp_dir().join("rfot-record-fixture");

    let mut cfg = RunConfig::load(&fixtures.join("synthetic_run.toml"))?;
    // start from an empty cassette so stale prompts do not linger
    if cassette.exists() {
        std::fs::remove_file(&cassette)?;
    }
    cfg.backend.url = Some("simulated://lexicon".into());
    cfg.backend.record = true;
    cfg.out = scratch.join("recorded");
    let recorded = run(&cfg)?;

    cfg.backend.url = None;
    cfg.backend.record = false;
    cfg.out = scratch.join("replayed");
    let replayed = run(&cfg)?;

    assert_eq!(recorded.results, replayed.results, "replay diverged from recording");
    print!("{}", replayed.report.to_table());
    println!("cassette written to {}", cassette.display());
    Ok(())
}
