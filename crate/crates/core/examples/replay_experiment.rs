//! Replays the shipped cassette through every strategy and prints the result
//! table. No model and no network are needed.
//!
//! Run with `cargo run --example replay_experiment [out_dir]`.

use std::path::{Path, PathBuf};

use rfot::runner::{run, RunConfig};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let fixtures = Path::new(env!("CARGO_MANIFEST_DIR")).join("fixtures");
    let mut cfg = RunConfig::load(&fixtures.join("synthetic_run.toml"))?;
    cfg.out = std::env::args()
        .nth(1)
        .map(PathBuf::from)
        .unwrap_or_else(|| std::env::temp_dir().join("rfot-replay"));
    let summary = run(&cfg)?;
    print!("{}", summary.report.to_table());
    for (strategy, r) in &summary.results {
        println!("{:<7} {} samples, {:.0}% of replies well-formed", strategy.display_name(), r.n_samples, r.consistency_pass_rate);
    }
    println!("traces and forests in {}", summary.out.display());
    Ok(())
}
