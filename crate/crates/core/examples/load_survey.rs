//! Loads the shipped synthetic survey, prints its label statistics and shows
//! how skip logic shortens a record's effective question list.
//!
//! Run with `cargo run --example load_survey [path/to/survey.jsonl|.csv]`.

use std::path::PathBuf;

use rfot::survey::{dataset_stats, load_dataset, Format, MentalState};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let path = std::env::args().nth(1).map(PathBuf::from).unwrap_or_else(|| {
        PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("fixtures/synthetic_survey.jsonl")
    });
    let format = Format::from_path(&path).ok_or("expected a .jsonl or .csv file")?;
    let ds = load_dataset(&path, format)?;
    let stats = dataset_stats(&ds)?;

    println!("{}: {} records, {} turns per record", ds.name, stats.records, stats.turns_per_record);
    for label in MentalState::ALL {
        println!("  {} {:<13} {}", label.ordinal(), label.name(), stats.count(label));
    }

    for r in &ds.records {
        let skipped: Vec<&str> = r
            .pairs
            .iter()
            .filter(|p| !p.is_answered())
            .map(|p| p.question.as_str())
            .collect();
        if !skipped.is_empty() {
            println!(
                "{}: {} of {} questions answered; skipped {:?}",
                r.record_id,
                r.effective_pairs().len(),
                r.pairs.len(),
                skipped
            );
        }
    }
    Ok(())
}
