//! Format consistency of model replies against their templates, and the
//! success-rate / weighted-F1 / runtime summary used in result tables.
//!
//! Run with `cargo run --example metrics_consistency`.

use rfot::metrics::{consistency, evaluate, format_consistency, levenshtein, success_rate, weighted_f1, SampleOutcome};
use rfot::prompts::formats;
use rfot::survey::MentalState::*;

fn main() -> Result<(), Box<dyn std::error::Error>> {
    println!(
        "edit distance kitten/sitting = {}, consistency = {:.4}",
        levenshtein("kitten", "sitting"),
        consistency("kitten", "sitting")
    );

    let replies = [
        (formats::LABEL, "LABEL: 4"),
        (formats::LABEL, "label - four"),
        (formats::COT, "Income is stable.\nFINAL: 4"),
        (formats::COT, "I would say happy overall"),
        (formats::ASPECT, "ASPECT: secure job, steady pay"),
    ];
    for (template, reply) in replies {
        println!("{:<30} vs {:<22} {:.3}", format!("{reply:?}"), format!("{template:?}"), format_consistency(reply, template));
    }

    let truth = [Happy, Happy, Unhappy, Unhappy];
    let preds = [Happy, Unhappy, Unhappy, Unhappy];
    println!(
        "\nsuccess {:.2}%, weighted F1 {:.2}%",
        success_rate(&preds, &truth)?,
        weighted_f1(&preds, &truth)?
    );

    let samples: Vec<SampleOutcome> = truth
        .iter()
        .zip(preds)
        .enumerate()
        .map(|(i, (&t, p))| SampleOutcome {
            prediction: (i != 3).then_some(p),
            truth: t,
            runtime: 0.5 + i as f64,
            consistency: 0.85 + 0.05 * i as f64,
        })
        .collect();
    let e = evaluate(&samples)?;
    println!(
        "with one missing answer: success {:.2}%, weighted F1 {:.2}%, runtime {:.2}s, consistency {:.2}% ({:.0}% of samples ≥ 90%)",
        e.success_rate, e.weighted_f1, e.mean_runtime, e.consistency, e.consistency_pass_rate
    );
    Ok(())
}
