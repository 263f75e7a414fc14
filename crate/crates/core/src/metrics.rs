//! Evaluation metrics: success rate, weighted F1, format consistency and
//! per-sample runtime.

use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::survey::MentalState;

#[derive(Debug, Error, PartialEq)]
pub enum MetricsError {
    #[error("length mismatch: {predictions} predictions vs {truth} labels")]
    Shape { predictions: usize, truth: usize },
    #[error("no samples to evaluate")]
    Empty,
}

/// Unit-cost edit distance over Unicode scalar values.
pub fn levenshtein(a: &str, b: &str) -> usize {
    let a: Vec<char> = a.chars().collect();
    let b: Vec<char> = b.chars().collect();
    if a.is_empty() {
        return b.len();
    }
    let mut prev: Vec<usize> = (0..=b.len()).collect();
    let mut cur = vec![0; b.len() + 1];
    for (i, ca) in a.iter().enumerate() {
        cur[0] = i + 1;
        for (j, cb) in b.iter().enumerate() {
            let sub = prev[j] + usize::from(ca != cb);
            cur[j + 1] = sub.min(prev[j + 1] + 1).min(cur[j] + 1);
        }
        std::mem::swap(&mut prev, &mut cur);
    }
    prev[b.len()]
}

/// `1 - dist(g, e) / max(|g|, |e|)`, with lengths in chars. Two empty
/// strings agree perfectly.
pub fn consistency(generated: &str, expected: &str) -> f64 {
    let longest = generated.chars().count().max(expected.chars().count());
    if longest == 0 {
        return 1.0;
    }
    1.0 - levenshtein(generated, expected) as f64 / longest as f64
}

const FREE_MASK: &str = "\u{25a1}";
const LEVEL_MASK: &str = "#";

#[derive(Debug, PartialEq)]
enum Segment<'a> {
    Literal(&'a str),
    Free,
    Level,
}

fn segments(template: &str) -> Vec<Segment<'_>> {
    let mut out = Vec::new();
    let mut rest = template;
    loop {
        let free = rest.find("{}");
        let level = rest.find("{n}");
        let next = match (free, level) {
            (Some(f), Some(l)) if l < f => Some((l, 3, Segment::Level)),
            (Some(f), _) => Some((f, 2, Segment::Free)),
            (None, Some(l)) => Some((l, 3, Segment::Level)),
            (None, None) => None,
        };
        match next {
            Some((at, len, seg)) => {
                if at > 0 {
                    out.push(Segment::Literal(&rest[..at]));
                }
                out.push(seg);
                rest = &rest[at + len..];
            }
            None => {
                if !rest.is_empty() {
                    out.push(Segment::Literal(rest));
                }
                return out;
            }
        }
    }
}

fn mask_slot(slot: Option<&Segment<'_>>, content: &str, out: &mut String) {
    match slot {
        Some(Segment::Free) => {
            if !content.trim().is_empty() {
                out.push_str(FREE_MASK);
            }
        }
        Some(Segment::Level) => {
            let t = content.trim();
            let is_level = t.len() == 1 && t.chars().all(|c| ('1'..='5').contains(&c));
            out.push_str(if is_level { LEVEL_MASK } else { content });
        }
        _ => out.push_str(content),
    }
}

/// Structural skeletons of a reply and its expected format.
///
/// Template `{}` slots match any non-empty text and `{n}` a single level
/// digit; matched content is replaced by a mask symbol on both sides so only
/// the format is compared. Text the template does not account for is kept
/// verbatim.
pub fn skeletons(generated: &str, template: &str) -> (String, String) {
    let segs = segments(template);
    let mut expected = String::new();
    for s in &segs {
        match s {
            Segment::Literal(l) => expected.push_str(l),
            Segment::Free => expected.push_str(FREE_MASK),
            Segment::Level => expected.push_str(LEVEL_MASK),
        }
    }

    let text = generated.trim();
    let mut out = String::new();
    let mut pos = 0;
    let mut pending: Option<&Segment<'_>> = None;
    for seg in &segs {
        match seg {
            Segment::Literal(lit) => match text[pos..].find(lit) {
                Some(at) => {
                    mask_slot(pending.take(), &text[pos..pos + at], &mut out);
                    out.push_str(lit);
                    pos += at + lit.len();
                }
                None => {
                    out.push_str(&text[pos..]);
                    return (out, expected);
                }
            },
            slot => pending = Some(slot),
        }
    }
    mask_slot(pending, &text[pos..], &mut out);
    (out, expected)
}

/// Consistency of a reply against an expected-format template.
pub fn format_consistency(generated: &str, template: &str) -> f64 {
    let (g, e) = skeletons(generated, template);
    consistency(&g, &e)
}

fn check_shape<T, U>(preds: &[T], truth: &[U]) -> Result<(), MetricsError> {
    if preds.len() != truth.len() {
        return Err(MetricsError::Shape {
            predictions: preds.len(),
            truth: truth.len(),
        });
    }
    if preds.is_empty() {
        return Err(MetricsError::Empty);
    }
    Ok(())
}

/// Exact-match accuracy in percent.
pub fn success_rate(preds: &[MentalState], truth: &[MentalState]) -> Result<f64, MetricsError> {
    let preds: Vec<Option<MentalState>> = preds.iter().copied().map(Some).collect();
    success_rate_partial(&preds, truth)
}

/// Weighted F1 in percent: per-class F1 weighted by true-class support.
pub fn weighted_f1(preds: &[MentalState], truth: &[MentalState]) -> Result<f64, MetricsError> {
    let preds: Vec<Option<MentalState>> = preds.iter().copied().map(Some).collect();
    weighted_f1_partial(&preds, truth)
}

/// Success rate where a missing prediction counts as wrong.
pub fn success_rate_partial(
    preds: &[Option<MentalState>],
    truth: &[MentalState],
) -> Result<f64, MetricsError> {
    check_shape(preds, truth)?;
    let hits = preds
        .iter()
        .zip(truth)
        .filter(|(p, t)| **p == Some(**t))
        .count();
    Ok(100.0 * hits as f64 / truth.len() as f64)
}

/// Weighted F1 where a missing prediction is a false negative for its true
/// class and a false positive for none.
pub fn weighted_f1_partial(
    preds: &[Option<MentalState>],
    truth: &[MentalState],
) -> Result<f64, MetricsError> {
    check_shape(preds, truth)?;
    let classes: BTreeSet<MentalState> = truth.iter().copied().collect();
    let n = truth.len() as f64;
    let mut total = 0.0;
    for c in classes {
        let (mut tp, mut fp, mut fn_) = (0usize, 0usize, 0usize);
        for (p, t) in preds.iter().zip(truth) {
            match (*p == Some(c), *t == c) {
                (true, true) => tp += 1,
                (true, false) => fp += 1,
                (false, true) => fn_ += 1,
                (false, false) => {}
            }
        }
        let support = (tp + fn_) as f64;
        let denom = (2 * tp + fp + fn_) as f64;
        let f1 = if denom == 0.0 { 0.0 } else { 2.0 * tp as f64 / denom };
        total += f1 * support / n;
    }
    Ok(100.0 * total)
}

/// One evaluated sample.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SampleOutcome {
    pub prediction: Option<MentalState>,
    pub truth: MentalState,
    pub runtime: f64,
    /// Mean format consistency of the sample's replies, in [0, 1].
    pub consistency: f64,
}

/// Consistency scores at or above this count as passing.
pub const CONSISTENCY_PASS_THRESHOLD: f64 = 0.9;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalResult {
    pub success_rate: f64,
    pub weighted_f1: f64,
    pub mean_runtime: f64,
    /// Mean per-sample consistency, in percent.
    pub consistency: f64,
    /// Share of samples with consistency ≥ 0.9, in percent.
    pub consistency_pass_rate: f64,
    pub n_samples: usize,
}

pub fn evaluate(samples: &[SampleOutcome]) -> Result<EvalResult, MetricsError> {
    if samples.is_empty() {
        return Err(MetricsError::Empty);
    }
    let n = samples.len() as f64;
    let preds: Vec<Option<MentalState>> = samples.iter().map(|s| s.prediction).collect();
    let truth: Vec<MentalState> = samples.iter().map(|s| s.truth).collect();
    let passing = samples
        .iter()
        .filter(|s| s.consistency >= CONSISTENCY_PASS_THRESHOLD)
        .count();
    Ok(EvalResult {
        success_rate: success_rate_partial(&preds, &truth)?,
        weighted_f1: weighted_f1_partial(&preds, &truth)?,
        mean_runtime: samples.iter().map(|s| s.runtime).sum::<f64>() / n,
        consistency: 100.0 * samples.iter().map(|s| s.consistency).sum::<f64>() / n,
        consistency_pass_rate: 100.0 * passing as f64 / n,
        n_samples: samples.len(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use MentalState::*;

    #[test]
    fn levenshtein_cases() {
        assert_eq!(levenshtein("", "abc"), 3);
        assert_eq!(levenshtein("abc", ""), 3);
        assert_eq!(levenshtein("kitten", "sitting"), 3);
        assert_eq!(levenshtein("flaw", "lawn"), 2);
        assert_eq!(levenshtein("same", "same"), 0);
        // scalar values, not bytes
        assert_eq!(levenshtein("héllo", "hello"), 1);
    }

    #[test]
    fn consistency_cases() {
        assert_eq!(consistency("abc", "abc"), 1.0);
        assert_eq!(consistency("", ""), 1.0);
        assert!((consistency("kitten", "sitting") - 4.0 / 7.0).abs() < 1e-12);
        assert_eq!(consistency("abc", "xyz"), 0.0);
    }

    #[test]
    fn templated_replies_are_fully_consistent() {
        assert_eq!(format_consistency("ASPECT: fine", "ASPECT: {}"), 1.0);
        assert_eq!(format_consistency("LABEL: 4", "LABEL: {n}"), 1.0);
        assert_eq!(format_consistency("4", "{n}"), 1.0);
        assert_eq!(
            format_consistency("step one\nstep two\nFINAL: 2", "{}\nFINAL: {n}"),
            1.0
        );
    }

    #[test]
    fn deviations_lower_consistency() {
        let chatty = format_consistency("Sure! ASPECT: fine", "ASPECT: {}");
        assert!(chatty < 1.0 && chatty > 0.0);
        assert!(format_consistency("Label: 5", "{n}") < 0.5);
        assert!(format_consistency("LABEL: ten", "LABEL: {n}") < 1.0);
        assert!(format_consistency("no marker here", "RESPONSE: {}") < 0.5);
        let (g, e) = skeletons("RESPONSE: ", "RESPONSE: {}");
        assert_ne!(g, e);
    }

    #[test]
    fn success_rate_cases() {
        let truth = vec![Happy; 102];
        assert_eq!(success_rate(&truth, &truth).unwrap(), 100.0);
        assert_eq!(success_rate(&[Unhappy; 102], &truth).unwrap(), 0.0);
        let mut half = vec![Happy; 51];
        half.extend(vec![Neutral; 51]);
        assert_eq!(success_rate(&half, &truth).unwrap(), 50.0);
        assert!(matches!(
            success_rate(&[Happy], &[Happy, Happy]),
            Err(MetricsError::Shape { .. })
        ));
    }

    #[test]
    fn weighted_f1_hand_fixture() {
        // class 4: tp 1, fn 1 -> 2/3; class 2: tp 2, fp 1 -> 4/5; weights 1/2 each
        let truth = [Happy, Happy, Unhappy, Unhappy];
        let preds = [Happy, Unhappy, Unhappy, Unhappy];
        let expected = 100.0 * (0.5 * 2.0 / 3.0 + 0.5 * 0.8);
        let got = weighted_f1(&preds, &truth).unwrap();
        assert!((got - expected).abs() < 1e-9);
        assert!((got - 73.33).abs() < 0.01);
        assert_eq!(weighted_f1(&truth, &truth).unwrap(), 100.0);
    }

    #[test]
    fn missing_predictions_are_misses() {
        let truth = [Happy, Neutral];
        let preds = [Some(Happy), None];
        assert_eq!(success_rate_partial(&preds, &truth).unwrap(), 50.0);
        assert!((weighted_f1_partial(&preds, &truth).unwrap() - 50.0).abs() < 1e-9);
    }

    #[test]
    fn evaluate_singleton() {
        let r = evaluate(&[SampleOutcome {
            prediction: Some(Happy),
            truth: Happy,
            runtime: 3.39,
            consistency: 1.0,
        }])
        .unwrap();
        assert_eq!(
            (r.success_rate, r.weighted_f1, r.mean_runtime, r.consistency),
            (100.0, 100.0, 3.39, 100.0)
        );
        assert_eq!(evaluate(&[]), Err(MetricsError::Empty));
    }

    #[test]
    fn evaluate_means() {
        let mk = |runtime, consistency| SampleOutcome {
            prediction: Some(Neutral),
            truth: Neutral,
            runtime,
            consistency,
        };
        let r = evaluate(&[mk(1.0, 1.0), mk(2.0, 0.5), mk(6.0, 0.95)]).unwrap();
        assert!((r.mean_runtime - 3.0).abs() < 1e-12);
        assert!((r.consistency - 100.0 * 2.45 / 3.0).abs() < 1e-9);
        assert!((r.consistency_pass_rate - 200.0 / 3.0).abs() < 1e-9);
    }

    fn label() -> impl Strategy<Value = MentalState> {
        (1i64..=5).prop_map(|o| MentalState::from_ordinal(o).unwrap())
    }

    proptest! {
        #[test]
        fn consistency_bounded_and_symmetric(a in ".{0,20}", b in ".{0,20}") {
            let c = consistency(&a, &b);
            prop_assert!((0.0..=1.0).contains(&c));
            prop_assert_eq!(c, consistency(&b, &a));
            prop_assert_eq!(c == 1.0, a == b);
        }

        #[test]
        fn levenshtein_triangle(a in "[a-d]{0,20}", b in "[a-d]{0,20}", c in "[a-d]{0,20}") {
            prop_assert!(levenshtein(&a, &c) <= levenshtein(&a, &b) + levenshtein(&b, &c));
        }

        #[test]
        fn f1_permutation_invariant(pairs in prop::collection::vec((label(), label()), 1..30), seed in any::<u64>()) {
            use rand::seq::SliceRandom;
            use rand::SeedableRng;
            let mut shuffled = pairs.clone();
            shuffled.shuffle(&mut rand_chacha::ChaCha8Rng::seed_from_u64(seed));
            let split = |v: &[(MentalState, MentalState)]| -> (Vec<MentalState>, Vec<MentalState>) {
                v.iter().copied().unzip()
            };
            let (p1, t1) = split(&pairs);
            let (p2, t2) = split(&shuffled);
            let a = weighted_f1(&p1, &t1).unwrap();
            let b = weighted_f1(&p2, &t2).unwrap();
            prop_assert!((a - b).abs() < 1e-9);
            let s = success_rate(&p1, &t1).unwrap();
            prop_assert!(s <= 100.0 && a <= 100.0 + 1e-9);
        }

        #[test]
        fn perfect_predictions_agree(truth in prop::collection::vec(label(), 1..30)) {
            prop_assert_eq!(success_rate(&truth, &truth).unwrap(), 100.0);
            prop_assert!((weighted_f1(&truth, &truth).unwrap() - 100.0).abs() < 1e-9);
        }
    }
}
