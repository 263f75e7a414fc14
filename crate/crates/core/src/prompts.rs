//! Prompt templates and reply parsing shared by every strategy.
//!
//! Templates live in `templates/*.txt` and use `{name}` placeholders. Each
//! reply kind has an output marker (`ASPECT:`, `LABEL:`, ...) and an
//! expected-format skeleton used by the consistency metric, where `{}`
//! stands for free text and `{n}` for a single level digit.

use crate::llm::{PromptRequest, EXTRACTION_TEMPERATURE};
use crate::survey::{MentalState, QaPair};

pub const TEMPLATE_VERSION: &str = "1";

pub const SYSTEM: &str = include_str!("../templates/system.txt");
pub const ASPECT: &str = include_str!("../templates/aspect.txt");
pub const KEYWORDS: &str = include_str!("../templates/keywords.txt");
pub const RESPONSE: &str = include_str!("../templates/response.txt");
pub const LABEL: &str = include_str!("../templates/label.txt");
pub const IO: &str = include_str!("../templates/io.txt");
pub const COT: &str = include_str!("../templates/cot.txt");
pub const TOT_VALUE: &str = include_str!("../templates/tot_value.txt");
pub const FORMAT_REMINDER: &str = include_str!("../templates/format_reminder.txt");

/// Expected output skeletons for the consistency metric.
pub mod formats {
    pub const ASPECT: &str = "ASPECT: {}";
    pub const KEYWORDS: &str = "KEYWORDS: {}";
    pub const RESPONSE: &str = "RESPONSE: {}";
    pub const LABEL: &str = "LABEL: {n}";
    pub const IO: &str = "{n}";
    pub const COT: &str = "{}\nFINAL: {n}";
    pub const TOT_VALUE: &str = "SCORE: {}";
}

pub fn system_prompt() -> &'static str {
    SYSTEM.trim_end()
}

/// Substitutes `{key}` placeholders. Unknown placeholders are left intact.
pub fn render(template: &str, vars: &[(&str, &str)]) -> String {
    let mut out = template.trim_end().to_string();
    for (key, value) in vars {
        out = out.replace(&format!("{{{key}}}"), value);
    }
    out
}

/// Appends the format reminder used when a reply lacks its marker.
pub fn with_reminder(prompt: &str, marker: &str) -> String {
    format!("{prompt}\n{}", render(FORMAT_REMINDER, &[("marker", marker)]))
}

/// One line per pair: `- [category] question -> answer`.
pub fn format_pairs<'a, I>(pairs: I) -> String
where
    I: IntoIterator<Item = &'a QaPair>,
{
    pairs
        .into_iter()
        .filter_map(|p| {
            p.answer
                .as_deref()
                .map(|a| format!("- [{}] {} -> {}", p.category, p.question, a))
        })
        .collect::<Vec<_>>()
        .join("\n")
}

/// Numbered steps, or `(none)` for an empty list.
pub fn format_steps<'a, I>(steps: I) -> String
where
    I: IntoIterator<Item = &'a str>,
{
    let lines: Vec<String> = steps
        .into_iter()
        .enumerate()
        .map(|(i, s)| format!("{}. {}", i + 1, s))
        .collect();
    if lines.is_empty() {
        "(none)".to_string()
    } else {
        lines.join("\n")
    }
}

/// Token budget for single-line label replies.
pub const LABEL_MAX_TOKENS: u32 = 32;

/// The label-extraction request over a list of reasoning steps. Shared by
/// thought attribution and forest trees so identical step lists produce
/// identical requests.
pub fn label_request<'a, I>(record_id: &str, steps: I) -> PromptRequest
where
    I: IntoIterator<Item = &'a str>,
{
    let user = render(LABEL, &[("record_id", record_id), ("steps", &format_steps(steps))]);
    PromptRequest::new(system_prompt(), user)
        .temperature(EXTRACTION_TEMPERATURE)
        .max_tokens(LABEL_MAX_TOKENS)
}

/// Content following `marker` on the line where it first occurs.
/// The marker match is ASCII case-insensitive.
pub fn after_marker<'a>(raw: &'a str, marker: &str) -> Option<&'a str> {
    let hay = raw.to_ascii_lowercase();
    let needle = marker.to_ascii_lowercase();
    let start = hay.find(&needle)? + needle.len();
    let rest = &raw[start..];
    let end = rest.find('\n').unwrap_or(rest.len());
    Some(rest[..end].trim())
}

/// Like [`after_marker`] but uses the last occurrence.
pub fn after_last_marker<'a>(raw: &'a str, marker: &str) -> Option<&'a str> {
    let hay = raw.to_ascii_lowercase();
    let needle = marker.to_ascii_lowercase();
    let start = hay.rfind(&needle)? + needle.len();
    let rest = &raw[start..];
    let end = rest.find('\n').unwrap_or(rest.len());
    Some(rest[..end].trim())
}

/// Lenient level extraction: the first standalone digit 1–5, otherwise the
/// first label name mentioned (longest names matched first).
pub fn extract_level(text: &str) -> Option<MentalState> {
    let chars: Vec<char> = text.chars().collect();
    for (i, c) in chars.iter().enumerate() {
        if let Some(d) = c.to_digit(10) {
            let before = i > 0 && chars[i - 1].is_ascii_digit();
            let after = chars.get(i + 1).is_some_and(|n| n.is_ascii_digit());
            if !before && !after && (1..=5).contains(&d) {
                return MentalState::from_ordinal(d as i64).ok();
            }
        }
    }
    let lower = text.to_lowercase();
    let words: Vec<&str> = lower
        .split(|c: char| !c.is_alphanumeric())
        .filter(|w| !w.is_empty())
        .collect();
    let mut by_len = MentalState::ALL;
    by_len.sort_by_key(|l| std::cmp::Reverse(l.name().len()));
    let mut best: Option<(usize, MentalState)> = None;
    for label in by_len {
        let name: Vec<&str> = label.name().split(' ').collect();
        if let Some(pos) = words.windows(name.len()).position(|w| w == name.as_slice()) {
            // a longer name starting one word earlier wins over its suffix
            if best.is_none_or(|(p, _)| pos < p) {
                best = Some((pos, label));
            }
        }
    }
    best.map(|(_, l)| l)
}

/// Level from a `LABEL:` reply; falls back to lenient extraction over the
/// whole reply when the marker is missing.
pub fn parse_label_reply(raw: &str) -> Option<MentalState> {
    match after_marker(raw, "LABEL:") {
        Some(content) => extract_level(content),
        None => extract_level(raw),
    }
}

/// Level from the `FINAL:` line of a chain-of-thought reply.
pub fn parse_final(raw: &str) -> Option<MentalState> {
    after_last_marker(raw, "FINAL:").and_then(extract_level)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn render_substitutes() {
        let s = render("a {x} b {y} {x}", &[("x", "1"), ("y", "2")]);
        assert_eq!(s, "a 1 b 2 1");
        assert_eq!(render("{missing}", &[]), "{missing}");
    }

    #[test]
    fn marker_extraction() {
        assert_eq!(after_marker("ASPECT: fine", "ASPECT:"), Some("fine"));
        assert_eq!(after_marker("sure!\naspect:  ok \nmore", "ASPECT:"), Some("ok"));
        assert_eq!(after_marker("RESPONSE: x", "KEYWORDS:"), None);
        assert_eq!(after_last_marker("FINAL: 2\nFINAL: 4", "FINAL:"), Some("4"));
    }

    #[test]
    fn lenient_levels() {
        assert_eq!(extract_level("4"), Some(MentalState::Happy));
        assert_eq!(extract_level("Label: 5"), Some(MentalState::VeryHappy));
        assert_eq!(extract_level("banana"), None);
        assert_eq!(extract_level("level 10"), None);
        assert_eq!(extract_level("very unhappy overall"), Some(MentalState::VeryUnhappy));
        assert_eq!(extract_level("seems unhappy"), Some(MentalState::Unhappy));
        assert_eq!(extract_level("rather happy"), Some(MentalState::Happy));
        assert_eq!(
            extract_level("economic security suggests happy (4)"),
            Some(MentalState::Happy)
        );
    }

    #[test]
    fn steps_numbering() {
        assert_eq!(format_steps(["a", "b"]), "1. a\n2. b");
        assert_eq!(format_steps(Vec::<&str>::new()), "(none)");
    }

    #[test]
    fn pairs_skip_unanswered() {
        let pairs = [
            QaPair::new(0, "c", "q0", Some("yes")),
            QaPair::new(1, "c", "q1", None),
        ];
        assert_eq!(format_pairs(&pairs), "- [c] q0 -> yes");
    }
}
