//! A deterministic, rule-based stand-in for a chat model.
//!
//! It recognises the reply marker each template asks for and answers from a
//! small sentiment lexicon over the evidence in the prompt. The first sample
//! of any prompt is noise-free; repeated samples of the same prompt at a
//! non-zero temperature may shift the final level by one, which gives
//! self-consistency voting something to do. Plain IO prompts are answered
//! from the first three answers only. Label requests over reasoning steps
//! count each evidence word once.
//!
//! This backend exists to generate offline fixtures and demos. It is not a
//! model of real respondents.

use std::collections::HashMap;
use std::sync::Mutex;

use sha2::{Digest, Sha256};

use super::{Completion, LlmBackend, LlmError, PromptRequest};
use crate::prompts::after_marker;
use crate::survey::MentalState;

const LEXICON: &[(&str, i32)] = &[
    ("satisfied", 2),
    ("happy", 2),
    ("excellent", 2),
    ("thriving", 2),
    ("stable", 1),
    ("secure", 1),
    ("healthy", 1),
    ("married", 1),
    ("enjoy", 1),
    ("good", 1),
    ("supportive", 1),
    ("comfortable", 1),
    ("rewarding", 1),
    ("optimistic", 1),
    ("close", 1),
    ("unhappy", -2),
    ("unemployed", -2),
    ("debt", -2),
    ("lonely", -2),
    ("struggling", -2),
    ("sick", -1),
    ("poor", -1),
    ("stressed", -1),
    ("divorced", -1),
    ("worried", -1),
    ("anxious", -1),
    ("isolated", -1),
    ("bad", -1),
    ("tired", -1),
];

fn weight(word: &str) -> Option<i32> {
    LEXICON.iter().find(|(w, _)| *w == word).map(|&(_, s)| s)
}

fn words(text: &str) -> impl Iterator<Item = String> + '_ {
    text.split(|c: char| !c.is_alphanumeric())
        .filter(|w| !w.is_empty())
        .map(str::to_lowercase)
}

fn score(text: &str) -> i32 {
    words(text).filter_map(|w| weight(&w)).sum()
}

/// Score of the distinct lexicon words in reasoning steps, ignoring the
/// level a judgement names after "suggests".
fn evidence(steps: &str) -> i32 {
    let mut seen: Vec<String> = Vec::new();
    for line in steps.lines() {
        let line = line.split(" suggests ").next().unwrap_or("");
        for w in words(line) {
            if weight(&w).is_some() && !seen.contains(&w) {
                seen.push(w);
            }
        }
    }
    seen.iter().filter_map(|w| weight(w)).sum()
}

fn level_for(score: i32) -> MentalState {
    match score {
        i32::MIN..=-4 => MentalState::VeryUnhappy,
        -3..=-1 => MentalState::Unhappy,
        0 => MentalState::Neutral,
        1..=3 => MentalState::Happy,
        _ => MentalState::VeryHappy,
    }
}

fn shift(level: MentalState, by: i64) -> MentalState {
    MentalState::from_ordinal((level.ordinal() as i64 + by).clamp(1, 5)).expect("clamped")
}

/// Lines of the form `- [category] question -> answer`.
fn answers(prompt: &str) -> Vec<(String, String)> {
    prompt
        .lines()
        .filter_map(|l| {
            let rest = l.strip_prefix("- [")?;
            let (cat, rest) = rest.split_once("] ")?;
            let (_, answer) = rest.rsplit_once(" -> ")?;
            Some((cat.to_string(), answer.trim().to_string()))
        })
        .collect()
}

/// Text between `header` and the next blank line.
fn section<'a>(prompt: &'a str, header: &str) -> &'a str {
    let Some(start) = prompt.find(header) else {
        return "";
    };
    let body = &prompt[start + header.len()..];
    let end = body.find("\n\n").unwrap_or(body.len());
    &body[..end]
}

fn quoted_category(prompt: &str) -> String {
    prompt
        .split('"')
        .nth(1)
        .unwrap_or("general")
        .to_string()
}

pub struct LexiconBackend {
    occurrences: Mutex<HashMap<String, u64>>,
}

impl Default for LexiconBackend {
    fn default() -> Self {
        Self::new()
    }
}

impl LexiconBackend {
    pub fn new() -> Self {
        Self {
            occurrences: Mutex::new(HashMap::new()),
        }
    }

    /// Level shift for the `n`th sample of a prompt.
    fn noise(&self, req: &PromptRequest, fingerprint: &str) -> i64 {
        let n = {
            let mut occ = self.occurrences.lock().expect("occurrence lock");
            let slot = occ.entry(fingerprint.to_string()).or_insert(0);
            let n = *slot;
            *slot += 1;
            n
        };
        if n == 0 || req.temperature == 0.0 {
            return 0;
        }
        let digest = Sha256::digest(format!("{fingerprint}:{n}").as_bytes());
        match digest[0] % 5 {
            0 => -1,
            1 => 1,
            _ => 0,
        }
    }

    fn respond(&self, req: &PromptRequest) -> String {
        let p = &req.user;
        let fp = req.fingerprint();
        if p.contains("ASPECT: <") {
            let found: Vec<String> = answers(p).into_iter().map(|(_, a)| a).collect();
            format!("ASPECT: respondent reports {}", found.join("; "))
        } else if p.contains("KEYWORDS: <") {
            let aspect = after_marker(p, "Aspect analysis:").unwrap_or("");
            let limit = p
                .split("at most ")
                .nth(1)
                .and_then(|s| s.split_whitespace().next())
                .and_then(|n| n.parse::<usize>().ok())
                .unwrap_or(3);
            let mut kws: Vec<String> = Vec::new();
            for w in words(aspect) {
                if weight(&w).is_some() && !kws.contains(&w) {
                    kws.push(w);
                }
            }
            kws.truncate(limit);
            if kws.is_empty() {
                kws.push("indifferent".into());
            }
            format!("KEYWORDS: {}", kws.join(", "))
        } else if p.contains("RESPONSE: <") {
            let kw = after_marker(p, "Emotional keyword:").unwrap_or("");
            let level = level_for(score(kw));
            format!(
                "RESPONSE: feeling {kw} about {} suggests {} ({})",
                quoted_category(p),
                level.name(),
                level.ordinal()
            )
        } else if p.contains("LABEL: <") {
            format!("LABEL: {}", level_for(evidence(section(p, "Reasoning steps:\n"))).ordinal())
        } else if p.contains("SCORE: <") {
            let candidate = section(p, "Candidate reasoning:\n");
            let hits = words(candidate).filter(|w| weight(w).is_some()).count() as i64;
            format!("SCORE: {}", (3 + hits).min(10))
        } else if p.contains("FINAL: <") {
            let found = answers(p);
            let total: i32 = found.iter().map(|(_, a)| score(a)).sum();
            let level = shift(level_for(total), self.noise(req, &fp));
            let mut lines: Vec<String> = found
                .iter()
                .map(|(c, a)| format!("The answer \"{a}\" on {c} matters."))
                .collect();
            lines.push(format!("FINAL: {}", level.ordinal()));
            lines.join("\n")
        } else if p.contains("single digit") {
            let total: i32 = answers(p).iter().take(3).map(|(_, a)| score(a)).sum();
            level_for(total).ordinal().to_string()
        } else {
            "I am not sure what you are asking.".to_string()
        }
    }
}

impl LlmBackend for LexiconBackend {
    fn id(&self) -> &str {
        "lexicon-sim"
    }

    fn complete(&self, req: &PromptRequest) -> Result<Completion, LlmError> {
        req.validate()?;
        Ok(Completion {
            text: self.respond(req),
            latency: 0.0,
            backend_id: self.id().to_string(),
        })
    }
}
