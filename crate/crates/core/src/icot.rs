//! Iterative chain-of-thought candidate generation.
//!
//! For every answered category of a record the backend is asked, in turn,
//! for an aspect analysis, emotional keywords drawn from that analysis, and
//! a response-level judgement built on the first keyword. Each level only
//! sees the previous level's parsed output. All three levels become
//! candidate thoughts.

use std::fmt;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::llm::{LlmBackend, LlmError, PromptRequest, GENERATION_TEMPERATURE};
use crate::metrics::format_consistency;
use crate::prompts::{self, formats};
use crate::survey::{QaPair, SurveyRecord};

#[derive(Debug, Error)]
pub enum IcotError {
    #[error("category {0:?} has no answered questions")]
    NoAnsweredPairs(String),
    #[error("expected a {expected} thought, got {got}")]
    WrongLevel { expected: ThoughtLevel, got: ThoughtLevel },
    #[error("missing {marker} marker in reply")]
    Parse { marker: &'static str },
    #[error("reply has a {marker} marker but no usable content")]
    EmptyContent { marker: &'static str },
    #[error("{level} generation for category {category:?} failed after {attempts} attempts")]
    Generation {
        level: ThoughtLevel,
        category: String,
        attempts: usize,
    },
    #[error("every category of record {0} failed generation")]
    EmptyCandidates(String),
    #[error(transparent)]
    Backend(#[from] LlmError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ThoughtLevel {
    Aspect,
    Keyword,
    Response,
}

impl ThoughtLevel {
    pub fn marker(self) -> &'static str {
        match self {
            Self::Aspect => "ASPECT:",
            Self::Keyword => "KEYWORDS:",
            Self::Response => "RESPONSE:",
        }
    }

    pub fn format(self) -> &'static str {
        match self {
            Self::Aspect => formats::ASPECT,
            Self::Keyword => formats::KEYWORDS,
            Self::Response => formats::RESPONSE,
        }
    }

    pub fn parent(self) -> Option<ThoughtLevel> {
        match self {
            Self::Aspect => None,
            Self::Keyword => Some(Self::Aspect),
            Self::Response => Some(Self::Keyword),
        }
    }
}

impl fmt::Display for ThoughtLevel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Self::Aspect => "aspect",
            Self::Keyword => "keyword",
            Self::Response => "response",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Thought {
    pub id: String,
    pub level: ThoughtLevel,
    pub category: String,
    pub text: String,
    pub parent_id: Option<String>,
    pub importance: Option<f64>,
}

impl Thought {
    /// The line used for this thought inside reasoning prompts.
    pub fn step_text(&self) -> String {
        format!("[{}] {}: {}", self.category, self.level, self.text)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "status", rename_all = "snake_case")]
pub enum ParseStatus {
    Parsed,
    Rejected { reason: String },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GenerationEntry {
    pub fingerprint: String,
    pub category: String,
    pub level: ThoughtLevel,
    pub attempt: usize,
    pub raw: String,
    pub consistency: f64,
    #[serde(flatten)]
    pub status: ParseStatus,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CandidateThoughts {
    pub record_id: String,
    /// Grouped by category (sorted), aspect first, then keywords, then the
    /// response.
    pub thoughts: Vec<Thought>,
    pub generation_log: Vec<GenerationEntry>,
    pub failed_categories: Vec<String>,
}

impl CandidateThoughts {
    pub fn get(&self, id: &str) -> Option<&Thought> {
        self.thoughts.iter().find(|t| t.id == id)
    }

    pub fn ids(&self) -> Vec<String> {
        self.thoughts.iter().map(|t| t.id.clone()).collect()
    }

    pub fn len(&self) -> usize {
        self.thoughts.len()
    }

    pub fn is_empty(&self) -> bool {
        self.thoughts.is_empty()
    }

    pub fn categories(&self) -> Vec<&str> {
        let mut out: Vec<&str> = self.thoughts.iter().map(|t| t.category.as_str()).collect();
        out.dedup();
        out
    }

    /// Checks parent links and category closure against `record`.
    pub fn check(&self, record: &SurveyRecord) -> Result<(), String> {
        let cats = record.categories();
        for t in &self.thoughts {
            if !cats.contains(&t.category.as_str()) {
                return Err(format!("{} has foreign category {}", t.id, t.category));
            }
            match (t.level.parent(), &t.parent_id) {
                (None, None) => {}
                (Some(expected), Some(pid)) => {
                    let parent = self.get(pid).ok_or(format!("{} has dangling parent", t.id))?;
                    if parent.level != expected || parent.category != t.category {
                        return Err(format!("{} has a bad parent {}", t.id, pid));
                    }
                }
                _ => return Err(format!("{} parent presence does not match level", t.id)),
            }
        }
        for c in cats {
            let has_aspect = self
                .thoughts
                .iter()
                .any(|t| t.category == c && t.level == ThoughtLevel::Aspect);
            if !has_aspect && !self.failed_categories.iter().any(|f| f == c) {
                return Err(format!("category {c} has neither thoughts nor a logged failure"));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct IcotConfig {
    pub max_keywords: usize,
    /// Re-asks after a reply fails to parse.
    pub parse_retries: usize,
    pub temperature: f64,
    pub max_tokens: u32,
}

impl Default for IcotConfig {
    fn default() -> Self {
        Self {
            max_keywords: 3,
            parse_retries: 2,
            temperature: GENERATION_TEMPERATURE,
            max_tokens: 256,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ParsedThought {
    pub content: String,
    /// Format consistency of the raw reply against the level's template.
    pub consistency: f64,
}

/// Extracts the content after the level's marker.
pub fn parse_thought(raw: &str, level: ThoughtLevel) -> Result<ParsedThought, IcotError> {
    let marker = level.marker();
    let content = prompts::after_marker(raw, marker).ok_or(IcotError::Parse { marker })?;
    if content.is_empty() {
        return Err(IcotError::EmptyContent { marker });
    }
    Ok(ParsedThought {
        content: content.to_string(),
        consistency: format_consistency(raw, level.format()),
    })
}

/// Splits a keyword list and removes case-insensitive duplicates.
pub fn split_keywords(content: &str, max: usize) -> Vec<String> {
    let mut out: Vec<String> = Vec::new();
    for kw in content.split([',', ';']) {
        let kw = kw.trim().trim_matches(|c: char| c == '.' || c == '"' || c == '\'').trim();
        if kw.is_empty() || out.iter().any(|k| k.eq_ignore_ascii_case(kw)) {
            continue;
        }
        out.push(kw.to_string());
    }
    out.truncate(max);
    out
}

fn slug(category: &str) -> String {
    category.trim().replace(char::is_whitespace, "_")
}

/// One record's generator. Holds the backend and settings; every method
/// appends its attempts to the caller's log.
pub struct Icot<'a, B: ?Sized> {
    llm: &'a B,
    config: &'a IcotConfig,
    record_id: &'a str,
}

impl<'a, B: LlmBackend + ?Sized> Icot<'a, B> {
    pub fn new(llm: &'a B, config: &'a IcotConfig, record_id: &'a str) -> Self {
        Self {
            llm,
            config,
            record_id,
        }
    }

    fn request(&self, user: String) -> PromptRequest {
        PromptRequest::new(prompts::system_prompt(), user)
            .temperature(self.config.temperature)
            .max_tokens(self.config.max_tokens)
    }

    /// Asks until `accept` succeeds or retries run out.
    fn ask<T>(
        &self,
        prompt: String,
        level: ThoughtLevel,
        category: &str,
        log: &mut Vec<GenerationEntry>,
        accept: impl Fn(ParsedThought) -> Result<T, IcotError>,
    ) -> Result<T, IcotError> {
        let attempts = 1 + self.config.parse_retries;
        for attempt in 0..attempts {
            let user = if attempt == 0 {
                prompt.clone()
            } else {
                prompts::with_reminder(&prompt, level.marker())
            };
            let req = self.request(user);
            let raw = self.llm.complete(&req)?.text;
            let consistency = format_consistency(&raw, level.format());
            let outcome = parse_thought(&raw, level).and_then(&accept);
            let status = match &outcome {
                Ok(_) => ParseStatus::Parsed,
                Err(e) => ParseStatus::Rejected {
                    reason: e.to_string(),
                },
            };
            log.push(GenerationEntry {
                fingerprint: req.fingerprint(),
                category: category.to_string(),
                level,
                attempt,
                raw,
                consistency,
                status,
            });
            if let Ok(v) = outcome {
                return Ok(v);
            }
        }
        Err(IcotError::Generation {
            level,
            category: category.to_string(),
            attempts,
        })
    }

    pub fn generate_aspect(
        &self,
        category: &str,
        pairs: &[&QaPair],
        log: &mut Vec<GenerationEntry>,
    ) -> Result<Thought, IcotError> {
        let answered: Vec<&QaPair> = pairs
            .iter()
            .copied()
            .filter(|p| p.category == category && p.is_answered())
            .collect();
        if answered.is_empty() {
            return Err(IcotError::NoAnsweredPairs(category.to_string()));
        }
        let prompt = prompts::render(
            prompts::ASPECT,
            &[
                ("record_id", self.record_id),
                ("category", category),
                ("pairs", &prompts::format_pairs(answered)),
            ],
        );
        let text = self.ask(prompt, ThoughtLevel::Aspect, category, log, |p| Ok(p.content))?;
        Ok(Thought {
            id: format!("{}/aspect", slug(category)),
            level: ThoughtLevel::Aspect,
            category: category.to_string(),
            text,
            parent_id: None,
            importance: None,
        })
    }

    pub fn extract_keywords(
        &self,
        aspect: &Thought,
        log: &mut Vec<GenerationEntry>,
    ) -> Result<Vec<Thought>, IcotError> {
        if aspect.level != ThoughtLevel::Aspect {
            return Err(IcotError::WrongLevel {
                expected: ThoughtLevel::Aspect,
                got: aspect.level,
            });
        }
        let max = self.config.max_keywords.max(1);
        let prompt = prompts::render(
            prompts::KEYWORDS,
            &[
                ("record_id", self.record_id),
                ("category", &aspect.category),
                ("aspect", &aspect.text),
                ("max_keywords", &max.to_string()),
            ],
        );
        let keywords = self.ask(prompt, ThoughtLevel::Keyword, &aspect.category, log, |p| {
            let kws = split_keywords(&p.content, max);
            if kws.is_empty() {
                Err(IcotError::EmptyContent { marker: "KEYWORDS:" })
            } else {
                Ok(kws)
            }
        })?;
        Ok(keywords
            .into_iter()
            .enumerate()
            .map(|(i, kw)| Thought {
                id: format!("{}/keyword/{}", slug(&aspect.category), i + 1),
                level: ThoughtLevel::Keyword,
                category: aspect.category.clone(),
                text: kw,
                parent_id: Some(aspect.id.clone()),
                importance: None,
            })
            .collect())
    }

    pub fn generate_response(
        &self,
        aspect: &Thought,
        keyword: &Thought,
        log: &mut Vec<GenerationEntry>,
    ) -> Result<Thought, IcotError> {
        if keyword.level != ThoughtLevel::Keyword {
            return Err(IcotError::WrongLevel {
                expected: ThoughtLevel::Keyword,
                got: keyword.level,
            });
        }
        let prompt = prompts::render(
            prompts::RESPONSE,
            &[
                ("record_id", self.record_id),
                ("category", &keyword.category),
                ("aspect", &aspect.text),
                ("keyword", &keyword.text),
            ],
        );
        let text = self.ask(prompt, ThoughtLevel::Response, &keyword.category, log, |p| {
            // the judgement has to name a candidate level
            match prompts::extract_level(&p.content) {
                Some(_) => Ok(p.content),
                None => Err(IcotError::EmptyContent { marker: "RESPONSE:" }),
            }
        })?;
        Ok(Thought {
            id: format!("{}/response", slug(&keyword.category)),
            level: ThoughtLevel::Response,
            category: keyword.category.clone(),
            text,
            parent_id: Some(keyword.id.clone()),
            importance: None,
        })
    }

    /// Aspect → keywords → response for one category. Generation failures
    /// yield whatever levels succeeded plus the error.
    fn category_chain(
        &self,
        category: &str,
        pairs: &[&QaPair],
    ) -> (Vec<Thought>, Vec<GenerationEntry>, Option<IcotError>) {
        let mut log = Vec::new();
        let mut out = Vec::new();
        let aspect = match self.generate_aspect(category, pairs, &mut log) {
            Ok(a) => a,
            Err(e) => return (out, log, Some(e)),
        };
        out.push(aspect.clone());
        let keywords = match self.extract_keywords(&aspect, &mut log) {
            Ok(k) => k,
            Err(e) => return (out, log, Some(e)),
        };
        out.extend(keywords.iter().cloned());
        // greedy: only the first keyword is carried forward
        match self.generate_response(&aspect, &keywords[0], &mut log) {
            Ok(r) => out.push(r),
            Err(e) => return (out, log, Some(e)),
        }
        (out, log, None)
    }
}

/// Generates candidate thoughts for every answered category of `record`.
///
/// Categories run concurrently; results are merged in category-name order.
/// Backend errors abort the run, parse failures only skip the category.
pub fn run_icot<B: LlmBackend + ?Sized>(
    record: &SurveyRecord,
    llm: &B,
    config: &IcotConfig,
) -> Result<CandidateThoughts, IcotError> {
    let icot = Icot::new(llm, config, &record.record_id);
    let pairs = record.effective_pairs();
    let mut categories: Vec<&str> = record.categories();
    categories.sort_unstable();

    let results: Vec<_> = categories
        .par_iter()
        .map(|c| (c.to_string(), icot.category_chain(c, &pairs)))
        .collect();

    let mut out = CandidateThoughts {
        record_id: record.record_id.clone(),
        thoughts: Vec::new(),
        generation_log: Vec::new(),
        failed_categories: Vec::new(),
    };
    for (category, (thoughts, log, err)) in results {
        out.generation_log.extend(log);
        match err {
            Some(IcotError::Backend(e)) => return Err(IcotError::Backend(e)),
            Some(e) => {
                log::warn!("record {}: {e}", record.record_id);
                if thoughts.is_empty() {
                    out.failed_categories.push(category);
                }
            }
            None => {}
        }
        out.thoughts.extend(thoughts);
    }
    if out.thoughts.is_empty() {
        return Err(IcotError::EmptyCandidates(record.record_id.clone()));
    }
    Ok(out)
}
