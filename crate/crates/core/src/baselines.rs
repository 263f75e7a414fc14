//! Comparison strategies: zero-shot IO, chain-of-thought, self-consistency
//! chain-of-thought, and a simplified breadth-limited tree-of-thoughts.
//!
//! All of them see only a record's effective pairs and talk to the same
//! backend contract. Repeated samples of one prompt are issued in sequence,
//! so replaying a cassette hands each sample the same recorded completion
//! every time.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::forest::majority_vote;
use crate::llm::{LlmBackend, LlmError, PromptRequest, GENERATION_TEMPERATURE, EXTRACTION_TEMPERATURE};
use crate::prompts::{self, formats};
use crate::survey::{MentalState, SurveyRecord};
use crate::trace::{call, CallRecord};

#[derive(Debug, Error)]
pub enum BaselineError {
    #[error("{strategy} reply has no usable level: {raw:?}")]
    Unparseable { strategy: &'static str, raw: String },
    #[error("invalid strategy configuration: {0}")]
    Config(String),
    #[error(transparent)]
    Backend(#[from] LlmError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Baseline {
    Io,
    Cot,
    ScCot { n_chains: usize },
    Tot { breadth: usize, depth: usize },
}

impl Baseline {
    pub fn name(&self) -> &'static str {
        match self {
            Self::Io => "io",
            Self::Cot => "cot",
            Self::ScCot { .. } => "sc_cot",
            Self::Tot { .. } => "tot",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StrategyConfig {
    pub baseline: Baseline,
    pub generation_temperature: f64,
    pub extraction_temperature: f64,
    /// Forwarded to backends that support seeded sampling.
    pub seed: Option<u64>,
}

pub const DEFAULT_CHAINS: usize = 5;
pub const DEFAULT_BREADTH: usize = 3;
pub const DEFAULT_DEPTH: usize = 2;

impl StrategyConfig {
    pub fn new(baseline: Baseline) -> Self {
        Self {
            baseline,
            generation_temperature: GENERATION_TEMPERATURE,
            extraction_temperature: EXTRACTION_TEMPERATURE,
            seed: None,
        }
    }

    pub fn validate(&self) -> Result<(), BaselineError> {
        match self.baseline {
            Baseline::ScCot { n_chains: 0 } => Err(BaselineError::Config("n_chains must be ≥ 1".into())),
            Baseline::Tot { breadth: 0, .. } => Err(BaselineError::Config("breadth must be ≥ 1".into())),
            Baseline::Tot { depth: 0, .. } => Err(BaselineError::Config("depth must be ≥ 1".into())),
            _ => Ok(()),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BaselineOutcome {
    pub label: MentalState,
    pub calls: Vec<CallRecord>,
}

fn pairs_text(record: &SurveyRecord) -> String {
    prompts::format_pairs(record.effective_pairs())
}

fn request(cfg: &StrategyConfig, user: String, temperature: f64, salt: u64) -> PromptRequest {
    let req = PromptRequest::new(prompts::system_prompt(), user).temperature(temperature);
    match cfg.seed {
        Some(s) => req.seed_hint(s.wrapping_add(salt)),
        None => req,
    }
}

/// The chain-of-thought prompt, optionally continuing earlier reasoning.
pub fn cot_prompt(record: &SurveyRecord, so_far: &[String]) -> String {
    let context = if so_far.is_empty() {
        String::new()
    } else {
        format!(
            "Reasoning so far:\n{}\n",
            prompts::format_steps(so_far.iter().map(String::as_str))
        )
    };
    prompts::render(
        prompts::COT,
        &[
            ("record_id", &record.record_id),
            ("pairs", &pairs_text(record)),
            ("context", &context),
        ],
    )
}

/// Reasoning lines of a chain-of-thought reply, without its `FINAL:` line.
pub fn reasoning_lines(raw: &str) -> Vec<String> {
    raw.lines()
        .map(str::trim)
        .filter(|l| !l.is_empty() && !l.to_ascii_lowercase().starts_with("final:"))
        .map(str::to_string)
        .collect()
}

/// Numeric rating from a `SCORE:` reply; unparseable replies rate 0.
pub fn parse_score(raw: &str) -> f64 {
    prompts::after_marker(raw, "SCORE:")
        .and_then(|s| {
            let num: String = s
                .chars()
                .skip_while(|c| !c.is_ascii_digit())
                .take_while(|c| c.is_ascii_digit() || *c == '.')
                .collect();
            num.parse::<f64>().ok()
        })
        .unwrap_or(0.0)
}

pub fn io_predict<B: LlmBackend + ?Sized>(
    record: &SurveyRecord,
    llm: &B,
    cfg: &StrategyConfig,
) -> Result<BaselineOutcome, BaselineError> {
    let user = prompts::render(
        prompts::IO,
        &[("record_id", &record.record_id), ("pairs", &pairs_text(record))],
    );
    let req = request(cfg, user, cfg.extraction_temperature, 0).max_tokens(8);
    let c = call(llm, &req, "io", formats::IO)?;
    let label = prompts::extract_level(&c.raw).ok_or_else(|| BaselineError::Unparseable {
        strategy: "io",
        raw: c.raw.clone(),
    })?;
    Ok(BaselineOutcome { label, calls: vec![c] })
}

fn one_chain<B: LlmBackend + ?Sized>(
    record: &SurveyRecord,
    llm: &B,
    cfg: &StrategyConfig,
    salt: u64,
) -> Result<(Option<MentalState>, CallRecord), BaselineError> {
    let req = request(cfg, cot_prompt(record, &[]), cfg.generation_temperature, salt);
    let c = call(llm, &req, "cot", formats::COT)?;
    Ok((prompts::parse_final(&c.raw), c))
}

pub fn cot_predict<B: LlmBackend + ?Sized>(
    record: &SurveyRecord,
    llm: &B,
    cfg: &StrategyConfig,
) -> Result<BaselineOutcome, BaselineError> {
    let (label, c) = one_chain(record, llm, cfg, 0)?;
    let label = label.ok_or_else(|| BaselineError::Unparseable {
        strategy: "cot",
        raw: c.raw.clone(),
    })?;
    Ok(BaselineOutcome { label, calls: vec![c] })
}

/// `n_chains` chain-of-thought samples and a vote over their final levels.
/// Chains without a `FINAL:` line abstain.
pub fn sc_cot_predict<B: LlmBackend + ?Sized>(
    record: &SurveyRecord,
    llm: &B,
    cfg: &StrategyConfig,
    n_chains: usize,
) -> Result<BaselineOutcome, BaselineError> {
    if n_chains == 0 {
        return Err(BaselineError::Config("n_chains must be ≥ 1".into()));
    }
    let mut calls = Vec::with_capacity(n_chains);
    let mut votes = Vec::with_capacity(n_chains);
    for i in 0..n_chains {
        let (label, c) = one_chain(record, llm, cfg, i as u64)?;
        if let Some(l) = label {
            votes.push((l, 1.0));
        }
        calls.push(c);
    }
    let label = majority_vote(&votes).ok_or_else(|| BaselineError::Unparseable {
        strategy: "sc_cot",
        raw: calls.last().map(|c| c.raw.clone()).unwrap_or_default(),
    })?;
    Ok(BaselineOutcome { label, calls })
}

/// Breadth-limited best-first search over chain-of-thought continuations.
///
/// Each level samples `breadth` chains continuing the best reasoning so
/// far, rates every chain with a value prompt, and keeps the top-rated one
/// (first wins ties). The answer is the surviving chain's `FINAL:` level,
/// so a single path of one level answers exactly as chain-of-thought does.
/// Only when that line is missing does one label-extraction call read the
/// surviving reasoning. Backend calls: `depth × 2 × breadth`, plus one for
/// the fallback.
pub fn tot_predict<B: LlmBackend + ?Sized>(
    record: &SurveyRecord,
    llm: &B,
    cfg: &StrategyConfig,
    breadth: usize,
    depth: usize,
) -> Result<BaselineOutcome, BaselineError> {
    if breadth == 0 || depth == 0 {
        return Err(BaselineError::Config("breadth and depth must be ≥ 1".into()));
    }
    let pairs = pairs_text(record);
    let mut calls = Vec::new();
    let mut best: Vec<String> = Vec::new();
    let mut best_final = None;
    for level in 0..depth {
        let prompt = cot_prompt(record, &best);
        let mut candidates = Vec::with_capacity(breadth);
        for b in 0..breadth {
            let salt = (level * breadth + b) as u64;
            let req = request(cfg, prompt.clone(), cfg.generation_temperature, salt);
            let c = call(llm, &req, "tot_generate", formats::COT)?;
            candidates.push((reasoning_lines(&c.raw), prompts::parse_final(&c.raw)));
            calls.push(c);
        }
        let mut best_idx = 0;
        let mut best_score = f64::NEG_INFINITY;
        for (i, (lines, _)) in candidates.iter().enumerate() {
            let user = prompts::render(
                prompts::TOT_VALUE,
                &[
                    ("record_id", &record.record_id),
                    ("pairs", &pairs),
                    ("candidate", &prompts::format_steps(lines.iter().map(String::as_str))),
                ],
            );
            let req = request(cfg, user, cfg.extraction_temperature, 0).max_tokens(16);
            let c = call(llm, &req, "tot_value", formats::TOT_VALUE)?;
            let score = parse_score(&c.raw);
            calls.push(c);
            if score > best_score {
                best_score = score;
                best_idx = i;
            }
        }
        (best, best_final) = candidates.swap_remove(best_idx);
    }
    if let Some(label) = best_final {
        return Ok(BaselineOutcome { label, calls });
    }
    let mut req = prompts::label_request(&record.record_id, best.iter().map(String::as_str))
        .temperature(cfg.extraction_temperature);
    if let Some(s) = cfg.seed {
        req = req.seed_hint(s);
    }
    let c = call(llm, &req, "label", formats::LABEL)?;
    let label = prompts::parse_label_reply(&c.raw).ok_or_else(|| BaselineError::Unparseable {
        strategy: "tot",
        raw: c.raw.clone(),
    })?;
    calls.push(c);
    Ok(BaselineOutcome { label, calls })
}

pub fn run_baseline<B: LlmBackend + ?Sized>(
    record: &SurveyRecord,
    llm: &B,
    cfg: &StrategyConfig,
) -> Result<BaselineOutcome, BaselineError> {
    cfg.validate()?;
    match cfg.baseline {
        Baseline::Io => io_predict(record, llm, cfg),
        Baseline::Cot => cot_predict(record, llm, cfg),
        Baseline::ScCot { n_chains } => sc_cot_predict(record, llm, cfg, n_chains),
        Baseline::Tot { breadth, depth } => tot_predict(record, llm, cfg, breadth, depth),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::llm::ScriptedBackend;
    use crate::survey::QaPair;
    use MentalState::*;

    fn record() -> SurveyRecord {
        SurveyRecord::new(
            "r1",
            vec![
                QaPair::new(0, "economics", "Income?", Some("stable")),
                QaPair::new(1, "health", "Health?", None),
                QaPair::new(2, "family", "Married?", Some("yes")),
            ],
            Happy,
        )
        .unwrap()
    }

    fn cfg(b: Baseline) -> StrategyConfig {
        StrategyConfig::new(b)
    }

    #[test]
    fn io_parsing() {
        let r = record();
        let ok = |reply: &'static str| {
            io_predict(&r, &ScriptedBackend::sequence([reply]), &cfg(Baseline::Io)).map(|o| o.label)
        };
        assert_eq!(ok("4").unwrap(), Happy);
        assert_eq!(ok("Label: 5").unwrap(), VeryHappy);
        assert!(matches!(ok("banana"), Err(BaselineError::Unparseable { .. })));
    }

    #[test]
    fn io_prompt_uses_effective_pairs_only() {
        let llm = ScriptedBackend::sequence(["3"]);
        io_predict(&record(), &llm, &cfg(Baseline::Io)).unwrap();
        let p = &llm.requests()[0].user;
        assert!(p.contains("Income? -> stable") && !p.contains("Health?"));
    }

    #[test]
    fn cot_final_marker() {
        let r = record();
        let llm = ScriptedBackend::sequence(["step one\nstep two\nFINAL: 3"]);
        assert_eq!(cot_predict(&r, &llm, &cfg(Baseline::Cot)).unwrap().label, Neutral);
        let llm = ScriptedBackend::sequence(["I think 4"]);
        assert!(cot_predict(&r, &llm, &cfg(Baseline::Cot)).is_err());
    }

    #[test]
    fn sc_cot_votes_and_counts() {
        let r = record();
        let llm = ScriptedBackend::sequence(["a\nFINAL: 4", "b\nFINAL: 4", "c\nFINAL: 5"]);
        let out = sc_cot_predict(&r, &llm, &cfg(Baseline::Cot), 3).unwrap();
        assert_eq!(out.label, Happy);
        for n in [1, 2, 7] {
            let llm = ScriptedBackend::from_fn(|_| Some("x\nFINAL: 2".into()));
            sc_cot_predict(&r, &llm, &cfg(Baseline::Cot), n).unwrap();
            assert_eq!(llm.calls(), n);
        }
    }

    #[test]
    fn sc_cot_single_chain_is_cot() {
        let r = record();
        let a = ScriptedBackend::sequence(["why\nFINAL: 2"]);
        let b = ScriptedBackend::sequence(["why\nFINAL: 2"]);
        let x = cot_predict(&r, &a, &cfg(Baseline::Cot)).unwrap();
        let y = sc_cot_predict(&r, &b, &cfg(Baseline::Cot), 1).unwrap();
        assert_eq!(x.label, y.label);
        assert_eq!(a.requests(), b.requests());
    }

    #[test]
    fn tot_argmax_and_call_count() {
        let r = record();
        let llm = ScriptedBackend::from_fn(|req| {
            Some(if req.user.contains("SCORE: <") {
                if req.user.contains("second") { "SCORE: 9" } else { "SCORE: 3" }.into()
            } else if req.user.contains("LABEL: <") {
                if req.user.contains("second") { "LABEL: 5" } else { "LABEL: 1" }.into()
            } else {
                let n = req.seed_hint.unwrap_or(0);
                if n % 2 == 0 { "first thought\nFINAL: 1" } else { "second thought\nFINAL: 5" }.into()
            })
        });
        let mut c = cfg(Baseline::Tot { breadth: 2, depth: 1 });
        c.seed = Some(0);
        let out = tot_predict(&r, &llm, &c, 2, 1).unwrap();
        assert_eq!(out.label, VeryHappy);
        assert_eq!(llm.calls(), 2 * 2);

        for (b, d) in [(1, 1), (3, 2), (2, 3)] {
            let llm = ScriptedBackend::from_fn(|req| {
                Some(if req.user.contains("SCORE: <") { "SCORE: 5" } else if req.user.contains("LABEL: <") { "LABEL: 3" } else { "x\nFINAL: 3" }.into())
            });
            tot_predict(&r, &llm, &cfg(Baseline::Cot), b, d).unwrap();
            assert_eq!(llm.calls(), d * 2 * b);
        }
    }

    #[test]
    fn tot_reads_reasoning_when_final_is_missing() {
        let r = record();
        let llm = ScriptedBackend::from_fn(|req| {
            Some(if req.user.contains("SCORE: <") { "SCORE: 5" } else if req.user.contains("LABEL: <") { "LABEL: 2" } else { "no verdict yet" }.into())
        });
        let out = tot_predict(&r, &llm, &cfg(Baseline::Cot), 2, 2).unwrap();
        assert_eq!(out.label, Unhappy);
        assert_eq!(llm.calls(), 2 * 2 * 2 + 1);
        assert!(llm.requests().last().unwrap().user.contains("1. no verdict yet"));
    }

    #[test]
    fn tot_single_path_shares_cot_request() {
        let r = record();
        let llm = ScriptedBackend::from_fn(|req| {
            Some(if req.user.contains("SCORE: <") { "SCORE: 5" } else if req.user.contains("LABEL: <") { "LABEL: 4" } else { "stable income\nFINAL: 4" }.into())
        });
        let t = tot_predict(&r, &llm, &cfg(Baseline::Cot), 1, 1).unwrap();
        let cot = ScriptedBackend::sequence(["stable income\nFINAL: 4"]);
        let c = cot_predict(&r, &cot, &cfg(Baseline::Cot)).unwrap();
        assert_eq!(llm.requests()[0], cot.requests()[0]);
        assert_eq!(t.label, c.label);
        assert_eq!(t.calls[0].raw, c.calls[0].raw);
        // later levels carry the best reasoning forward
        let deep = ScriptedBackend::from_fn(|req| {
            Some(if req.user.contains("SCORE: <") { "SCORE: 5" } else if req.user.contains("LABEL: <") { "LABEL: 4" } else { "stable income\nFINAL: 4" }.into())
        });
        tot_predict(&r, &deep, &cfg(Baseline::Cot), 1, 2).unwrap();
        assert!(deep.requests()[2].user.contains("Reasoning so far:\n1. stable income"));
    }

    #[test]
    fn config_validation() {
        assert!(cfg(Baseline::ScCot { n_chains: 0 }).validate().is_err());
        assert!(cfg(Baseline::Tot { breadth: 0, depth: 1 }).validate().is_err());
        assert!(cfg(Baseline::Tot { breadth: 1, depth: 0 }).validate().is_err());
        assert!(cfg(Baseline::Tot { breadth: 3, depth: 2 }).validate().is_ok());
    }

    #[test]
    fn score_parsing() {
        assert_eq!(parse_score("SCORE: 7"), 7.0);
        assert_eq!(parse_score("score: 8/10"), 8.0);
        assert_eq!(parse_score("great"), 0.0);
    }
}
