//! Per-call audit records shared by every strategy.

use serde::{Deserialize, Serialize};

use crate::llm::{LlmBackend, LlmError, PromptRequest};
use crate::metrics::format_consistency;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CallRecord {
    /// What the call was for, e.g. `cot` or `tot_value`.
    pub kind: String,
    pub fingerprint: String,
    pub prompt: String,
    pub raw: String,
    /// Format consistency of `raw` against the expected reply skeleton.
    pub consistency: f64,
    /// Seconds spent in the backend.
    pub latency: f64,
}

/// Sends `req` and records the exchange.
pub fn call<B: LlmBackend + ?Sized>(
    llm: &B,
    req: &PromptRequest,
    kind: &str,
    format: &str,
) -> Result<CallRecord, LlmError> {
    let c = llm.complete(req)?;
    Ok(CallRecord {
        kind: kind.to_string(),
        fingerprint: req.fingerprint(),
        prompt: req.user.clone(),
        consistency: format_consistency(&c.text, format),
        raw: c.text,
        latency: c.latency,
    })
}

/// Mean consistency over `calls`, or 1 when there are none.
pub fn mean_consistency<'a, I>(calls: I) -> f64
where
    I: IntoIterator<Item = &'a CallRecord>,
{
    let (sum, n) = calls
        .into_iter()
        .fold((0.0, 0usize), |(s, n), c| (s + c.consistency, n + 1));
    if n == 0 {
        1.0
    } else {
        sum / n as f64
    }
}

pub fn total_latency<'a, I>(calls: I) -> f64
where
    I: IntoIterator<Item = &'a CallRecord>,
{
    calls.into_iter().map(|c| c.latency).sum()
}
