//! Backend-agnostic completion contract.
//!
//! Every strategy talks to an [`LlmBackend`]. Implementations:
//!
//! * [`OpenAiCompatible`]: live chat-completions endpoint (local model
//!   runners, hosted APIs).
//! * [`ReplayBackend`] / [`RecordingBackend`]: cassette replay and capture.
//! * [`ScriptedBackend`]: closure-driven backend for tests.
//! * [`LexiconBackend`]: a deterministic rule-based respondent model used to
//!   produce the shipped fixtures.

mod cassette;
mod openai;
mod scripted;
mod simulated;

use std::fmt::Write as _;
use std::sync::Arc;
use std::time::Duration;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

pub use cassette::{Cassette, RecordingBackend, ReplayBackend};
pub use openai::{OpenAiCompatible, OpenAiConfig, RetryPolicy};
pub use scripted::ScriptedBackend;
pub use simulated::LexiconBackend;

/// Sampling temperature for thought generation and reasoning chains.
pub const GENERATION_TEMPERATURE: f64 = 0.7;
/// Sampling temperature for final label extraction.
pub const EXTRACTION_TEMPERATURE: f64 = 0.0;

#[derive(Debug, Error)]
pub enum LlmError {
    #[error("transport error: {message}")]
    Transport { message: String, retriable: bool },
    #[error("request timed out after {0:?}")]
    Timeout(Duration),
    #[error("backend returned HTTP {status}: {body}")]
    Status { status: u16, body: String },
    #[error("malformed backend response: {0}")]
    Decode(String),
    #[error("backend returned an empty completion")]
    EmptyCompletion,
    #[error("cassette has no recorded completion for fingerprint {0}")]
    CassetteMiss(String),
    #[error("cassette persistence failed: {0}")]
    Persistence(#[from] std::io::Error),
    #[error("invalid request: {0}")]
    InvalidRequest(String),
}

impl LlmError {
    pub fn is_retriable(&self) -> bool {
        match self {
            LlmError::Transport { retriable, .. } => *retriable,
            LlmError::Timeout(_) => true,
            _ => false,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PromptRequest {
    pub system: String,
    pub user: String,
    pub temperature: f64,
    pub max_tokens: u32,
    #[serde(default)]
    pub seed_hint: Option<u64>,
}

impl PromptRequest {
    pub fn new(system: impl Into<String>, user: impl Into<String>) -> Self {
        Self {
            system: system.into(),
            user: user.into(),
            temperature: GENERATION_TEMPERATURE,
            max_tokens: 512,
            seed_hint: None,
        }
    }

    pub fn temperature(mut self, t: f64) -> Self {
        self.temperature = t;
        self
    }

    pub fn max_tokens(mut self, n: u32) -> Self {
        self.max_tokens = n;
        self
    }

    pub fn seed_hint(mut self, seed: u64) -> Self {
        self.seed_hint = Some(seed);
        self
    }

    pub fn validate(&self) -> Result<(), LlmError> {
        if self.user.trim().is_empty() {
            return Err(LlmError::InvalidRequest("user prompt is empty".into()));
        }
        if !(0.0..=2.0).contains(&self.temperature) {
            return Err(LlmError::InvalidRequest(format!(
                "temperature {} outside [0, 2]",
                self.temperature
            )));
        }
        if self.max_tokens == 0 {
            return Err(LlmError::InvalidRequest("max_tokens must be positive".into()));
        }
        Ok(())
    }

    /// Stable key for cassettes. Only `system`, `user` and `temperature`
    /// participate, hashed in a canonical sorted-key JSON form.
    pub fn fingerprint(&self) -> String {
        let canonical = serde_json::json!({
            "system": self.system,
            "temperature": self.temperature,
            "user": self.user,
        });
        let digest = Sha256::digest(canonical.to_string().as_bytes());
        let mut out = String::with_capacity(32);
        for b in &digest[..16] {
            let _ = write!(out, "{b:02x}");
        }
        out
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Completion {
    pub text: String,
    /// Seconds spent inside the backend.
    pub latency: f64,
    pub backend_id: String,
}

pub trait LlmBackend: Send + Sync {
    fn id(&self) -> &str;

    fn complete(&self, req: &PromptRequest) -> Result<Completion, LlmError>;
}

impl<T: LlmBackend + ?Sized> LlmBackend for &T {
    fn id(&self) -> &str {
        (**self).id()
    }
    fn complete(&self, req: &PromptRequest) -> Result<Completion, LlmError> {
        (**self).complete(req)
    }
}

impl<T: LlmBackend + ?Sized> LlmBackend for Arc<T> {
    fn id(&self) -> &str {
        (**self).id()
    }
    fn complete(&self, req: &PromptRequest) -> Result<Completion, LlmError> {
        (**self).complete(req)
    }
}

impl<T: LlmBackend + ?Sized> LlmBackend for Box<T> {
    fn id(&self) -> &str {
        (**self).id()
    }
    fn complete(&self, req: &PromptRequest) -> Result<Completion, LlmError> {
        (**self).complete(req)
    }
}
