//! OpenAI-compatible chat-completions client.
//!
//! Posts `{model, messages, temperature, max_tokens}` and reads
//! `choices[0].message.content`, falling back to the top-level
//! `message.content` returned by some local runners.

use std::thread;
use std::time::{Duration, Instant};

use serde::{Deserialize, Serialize};
use serde_json::Value;

use super::{Completion, LlmBackend, LlmError, PromptRequest};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OpenAiConfig {
    /// Full chat-completions URL, e.g. `http://localhost:11434/v1/chat/completions`.
    pub url: String,
    pub model: String,
    #[serde(default)]
    pub api_key: Option<String>,
    #[serde(default = "default_timeout")]
    pub timeout_secs: u64,
}

fn default_timeout() -> u64 {
    120
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RetryPolicy {
    pub max_retries: u32,
    pub initial_backoff: Duration,
}

impl Default for RetryPolicy {
    fn default() -> Self {
        Self {
            max_retries: 3,
            initial_backoff: Duration::from_secs(1),
        }
    }
}

impl RetryPolicy {
    pub fn backoff(&self, attempt: u32) -> Duration {
        self.initial_backoff * 2u32.saturating_pow(attempt)
    }
}

pub struct OpenAiCompatible {
    config: OpenAiConfig,
    retry: RetryPolicy,
    agent: ureq::Agent,
    id: String,
}

#[derive(Serialize)]
struct ChatMessage<'a> {
    role: &'a str,
    content: &'a str,
}

#[derive(Serialize)]
struct ChatRequest<'a> {
    model: &'a str,
    messages: Vec<ChatMessage<'a>>,
    temperature: f64,
    max_tokens: u32,
    stream: bool,
    #[serde(skip_serializing_if = "Option::is_none")]
    seed: Option<u64>,
}

impl OpenAiCompatible {
    pub fn new(config: OpenAiConfig) -> Self {
        let agent: ureq::Agent = ureq::Agent::config_builder()
            .timeout_global(Some(Duration::from_secs(config.timeout_secs)))
            .http_status_as_error(false)
            .build()
            .into();
        let id = format!("openai-compatible:{}", config.model);
        Self {
            config,
            retry: RetryPolicy::default(),
            agent,
            id,
        }
    }

    pub fn with_retry(mut self, retry: RetryPolicy) -> Self {
        self.retry = retry;
        self
    }

    pub fn config(&self) -> &OpenAiConfig {
        &self.config
    }

    fn body<'a>(&'a self, req: &'a PromptRequest) -> ChatRequest<'a> {
        let mut messages = Vec::with_capacity(2);
        if !req.system.is_empty() {
            messages.push(ChatMessage {
                role: "system",
                content: &req.system,
            });
        }
        messages.push(ChatMessage {
            role: "user",
            content: &req.user,
        });
        ChatRequest {
            model: &self.config.model,
            messages,
            temperature: req.temperature,
            max_tokens: req.max_tokens,
            stream: false,
            seed: req.seed_hint,
        }
    }

    fn attempt(&self, req: &PromptRequest) -> Result<String, LlmError> {
        let mut call = self.agent.post(&self.config.url);
        if let Some(key) = &self.config.api_key {
            call = call.header("Authorization", format!("Bearer {key}"));
        }
        let mut resp = call.send_json(self.body(req)).map_err(|e| self.transport(e))?;
        let status = resp.status().as_u16();
        let text = resp
            .body_mut()
            .read_to_string()
            .map_err(|e| self.transport(e))?;
        if !(200..300).contains(&status) {
            return Err(LlmError::Status { status, body: text });
        }
        extract_content(&text)
    }

    fn transport(&self, e: ureq::Error) -> LlmError {
        match e {
            ureq::Error::Timeout(_) => {
                LlmError::Timeout(Duration::from_secs(self.config.timeout_secs))
            }
            ureq::Error::StatusCode(status) => LlmError::Status {
                status,
                body: String::new(),
            },
            ureq::Error::Io(_)
            | ureq::Error::HostNotFound
            | ureq::Error::ConnectionFailed
            | ureq::Error::Protocol(_) => LlmError::Transport {
                message: e.to_string(),
                retriable: true,
            },
            other => LlmError::Transport {
                message: other.to_string(),
                retriable: false,
            },
        }
    }
}

/// Pulls the assistant text out of a chat-completions response body.
pub(crate) fn extract_content(body: &str) -> Result<String, LlmError> {
    let v: Value = serde_json::from_str(body).map_err(|e| LlmError::Decode(e.to_string()))?;
    let content = v
        .pointer("/choices/0/message/content")
        .or_else(|| v.pointer("/message/content"))
        .and_then(Value::as_str)
        .ok_or_else(|| LlmError::Decode("no message content in response".into()))?;
    if content.trim().is_empty() {
        return Err(LlmError::EmptyCompletion);
    }
    Ok(content.to_string())
}

impl LlmBackend for OpenAiCompatible {
    fn id(&self) -> &str {
        &self.id
    }

    fn complete(&self, req: &PromptRequest) -> Result<Completion, LlmError> {
        req.validate()?;
        let start = Instant::now();
        let mut attempt = 0;
        loop {
            match self.attempt(req) {
                Ok(text) => {
                    return Ok(Completion {
                        text,
                        latency: start.elapsed().as_secs_f64(),
                        backend_id: self.id.clone(),
                    })
                }
                Err(e) if e.is_retriable() && attempt < self.retry.max_retries => {
                    let wait = self.retry.backoff(attempt);
                    log::warn!("{e}; retrying in {wait:?}");
                    thread::sleep(wait);
                    attempt += 1;
                }
                Err(e) => return Err(e),
            }
        }
    }
}
