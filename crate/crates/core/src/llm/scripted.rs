use std::collections::VecDeque;
use std::sync::Mutex;

use super::{Completion, LlmBackend, LlmError, PromptRequest};

type Responder = dyn Fn(&PromptRequest) -> Option<String> + Send + Sync;

/// Test backend driven by a closure or a fixed reply queue.
///
/// Every request is logged, so call counts can be asserted. A responder
/// returning `None` surfaces as a cassette miss for that request.
pub struct ScriptedBackend {
    responder: Box<Responder>,
    log: Mutex<Vec<PromptRequest>>,
}

impl ScriptedBackend {
    pub fn from_fn<F>(f: F) -> Self
    where
        F: Fn(&PromptRequest) -> Option<String> + Send + Sync + 'static,
    {
        Self {
            responder: Box::new(f),
            log: Mutex::new(Vec::new()),
        }
    }

    /// Replies with `replies` in order, regardless of the request.
    pub fn sequence<I, S>(replies: I) -> Self
    where
        I: IntoIterator<Item = S>,
        S: Into<String>,
    {
        let queue: Mutex<VecDeque<String>> =
            Mutex::new(replies.into_iter().map(Into::into).collect());
        Self::from_fn(move |_| queue.lock().expect("queue lock").pop_front())
    }

    /// Replies with the first rule whose needle occurs in the user prompt.
    pub fn rules<I, S, T>(rules: I) -> Self
    where
        I: IntoIterator<Item = (S, T)>,
        S: Into<String>,
        T: Into<String>,
    {
        let rules: Vec<(String, String)> = rules
            .into_iter()
            .map(|(k, v)| (k.into(), v.into()))
            .collect();
        Self::from_fn(move |r| {
            rules
                .iter()
                .find(|(needle, _)| r.user.contains(needle.as_str()))
                .map(|(_, reply)| reply.clone())
        })
    }

    pub fn calls(&self) -> usize {
        self.log.lock().expect("log lock").len()
    }

    pub fn requests(&self) -> Vec<PromptRequest> {
        self.log.lock().expect("log lock").clone()
    }
}

impl LlmBackend for ScriptedBackend {
    fn id(&self) -> &str {
        "scripted"
    }

    fn complete(&self, req: &PromptRequest) -> Result<Completion, LlmError> {
        req.validate()?;
        self.log.lock().expect("log lock").push(req.clone());
        let text = (self.responder)(req).ok_or_else(|| LlmError::CassetteMiss(req.fingerprint()))?;
        if text.trim().is_empty() {
            return Err(LlmError::EmptyCompletion);
        }
        Ok(Completion {
            text,
            latency: 0.0,
            backend_id: "scripted".into(),
        })
    }
}
